//! Exact polynomials in `(r, y_1, .., y_k)` with rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Exponents = [u32; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

/// Variable 0 is `r`, variables `1..nvars` are the tangential coordinates.
/// Zero coefficients are never stored, so structural equality is equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyField {
    nvars: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational value of a finite float.
pub fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

impl PolyField {
    pub fn zero(nvars: usize) -> Self {
        assert!((1..=4).contains(&nvars), "between 1 and 4 variables");
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        Self::monomial(nvars, c, [0; 4])
    }

    pub fn monomial(nvars: usize, c: BigRational, exps: Exponents) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(exps, c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = [0; 4];
        e[i] = 1;
        Self::monomial(nvars, BigRational::one(), e)
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponents, BigRational)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, e: Exponents, c: BigRational) {
        debug_assert!(e[self.nvars..].iter().all(|&x| x == 0));
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(e).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, e: &Exponents) -> BigRational {
        self.terms.get(e).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn parity(&self, var: usize) -> Parity {
        let even = self.terms.keys().all(|e| e[var] % 2 == 0);
        let odd = self.terms.keys().all(|e| e[var] % 2 == 1);
        match (even, odd) {
            (true, _) => Parity::Even,
            (_, true) => Parity::Odd,
            _ => Parity::Mixed,
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(e, v)| (*e, v * c)))
    }

    pub fn derivative(&self, var: usize) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms.iter().filter(|(e, _)| e[var] > 0).map(|(e, v)| {
                let mut f = *e;
                f[var] -= 1;
                (f, v * BigRational::from_integer(BigInt::from(e[var])))
            }),
        )
    }

    /// Exact quotient by `x_var`; fails unless every term contains it.
    pub fn div_by_var(&self, var: usize) -> Result<Self> {
        if self.terms.keys().any(|e| e[var] == 0) {
            return Err(Error::ParityViolation(var));
        }
        Ok(Self::from_terms(
            self.nvars,
            self.terms.iter().map(|(e, v)| {
                let mut f = *e;
                f[var] -= 1;
                (f, v.clone())
            }),
        ))
    }

    pub fn eval_exact(&self, x: &[BigRational]) -> BigRational {
        assert_eq!(x.len(), self.nvars);
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &p) in x.iter().zip(e) {
                if p > 0 {
                    t *= num_traits::pow(xi.clone(), p as usize);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = c.to_f64().unwrap_or(f64::NAN);
                for i in 0..self.nvars {
                    t *= x[i].powi(e[i] as i32);
                }
                t
            })
            .sum()
    }

    pub fn gradient(&self) -> Vec<PolyField> {
        (0..self.nvars).map(|i| self.derivative(i)).collect()
    }

    /// Parse the monomial-list format: one `num/den e_r e_y1 .. e_yk` per
    /// line (`num` alone for integers), `#` comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nvars = None;
        let mut terms = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse(format!("line {}: {m}", ln + 1));
            let mut it = line.split_whitespace();
            let coef = it.next().ok_or_else(|| bad("empty"))?;
            let c = match coef.split_once('/') {
                Some((n, d)) => {
                    let n: BigInt = n.parse().map_err(|_| bad("bad numerator"))?;
                    let d: BigInt = d.parse().map_err(|_| bad("bad denominator"))?;
                    if d.is_zero() {
                        return Err(bad("zero denominator"));
                    }
                    BigRational::new(n, d)
                }
                None => BigRational::from_integer(coef.parse().map_err(|_| bad("bad coefficient"))?),
            };
            let exps: Vec<u32> = it
                .map(|s| s.parse::<u32>().map_err(|_| bad("bad exponent")))
                .collect::<Result<_>>()?;
            if exps.is_empty() || exps.len() > 4 {
                return Err(bad("need between 1 and 4 exponents"));
            }
            match nvars {
                None => nvars = Some(exps.len()),
                Some(n) if n != exps.len() => return Err(bad("inconsistent number of exponents")),
                _ => {}
            }
            let mut e = [0; 4];
            e[..exps.len()].copy_from_slice(&exps);
            terms.push((e, c));
        }
        let nvars = nvars.ok_or_else(|| Error::Parse("no terms".into()))?;
        Ok(Self::from_terms(nvars, terms))
    }

    /// Inverse of [`PolyField::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.terms {
            s.push_str(&format!("{}/{}", c.numer(), c.denom()));
            for p in &e[..self.nvars] {
                s.push_str(&format!(" {p}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn is_nonnegative_at(&self, x: &[BigRational]) -> bool {
        !self.eval_exact(x).is_negative()
    }
}

impl fmt::Display for PolyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let names = ["r", "y1", "y2", "y3"];
        for (n, (e, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for i in 0..self.nvars {
                match e[i] {
                    0 => {}
                    1 => write!(f, "*{}", names[i])?,
                    p => write!(f, "*{}^{p}", names[i])?,
                }
            }
        }
        Ok(())
    }
}

impl Add for &PolyField {
    type Output = PolyField;
    fn add(self, o: &PolyField) -> PolyField {
        assert_eq!(self.nvars, o.nvars);
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(*e, c.clone());
        }
        p
    }
}

impl Sub for &PolyField {
    type Output = PolyField;
    fn sub(self, o: &PolyField) -> PolyField {
        self + &(-o)
    }
}

impl Neg for &PolyField {
    type Output = PolyField;
    fn neg(self) -> PolyField {
        PolyField::from_terms(self.nvars, self.terms.iter().map(|(e, c)| (*e, -c)))
    }
}

impl Mul for &PolyField {
    type Output = PolyField;
    fn mul(self, o: &PolyField) -> PolyField {
        assert_eq!(self.nvars, o.nvars);
        let mut p = PolyField::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let mut e = [0; 4];
                for i in 0..4 {
                    e[i] = e1[i] + e2[i];
                }
                p.add_term(e, c1 * c2);
            }
        }
        p
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for PolyField {
            type Output = PolyField;
            fn $m(self, o: PolyField) -> PolyField {
                (&self).$m(&o)
            }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);
