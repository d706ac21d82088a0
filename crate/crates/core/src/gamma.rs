//! Bakry–Émery calculus for sums of Bessel operators, exactly on polynomials
//! and approximately on grid fields.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryData, ScalarField};
use crate::grid::Mesh;
use crate::operator::apply_operator_interior;
use crate::params::WeinsteinParams;
use crate::poly::{rational, rational_from_f64, Exponents, Parity, PolyField};

/// `B = sum_i (d_ii + (a_i / x_i) d_i)`, one factor per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselWeights {
    a: Vec<f64>,
}

impl BesselWeights {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() > 4 {
            return Err(Error::InvalidParams("need between 1 and 4 factors".into()));
        }
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParams(format!("weights must be finite and >= 0: {a:?}")));
        }
        Ok(Self { a })
    }

    /// `(a, 0, .., 0)`: the Weinstein operator as a sum of Bessel factors.
    pub fn weinstein(params: &WeinsteinParams) -> Self {
        let mut a = vec![0.0; params.k + 1];
        a[0] = params.a;
        Self { a }
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Curvature-dimension constant `n + sum a_i`.
    pub fn dimension(&self) -> f64 {
        self.a.len() as f64 + self.a.iter().sum::<f64>()
    }

    fn exact_dimension(&self) -> BigRational {
        self.a
            .iter()
            .fold(rational_from_f64(self.a.len() as f64), |s, a| s + rational_from_f64(*a))
    }

    fn check(&self, u: &PolyField) {
        assert_eq!(u.nvars(), self.a.len(), "polynomial arity must match the factors");
    }
}

fn require_even(u: &PolyField, w: &BesselWeights) -> Result<()> {
    for (i, a) in w.a.iter().enumerate() {
        if *a > 0.0 && u.parity(i) != Parity::Even {
            return Err(Error::ParityViolation(i));
        }
    }
    Ok(())
}

/// `B_a u`, exact. Weighted factors need `u` even in their variable.
pub fn bessel_apply(u: &PolyField, w: &BesselWeights) -> Result<PolyField> {
    w.check(u);
    require_even(u, w)?;
    let mut out = PolyField::zero(u.nvars());
    for (i, a) in w.a.iter().enumerate() {
        let di = u.derivative(i);
        out = &out + &di.derivative(i);
        if *a > 0.0 {
            out = &out + &di.div_by_var(i)?.scale(&rational_from_f64(*a));
        }
    }
    Ok(out)
}

pub fn gamma_bilinear(u: &PolyField, v: &PolyField) -> PolyField {
    (0..u.nvars()).fold(PolyField::zero(u.nvars()), |s, i| {
        &s + &(&u.derivative(i) * &v.derivative(i))
    })
}

/// Carré du champ `Gamma(u) = |grad u|^2` (additive over the factors).
pub fn gamma(u: &PolyField, w: &BesselWeights) -> PolyField {
    w.check(u);
    gamma_bilinear(u, u)
}

/// `Gamma_2(u) = (B Gamma(u) - 2 Gamma(u, B u)) / 2`, from the definition.
pub fn gamma2(u: &PolyField, w: &BesselWeights) -> Result<PolyField> {
    let bu = bessel_apply(u, w)?;
    let lg = bessel_apply(&gamma(u, w), w)?;
    let cross = gamma_bilinear(u, &bu).scale(&rational_from_f64(2.0));
    Ok((&lg - &cross).scale(&rational_from_f64(0.5)))
}

/// `|Hess u|^2 + sum a_i q_i^2` with `d_i u = x_i q_i`.
pub fn gamma2_closed_form(u: &PolyField, w: &BesselWeights) -> Result<PolyField> {
    w.check(u);
    require_even(u, w)?;
    let n = u.nvars();
    let mut out = PolyField::zero(n);
    for i in 0..n {
        let di = u.derivative(i);
        for j in 0..n {
            let dij = di.derivative(j);
            out = &out + &(&dij * &dij);
        }
        if w.a[i] > 0.0 {
            let q = di.div_by_var(i)?;
            out = &out + &(&q * &q).scale(&rational_from_f64(w.a[i]));
        }
    }
    Ok(out)
}

/// `Gamma_2(u) - (B u)^2 / (n + sum a_i)`, nonnegative by the CD inequality.
pub fn cd_defect(u: &PolyField, w: &BesselWeights) -> Result<PolyField> {
    let g2 = gamma2(u, w)?;
    let bu = bessel_apply(u, w)?;
    let inv = BigRational::from_integer(1.into()) / w.exact_dimension();
    Ok(&g2 - &(&bu * &bu).scale(&inv))
}

/// `sum A_i^2 / w_i - (sum A_i)^2 / sum w_i`, computed as the equivalent
/// weighted variance `sum w_i (A_i / w_i - lambda)^2`, `lambda = sum A / sum w`.
pub fn elementary_inequality_gap(w: &[f64], a: &[f64]) -> Result<f64> {
    if w.is_empty() || w.len() != a.len() || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParams("need matching positive weights".into()));
    }
    let lambda = a.iter().sum::<f64>() / w.iter().sum::<f64>();
    Ok(w.iter().zip(a).map(|(w, a)| w * (a / w - lambda).powi(2)).sum())
}

/// Random polynomial of total degree `<= degree`, even in every weighted
/// variable, with coefficients `m / 8`, `|m| <= 8`.
pub fn random_even_polynomial(rng: &mut impl Rng, w: &BesselWeights, degree: u32) -> PolyField {
    let n = w.len();
    let mut terms = Vec::new();
    let mut e: Exponents = [0; 4];
    loop {
        let total: u32 = e.iter().sum();
        let even = (0..n).all(|i| w.weights()[i] == 0.0 || e[i].is_multiple_of(2));
        if total <= degree && even && rng.gen_bool(0.6) {
            terms.push((e, rational(rng.gen_range(-8..=8), 8)));
        }
        // odometer over exponent vectors in [0, degree]^n
        let mut i = 0;
        loop {
            if i == n {
                return PolyField::from_terms(n, terms);
            }
            e[i] += 1;
            if e[i] <= degree {
                break;
            }
            e[i] = 0;
            i += 1;
        }
    }
}

/// Rational point with weighted coordinates in `(r_lo, r_hi)` and the rest in
/// `(-r_hi, r_hi)`, on a lattice of spacing `1/64`.
pub fn random_rational_point(rng: &mut impl Rng, w: &BesselWeights, r_lo: f64, r_hi: f64) -> Vec<BigRational> {
    let q = 64i64;
    (0..w.len())
        .map(|i| {
            let hi = (r_hi * q as f64).ceil() as i64 - 1;
            let lo = if w.weights()[i] > 0.0 {
                (r_lo * q as f64).floor() as i64 + 1
            } else {
                -hi
            };
            BigRational::new(BigInt::from(rng.gen_range(lo..=hi)), BigInt::from(q))
        })
        .collect()
}

/// Count of sample points with a negative exact CD defect (must be 0).
pub fn cd_violations(
    rng: &mut impl Rng,
    w: &BesselWeights,
    polys: usize,
    points: usize,
    degree: u32,
) -> Result<usize> {
    let mut bad = 0;
    for _ in 0..polys {
        let u = random_even_polynomial(rng, w, degree);
        let d = cd_defect(&u, w)?;
        for _ in 0..points {
            let x = random_rational_point(rng, w, 0.1, 2.0);
            if d.eval_exact(&x).is_negative() {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

// ---------------------------------------------------------------- grid mode

fn lattice_value(u: &ScalarField, id: usize, off: [i64; 4]) -> Option<f64> {
    let mesh: &Mesh = &u.mesh;
    let grid = &mesh.grid;
    let base = grid.unravel(mesh.active[id]);
    let mut ix = [0i64; 4];
    for a in 0..mesh.dim() {
        ix[a] = base[a] as i64 + off[a];
    }
    if grid.is_half() && ix[0] < 0 {
        // even reflection across r = 0 on the staggered lattice
        ix[0] = -1 - ix[0];
    }
    mesh.lookup(&ix).map(|j| u.values[j])
}

/// Centered second differences (with the even reflection at `r = 0`);
/// `None` when part of the 3^d stencil is outside the mesh.
pub fn grid_hessian(u: &ScalarField, id: usize) -> Option<([f64; 4], [[f64; 4]; 4])> {
    let dim = u.dim();
    let h = u.mesh.grid.h;
    let c = u.values[id];
    let at = |pairs: &[(usize, i64)]| {
        let mut off = [0i64; 4];
        for &(a, s) in pairs {
            off[a] += s;
        }
        lattice_value(u, id, off)
    };
    let mut g = [0.0; 4];
    let mut hs = [[0.0; 4]; 4];
    for i in 0..dim {
        let p = at(&[(i, 1)])?;
        let m = at(&[(i, -1)])?;
        g[i] = (p - m) / (2.0 * h);
        hs[i][i] = (p - 2.0 * c + m) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, 1), (j, 1)])? - at(&[(i, 1), (j, -1)])? - at(&[(i, -1), (j, 1)])?
                + at(&[(i, -1), (j, -1)])?)
                / (4.0 * h * h);
            hs[i][j] = v;
            hs[j][i] = v;
        }
    }
    Some((g, hs))
}

/// Nodal `|grad u|^2`.
pub fn grid_gamma(u: &ScalarField, boundary: BoundaryData<'_>) -> ScalarField {
    let values = u
        .gradient(boundary)
        .into_iter()
        .map(|g| g[..u.dim()].iter().map(|x| x * x).sum())
        .collect();
    ScalarField {
        mesh: u.mesh.clone(),
        values,
    }
}

fn grid_pointwise(u: &ScalarField, params: &WeinsteinParams, cd: bool) -> Vec<Option<f64>> {
    let dim = u.dim();
    let n = params.dim_eff();
    (0..u.mesh.len())
        .into_par_iter()
        .map(|id| {
            let (g, hs) = grid_hessian(u, id)?;
            let r = u.mesh.coord(id)[0].abs();
            let hess: f64 = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| hs[i][j].powi(2)).sum();
            let g2 = hess + params.a * (g[0] / r).powi(2);
            if !cd {
                return Some(g2);
            }
            let lu: f64 = (0..dim).map(|i| hs[i][i]).sum::<f64>() + params.a * g[0] / r;
            Some(g2 - lu * lu / n)
        })
        .collect()
}

/// Grid `Gamma_2` of `L_a`, at nodes whose full Hessian stencil is active.
pub fn grid_gamma2(u: &ScalarField, params: &WeinsteinParams) -> Vec<Option<f64>> {
    grid_pointwise(u, params, false)
}

/// Grid CD defect `Gamma_2 - (L_a u)^2 / (a + 1 + k)` with the same stencils.
pub fn grid_cd_defect(u: &ScalarField, params: &WeinsteinParams) -> Vec<Option<f64>> {
    grid_pointwise(u, params, true)
}

/// `P = |grad u|^2 + 2u / (a + 1 + k)` for a field vanishing on the boundary.
pub fn p_function(u: &ScalarField, params: &WeinsteinParams) -> ScalarField {
    let zero = |_: &[f64]| 0.0;
    let mut p = grid_gamma(u, BoundaryData::Dirichlet(&zero));
    let c = 2.0 / params.dim_eff();
    p.values.iter_mut().zip(&u.values).for_each(|(p, u)| *p += c * u);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicityReport {
    pub min: f64,
    pub fraction_below: f64,
    pub nodes: usize,
    pub tol: f64,
}

/// Minimum depth, in grid steps, of the nodes where `L_a P` is examined.
pub const SUBHARMONIC_DEPTH: f64 = 2.0;

/// `L_a P` at nodes at least two steps inside the boundary.
pub fn p_subharmonicity_defect(u: &ScalarField, params: &WeinsteinParams) -> Vec<Option<f64>> {
    let p = p_function(u, params);
    let lp = apply_operator_interior(&p, params);
    lp.into_iter()
        .enumerate()
        .map(|(id, v)| v.filter(|_| u.mesh.depth(id) >= SUBHARMONIC_DEPTH))
        .collect()
}

pub fn summarize_subharmonicity(defect: &[Option<f64>], tol: f64) -> SubharmonicityReport {
    let vals: Vec<f64> = defect.iter().flatten().copied().collect();
    let below = vals.iter().filter(|v| **v < -tol).count();
    SubharmonicityReport {
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        fraction_below: if vals.is_empty() { 0.0 } else { below as f64 / vals.len() as f64 },
        nodes: vals.len(),
        tol,
    }
}

// ------------------------------------------------------ equality-case fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub alpha: f64,
    pub gamma: f64,
    pub y0: Option<Vec<f64>>,
    /// Max-norm misfit of `alpha (r^2 + |y - y0|^2) + gamma` over the samples.
    pub residual: f64,
}

impl QuadraticFit {
    pub fn is_equality_case(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Something that can be sampled for [`quadratic_equality_fit`].
pub trait FitSamples {
    /// Sample points (first `dim` coordinates used) and values.
    fn fit_samples(&self) -> (usize, Vec<[f64; 4]>, Vec<f64>);
}

impl FitSamples for ScalarField {
    fn fit_samples(&self) -> (usize, Vec<[f64; 4]>, Vec<f64>) {
        let pts = (0..self.mesh.len()).map(|i| self.mesh.coord(i)).collect();
        (self.dim(), pts, self.values.clone())
    }
}

/// Polynomials are sampled on a lattice of spacing 1/8 in the unit half ball.
impl FitSamples for PolyField {
    fn fit_samples(&self) -> (usize, Vec<[f64; 4]>, Vec<f64>) {
        let dim = self.nvars();
        let m = 8i64;
        let mut pts = Vec::new();
        let span: Vec<i64> = (-m..=m).collect();
        let total = span.len().pow(dim as u32 - 1) * (m as usize);
        for flat in 0..total {
            let mut p = [0.0; 4];
            let mut rest = flat;
            p[0] = ((rest % m as usize) as f64 + 0.5) / m as f64;
            rest /= m as usize;
            for c in p.iter_mut().take(dim).skip(1) {
                *c = span[rest % span.len()] as f64 / m as f64;
                rest /= span.len();
            }
            if p.iter().map(|x| x * x).sum::<f64>() < 1.0 {
                pts.push(p);
            }
        }
        let vals = pts.iter().map(|p| self.eval(&p[..dim])).collect();
        (dim, pts, vals)
    }
}

/// Least-squares fit of `alpha rho^2 + b . y + c`, then `y0 = -b / (2 alpha)`
/// and `gamma = c - alpha |y0|^2`. When `alpha` vanishes the best constant is
/// returned without a centre.
pub fn quadratic_equality_fit(u: &impl FitSamples) -> Result<QuadraticFit> {
    let (dim, pts, vals) = u.fit_samples();
    let ncols = dim + 1;
    if pts.len() < ncols {
        return Err(Error::DegenerateFit);
    }
    let a = DMatrix::from_fn(pts.len(), ncols, |i, j| match j {
        0 => pts[i][..dim].iter().map(|x| x * x).sum(),
        j if j < dim => pts[i][j],
        _ => 1.0,
    });
    let b = DVector::from_column_slice(&vals);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::DegenerateFit);
    }
    let x = svd.solve(&b, 1e-14 * smax).map_err(|_| Error::DegenerateFit)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let extent = pts.iter().map(|p| p[..dim].iter().map(|x| x * x).sum::<f64>()).fold(0.0f64, f64::max);
    let alpha = x[0];
    if alpha.abs() * extent <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let residual = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        return Ok(QuadraticFit {
            alpha: 0.0,
            gamma: mean,
            y0: None,
            residual,
        });
    }
    let y0: Vec<f64> = (1..dim).map(|j| -x[j] / (2.0 * alpha)).collect();
    let gamma = x[dim] - alpha * y0.iter().map(|v| v * v).sum::<f64>();
    let model = |p: &[f64; 4]| {
        let mut rho2 = p[0] * p[0];
        for j in 1..dim {
            rho2 += (p[j] - y0[j - 1]).powi(2);
        }
        alpha * rho2 + gamma
    };
    let residual = pts
        .iter()
        .zip(&vals)
        .fold(0.0f64, |m, (p, v)| m.max((v - model(p)).abs()));
    Ok(QuadraticFit {
        alpha,
        gamma,
        y0: Some(y0),
        residual,
    })
}

/// The exact equality family `gamma + alpha sum_i (x_i^2 + beta_i x_i)`,
/// with `beta_i = 0` on weighted factors.
pub fn equality_quadratic(w: &BesselWeights, alpha: BigRational, beta: &[BigRational], gamma: BigRational) -> PolyField {
    let n = w.len();
    let mut u = PolyField::constant(n, gamma);
    for i in 0..n {
        let x = PolyField::var(n, i);
        let mut t = &x * &x;
        if w.weights()[i] == 0.0 && !beta[i].is_zero() {
            t = &t + &x.scale(&beta[i]);
        }
        u = &u + &t.scale(&alpha);
    }
    u
}
