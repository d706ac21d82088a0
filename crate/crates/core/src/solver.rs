//! Jacobi-preconditioned Krylov solvers for the assembled systems.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::operator::SparseSystem;
use crate::sum::par_dot;

/// Row-compressed sparse matrix. The diagonal is stored first in each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Build from `(diagonal, off-diagonal entries)` per row.
    pub fn from_rows<'a>(rows: impl Iterator<Item = (f64, &'a [(usize, f64)])>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, (d, off)) in rows.enumerate() {
            cols.push(i as u32);
            vals.push(d);
            for &(j, v) in off {
                cols.push(j as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n: row_ptr.len() - 1,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.vals[self.row_ptr[i]]).collect()
    }

    pub fn nnz_in_row(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = s;
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    CG,
    BiCGStab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub method: Method,
    pub wall_time: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;

fn norm(x: &[f64]) -> f64 {
    par_dot(x, x).sqrt()
}

fn residual(a: &Csr, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul(x);
    b.par_iter().zip(ax.par_iter()).map(|(b, ax)| b - ax).collect()
}

/// Random probe of `<Au, v>_w = <u, Av>_w`.
pub fn is_weighted_symmetric(system: &SparseSystem) -> bool {
    let n = system.matrix.n;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = &system.weights;
    let au = system.matrix.mul(&u);
    let av = system.matrix.mul(&v);
    let wv: Vec<f64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
    let wu: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * b).collect();
    let lhs = par_dot(&au, &wv);
    let rhs = par_dot(&av, &wu);
    let scale = norm(&au.iter().zip(w).map(|(a, b)| a * b.sqrt()).collect::<Vec<_>>())
        * norm(&v.iter().zip(w).map(|(a, b)| a * b.sqrt()).collect::<Vec<_>>());
    (lhs - rhs).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)
}

enum Outcome {
    Converged(usize),
    MaxIter(usize),
    Breakdown(usize),
}

/// Solve `A u = b` to relative residual `tol` (in `(0, 1e-2]`). CG on the
/// weighted symmetrization when the symmetry probe passes, BiCGStab
/// otherwise, both with Jacobi preconditioning. The reported residual is
/// recomputed from the returned iterate.
pub fn solve(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<(ScalarField, SolveReport)> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(Error::InvalidParams(format!("tolerance must be in (0, 1e-2], got {tol}")));
    }
    let start = Instant::now();
    let a = &system.matrix;
    let b = &system.rhs;
    let n = a.n;
    let bnorm = norm(b);
    let method = if is_weighted_symmetric(system) {
        Method::CG
    } else {
        Method::BiCGStab
    };
    let mut x = vec![0.0; n];
    let field = |x: Vec<f64>| ScalarField {
        mesh: system.mesh.clone(),
        values: x,
    };
    if bnorm == 0.0 {
        let report = SolveReport {
            iterations: 0,
            final_relative_residual: 0.0,
            method,
            wall_time: start.elapsed().as_secs_f64(),
        };
        return Ok((field(x), report));
    }

    let mut best = Best {
        res: bnorm,
        x: x.clone(),
    };
    let mut used = 0;
    let mut restarts = 0;
    let mut breakdowns = 0;
    loop {
        let budget = max_iter - used;
        let outcome = match method {
            Method::CG => cg(system, &mut x, tol * bnorm, budget, &mut best),
            Method::BiCGStab => bicgstab(a, b, &mut x, tol * bnorm, budget, &mut best),
        };
        let true_res = norm(&residual(a, &x, b)) / bnorm;
        match outcome {
            Outcome::Converged(it) => {
                used += it;
                if true_res <= tol {
                    let report = SolveReport {
                        iterations: used,
                        final_relative_residual: true_res,
                        method,
                        wall_time: start.elapsed().as_secs_f64(),
                    };
                    log::debug!("{method:?} converged in {used} iterations, residual {true_res:e}");
                    return Ok((field(x), report));
                }
                // recurrence drifted from the true residual: restart from the iterate
                restarts += 1;
                if restarts > 5 || used >= max_iter {
                    let (residual, best) = best.pick(a, b, bnorm, x, true_res);
                    return Err(Error::NoConvergence {
                        max_iter,
                        residual,
                        best,
                        iterations: used,
                    });
                }
            }
            Outcome::MaxIter(it) => {
                used += it;
                let (residual, best) = best.pick(a, b, bnorm, x, true_res);
                return Err(Error::NoConvergence {
                    max_iter,
                    residual,
                    best,
                    iterations: used,
                });
            }
            Outcome::Breakdown(it) => {
                used += it;
                breakdowns += 1;
                if breakdowns > 1 || used >= max_iter {
                    let (_, best) = best.pick(a, b, bnorm, x, true_res);
                    return Err(Error::BreakdownDetected { iterations: used, best });
                }
                log::debug!("krylov breakdown after {used} iterations, restarting");
            }
        }
    }
}

/// Iterate with the smallest recurrence residual seen so far.
struct Best {
    res: f64,
    x: Vec<f64>,
}

impl Best {
    fn offer(&mut self, res: f64, x: &[f64]) {
        if res < self.res {
            self.res = res;
            self.x.copy_from_slice(x);
        }
    }

    /// The better of the tracked iterate and the last one, by true residual.
    fn pick(self, a: &Csr, b: &[f64], bnorm: f64, last: Vec<f64>, last_res: f64) -> (f64, Vec<f64>) {
        let res = norm(&residual(a, &self.x, b)) / bnorm;
        if res < last_res {
            (res, self.x)
        } else {
            (last_res, last)
        }
    }
}

/// Preconditioned CG on `M = -W A`, `c = -W b`; stops on `||A x - b|| <= abs_tol`.
fn cg(system: &SparseSystem, x: &mut [f64], abs_tol: f64, max_iter: usize, best: &mut Best) -> Outcome {
    let a = &system.matrix;
    let w = &system.weights;
    let n = a.n;
    let diag = a.diagonal();
    let minv: Vec<f64> = diag.iter().zip(w).map(|(d, w)| 1.0 / (-d * w)).collect();
    let m_apply = |v: &[f64], out: &mut [f64]| {
        a.matvec(v, out);
        out.par_iter_mut().zip(w.par_iter()).for_each(|(o, w)| *o *= -w);
    };
    // r = c - M x = W (A x - b)
    let mut r = residual(a, x, &system.rhs);
    r.par_iter_mut().zip(w.par_iter()).for_each(|(r, w)| *r *= -w);
    let unweighted = |r: &[f64]| -> f64 {
        let v: Vec<f64> = r.par_iter().zip(w.par_iter()).map(|(r, w)| r / w).collect();
        norm(&v)
    };
    if unweighted(&r) <= abs_tol {
        return Outcome::Converged(0);
    }
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = par_dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iter {
        m_apply(&p, &mut q);
        let pq = par_dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Outcome::Breakdown(it);
        }
        let alpha = rz / pq;
        x.par_iter_mut().zip(p.par_iter()).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(q.par_iter()).for_each(|(r, q)| *r -= alpha * q);
        let rn = unweighted(&r);
        if rn <= abs_tol {
            return Outcome::Converged(it);
        }
        best.offer(rn, x);
        z.par_iter_mut()
            .zip(r.par_iter().zip(minv.par_iter()))
            .for_each(|(z, (r, m))| *z = r * m);
        let rz_new = par_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = z + beta * *p);
    }
    Outcome::MaxIter(max_iter)
}

/// Right-preconditioned BiCGStab.
fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], abs_tol: f64, max_iter: usize, best: &mut Best) -> Outcome {
    let n = a.n;
    let minv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = residual(a, x, b);
    if norm(&r) <= abs_tol {
        return Outcome::Converged(0);
    }
    let rhat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    let tiny = 1e-300;
    for it in 1..=max_iter {
        let rho_new = par_dot(&rhat, &r);
        if rho_new.abs() < tiny || !rho_new.is_finite() {
            return Outcome::Breakdown(it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(p, (r, v))| *p = r + beta * (*p - omega * v));
        y.par_iter_mut()
            .zip(p.par_iter().zip(minv.par_iter()))
            .for_each(|(y, (p, m))| *y = p * m);
        a.matvec(&y, &mut v);
        let rv = par_dot(&rhat, &v);
        if rv.abs() < tiny {
            return Outcome::Breakdown(it);
        }
        alpha = rho / rv;
        s.par_iter_mut()
            .zip(r.par_iter().zip(v.par_iter()))
            .for_each(|(s, (r, v))| *s = r - alpha * v);
        if norm(&s) <= abs_tol {
            x.par_iter_mut().zip(y.par_iter()).for_each(|(x, y)| *x += alpha * y);
            return Outcome::Converged(it);
        }
        zz.par_iter_mut()
            .zip(s.par_iter().zip(minv.par_iter()))
            .for_each(|(z, (s, m))| *z = s * m);
        a.matvec(&zz, &mut t);
        let tt = par_dot(&t, &t);
        if tt < tiny {
            return Outcome::Breakdown(it);
        }
        omega = par_dot(&t, &s) / tt;
        if omega.abs() < tiny {
            return Outcome::Breakdown(it);
        }
        x.par_iter_mut()
            .zip(y.par_iter().zip(zz.par_iter()))
            .for_each(|(x, (y, z))| *x += alpha * y + omega * z);
        r.par_iter_mut()
            .zip(s.par_iter().zip(t.par_iter()))
            .for_each(|(r, (s, t))| *r = s - omega * t);
        let rn = norm(&r);
        if rn <= abs_tol {
            return Outcome::Converged(it);
        }
        best.offer(rn, x);
    }
    Outcome::MaxIter(max_iter)
}
