//! The measure `|r|^a dx`: closed-form constants, grid quadrature,
//! anisotropic spherical means, the radial field and the fundamental
//! solution.

use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::field::{BoundaryData, ScalarField};
use crate::grid::StaggeredGrid;
use crate::params::WeinsteinParams;
use crate::sphere::half_sphere_samples;
use crate::sum::pairwise_sum;

/// Number of hemisphere samples used when a caller has no preference.
pub const DEFAULT_SPHERE_SAMPLES: usize = 10_000;

/// A quadrature value with an error estimate in the same units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedIntegral {
    pub value: f64,
    pub estimated_error: f64,
}

/// `omega_{a,k}`: the `|r|^a`-volume of the unit ball of `R^{k+1}`.
pub fn omega(params: &WeinsteinParams) -> f64 {
    let (a, k) = (params.a, params.k as f64);
    (2f64.ln() + 0.5 * k * PI.ln() + ln_gamma(0.5 * (a + 1.0))
        - (a + 1.0 + k).ln()
        - ln_gamma(0.5 * (a + 1.0 + k)))
    .exp()
}

/// `sigma_{a,k} = (a + 1 + k) omega_{a,k}`: the `|r|^a`-area of the unit sphere.
pub fn sigma(params: &WeinsteinParams) -> f64 {
    params.dim_eff() * omega(params)
}

/// `int_{B_t} |r|^a dx = omega_{a,k} t^{a+1+k}`.
pub fn aniso_ball_volume(params: &WeinsteinParams, t: f64) -> f64 {
    omega(params) * t.powf(params.dim_eff())
}

/// `int_{dB_t} |r|^a dsigma = sigma_{a,k} t^{a+k}`.
pub fn aniso_sphere_measure(params: &WeinsteinParams, t: f64) -> f64 {
    sigma(params) * t.powf(params.a + params.k as f64)
}

/// `int |s|^a ds` over the `r`-cell `[(i + r_start) h, (i + r_start + 1) h]`.
pub fn cell_r_weight(grid: &StaggeredGrid, a: f64, i: usize) -> f64 {
    let lo = (i as i64 + grid.r_start) as f64 * grid.h;
    r_weight_between(a, lo, lo + grid.h)
}

/// `int_lo^hi |s|^a ds`.
pub fn r_weight_between(a: f64, lo: f64, hi: f64) -> f64 {
    let prim = |x: f64| x.signum() * x.abs().powf(a + 1.0) / (a + 1.0);
    prim(hi) - prim(lo)
}

/// Fraction of the unit cube `[0,1]^d` where `n . xi <= c`.
pub fn cube_halfspace_fraction(n: &[f64], c: f64) -> f64 {
    let mut nn = [0.0; 4];
    let mut c = c;
    let mut d = 0;
    for &v in n {
        if v.abs() < 1e-9 {
            continue;
        }
        if v < 0.0 {
            // xi -> 1 - xi
            c -= v;
            nn[d] = -v;
        } else {
            nn[d] = v;
        }
        d += 1;
    }
    if d == 0 {
        return if c >= 0.0 { 1.0 } else { 0.0 };
    }
    let total: f64 = nn[..d].iter().sum();
    if c <= 0.0 {
        return 0.0;
    }
    if c >= total {
        return 1.0;
    }
    let mut acc = 0.0;
    for v in 0..(1usize << d) {
        let mut s = c;
        let mut parity = 1.0;
        for (j, nj) in nn[..d].iter().enumerate() {
            if v >> j & 1 == 1 {
                s -= nj;
                parity = -parity;
            }
        }
        if s > 0.0 {
            acc += parity * s.powi(d as i32);
        }
    }
    let fact: f64 = (1..=d).map(|i| i as f64).product();
    let prod: f64 = nn[..d].iter().product();
    (acc / (fact * prod)).clamp(0.0, 1.0)
}

/// Subdivisions per axis of cells crossed by the boundary.
pub const VOLUME_SUBCELLS: usize = 4;

/// Midpoint rule for `int f |r|^a dx` over the discrete domain. Cells
/// crossed by the boundary are split into `VOLUME_SUBCELLS^d` subcells, each
/// weighted by the inside fraction of a planar cut and valued by a
/// first-order Taylor expansion about the cell's node (or, for exterior
/// nodes, their deepest active neighbour). With `coarse` the error estimate
/// is the Richardson difference.
pub fn weighted_volume_integral(
    field: &ScalarField,
    params: &WeinsteinParams,
    coarse: Option<&ScalarField>,
) -> Result<WeightedIntegral> {
    let value = volume_sum(field, params)?;
    let estimated_error = match coarse {
        Some(c) => (value - volume_sum(c, params)?).abs() / 3.0,
        None => 0.0,
    };
    Ok(WeightedIntegral { value, estimated_error })
}

fn volume_sum(field: &ScalarField, params: &WeinsteinParams) -> Result<f64> {
    let mesh = &field.mesh;
    if !(0..mesh.len()).any(|id| mesh.is_interior(id)) {
        return Err(Error::EmptyDomain);
    }
    let grid = &mesh.grid;
    let dim = grid.dim;
    let h = grid.h;
    let band = 0.5 * h * (dim as f64).sqrt();
    let hk = h.powi(dim as i32 - 1);
    let a = params.a;
    let grad = field.gradient(BoundaryData::OneSided);
    let m = VOLUME_SUBCELLS;
    let hs = h / m as f64;
    let hs_k = hs.powi(dim as i32 - 1);
    let sub_band = 0.5 * hs * (dim as f64).sqrt();
    let contrib: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.coord(idx);
            let sd = mesh.domain.signed_distance(&p[..dim]);
            if sd >= band {
                return 0.0;
            }
            let id = mesh.active_id[idx];
            if sd <= -band {
                let i = idx % grid.n[0];
                return field.values[id as usize] * cell_r_weight(grid, a, i) * hk;
            }
            let reference = if id != crate::grid::INACTIVE {
                Some(id as usize)
            } else {
                let mut best: Option<(f64, usize)> = None;
                for d in 0..2 * dim {
                    if let Some(nb) = grid.neighbor(idx, d) {
                        let nid = mesh.active_id[nb];
                        if nid == crate::grid::INACTIVE {
                            continue;
                        }
                        let q = grid.coord(nb);
                        let s = mesh.domain.signed_distance(&q[..dim]);
                        if best.is_none_or(|(bs, _)| s < bs) {
                            best = Some((s, nid as usize));
                        }
                    }
                }
                best.map(|b| b.1)
            };
            let Some(rid) = reference else {
                return 0.0;
            };
            let xr = mesh.coord(rid);
            let (v0, g0) = (field.values[rid], grad[rid]);
            let n = mesh.domain.distance_gradient(&p[..dim]);
            let nsum: f64 = 0.5 * n[..dim].iter().sum::<f64>();
            let mut acc = 0.0;
            for flat in 0..m.pow(dim as u32) {
                let mut x = [0.0; 4];
                let mut rest = flat;
                for j in 0..dim {
                    let o = ((rest % m) as f64 + 0.5) / m as f64 - 0.5;
                    rest /= m;
                    x[j] = p[j] + h * o;
                }
                let sds = mesh.domain.signed_distance(&x[..dim]);
                let frac = if sds <= -sub_band {
                    1.0
                } else if sds >= sub_band {
                    0.0
                } else {
                    cube_halfspace_fraction(&n[..dim], nsum - sds / hs)
                };
                if frac == 0.0 {
                    continue;
                }
                let v = v0 + (0..dim).map(|j| g0[j] * (x[j] - xr[j])).sum::<f64>();
                let lo = x[0] - 0.5 * hs;
                acc += v * frac * r_weight_between(a, lo, lo + hs) * hs_k;
            }
            acc
        })
        .collect();
    Ok(crate::sum::par_sum(&contrib))
}

/// A function that can be sampled anywhere in its domain.
pub trait PointField: Sync {
    fn value(&self, p: &[f64]) -> Result<f64>;
    fn gradient(&self, p: &[f64]) -> Result<[f64; 4]>;
}

/// Closed-form function with its gradient.
pub struct Analytic<F, G> {
    pub f: F,
    pub grad: G,
}

impl<F, G> PointField for Analytic<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> [f64; 4] + Sync,
{
    fn value(&self, p: &[f64]) -> Result<f64> {
        Ok((self.f)(p))
    }
    fn gradient(&self, p: &[f64]) -> Result<[f64; 4]> {
        Ok((self.grad)(p))
    }
}

/// Grid field with precomputed nodal gradients, sampled by multilinear
/// interpolation.
pub struct GridSampler<'a> {
    field: &'a ScalarField,
    grad: Vec<ScalarField>,
}

impl<'a> GridSampler<'a> {
    pub fn new(field: &'a ScalarField, boundary: BoundaryData<'_>) -> Self {
        let g = field.gradient(boundary);
        let grad = (0..field.dim())
            .map(|a| ScalarField {
                mesh: field.mesh.clone(),
                values: g.iter().map(|v| v[a]).collect(),
            })
            .collect();
        Self { field, grad }
    }
}

impl PointField for GridSampler<'_> {
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.field.interpolate(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<[f64; 4]> {
        let mut g = [0.0; 4];
        for (a, f) in self.grad.iter().enumerate() {
            g[a] = f.interpolate(p)?;
        }
        // d/dr is odd in r; the interpolant folds |r|
        if p[0] < 0.0 {
            g[0] = -g[0];
        }
        Ok(g)
    }
}

impl PointField for ScalarField {
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.interpolate(p)
    }
    fn gradient(&self, _p: &[f64]) -> Result<[f64; 4]> {
        Err(Error::InvalidParams("wrap the field in a GridSampler to sample gradients".into()))
    }
}

fn sphere_sum(
    params: &WeinsteinParams,
    center: &[f64],
    t: f64,
    n: usize,
    g: impl Fn(&[f64], &[f64; 4]) -> Result<f64> + Sync,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("radius must be positive, got {t}")));
    }
    let dim = params.dim();
    let samples = half_sphere_samples(params.k, n);
    let terms: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let mut p = [0.0; 4];
            p[0] = t * s.dir[0];
            for j in 1..dim {
                p[j] = center[j - 1] + t * s.dir[j];
            }
            let v = g(&p[..dim], &s.dir).map_err(|e| match e {
                Error::OutsideField(_) => Error::SphereOutsideDomain { radius: t },
                e => e,
            })?;
            Ok(s.weight * s.dir[0].powf(params.a) * v)
        })
        .collect();
    let terms: Vec<f64> = terms.into_iter().collect::<Result<_>>()?;
    // both hemispheres, normalised by sigma t^{a+k} (the t-powers cancel)
    Ok(2.0 * pairwise_sum(&terms) / sigma(params))
}

/// `M_{a,k}(f, (0, y0), t)`: the `|r|^a`-weighted mean of `f` over the
/// sphere of radius `t` about `(0, y0)`.
pub fn spherical_mean(
    field: &dyn PointField,
    params: &WeinsteinParams,
    center: &[f64],
    t: f64,
    samples: usize,
) -> Result<f64> {
    sphere_sum(params, center, t, samples, |p, _| field.value(p))
}

/// `(1 / (sigma t^{a+1+k})) int_{dB_t} Zf |r|^a dsigma` with `Z` recentred at `(0, y0)`.
pub fn spherical_mean_derivative(
    field: &dyn PointField,
    params: &WeinsteinParams,
    center: &[f64],
    t: f64,
    samples: usize,
) -> Result<f64> {
    let dim = params.dim();
    // Zf = t <dir, grad f>, and the extra 1/t cancels it.
    sphere_sum(params, center, t, samples, |p, d| {
        let g = field.gradient(p)?;
        Ok((0..dim).map(|j| d[j] * g[j]).sum())
    })
}

/// `Zf = r f_r + <y - y0, grad_y f>`, by second-order differences.
pub fn radial_field_apply(field: &ScalarField, center: &[f64]) -> ScalarField {
    let dim = field.dim();
    let g = field.gradient(BoundaryData::OneSided);
    let mesh = field.mesh.clone();
    let values = (0..mesh.len())
        .map(|id| {
            let p = mesh.coord(id);
            let mut z = p[0] * g[id][0];
            for j in 1..dim {
                z += (p[j] - center[j - 1]) * g[id][j];
            }
            z
        })
        .collect();
    ScalarField { mesh, values }
}

/// Distance `rho(r, y - y0)` from the axis point `(0, y0)`.
pub fn axis_distance(p: &[f64], y0: &[f64]) -> f64 {
    let mut s = p[0] * p[0];
    for (j, c) in y0.iter().enumerate() {
        s += (p[j + 1] - c).powi(2);
    }
    s.sqrt()
}

fn check_fundamental(params: &WeinsteinParams) -> Result<()> {
    let m = params.a + params.k as f64;
    if m <= 1.0 {
        return Err(Error::DegenerateDimension(m));
    }
    Ok(())
}

/// `E = -rho^{1-a-k} / ((a+k-1) sigma_{a,k})`, pole at `(0, y0)`.
pub fn fundamental_solution(params: &WeinsteinParams, x: &[f64], y0: &[f64]) -> Result<f64> {
    check_fundamental(params)?;
    let rho = axis_distance(x, y0);
    if rho == 0.0 {
        return Err(Error::PoleEvaluation);
    }
    let m = params.a + params.k as f64;
    Ok(-rho.powf(1.0 - m) / ((m - 1.0) * sigma(params)))
}

/// Gradient of [`fundamental_solution`]: `rho^{-a-k} / sigma * (x - pole) / rho`.
pub fn fundamental_solution_gradient(params: &WeinsteinParams, x: &[f64], y0: &[f64]) -> Result<[f64; 4]> {
    check_fundamental(params)?;
    let rho = axis_distance(x, y0);
    if rho == 0.0 {
        return Err(Error::PoleEvaluation);
    }
    let m = params.a + params.k as f64;
    let s = rho.powf(-m) / sigma(params) / rho;
    let mut g = [0.0; 4];
    g[0] = s * x[0];
    for (j, c) in y0.iter().enumerate() {
        g[j + 1] = s * (x[j + 1] - c);
    }
    Ok(g)
}

/// `int_{dB_t(0,y0)} d_nu E |r|^a dsigma`, by sphere quadrature of the gradient.
pub fn fundamental_solution_flux(params: &WeinsteinParams, y0: &[f64], t: f64, samples: usize) -> Result<f64> {
    let sig = sigma(params);
    let dim = params.dim();
    let mean = sphere_sum(params, y0, t, samples, |p, d| {
        let g = fundamental_solution_gradient(params, p, y0)?;
        Ok((0..dim).map(|j| d[j] * g[j]).sum())
    })?;
    Ok(mean * sig * t.powf(params.a + params.k as f64))
}
