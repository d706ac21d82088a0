//! Domains symmetric under `r -> -r`, with signed distances and boundary
//! sampling on the curved part `Sigma = {r > 0} ∩ boundary`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::half_sphere_samples;

/// Shape of the symmetric domain. `center` holds only the tangential
/// coordinates `y_0`; every shape is centred on the plane `r = 0`.
/// Per-axis lengths are ordered `(r, y_1, .., y_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisymDomain {
    Ball { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
    Box { center: Vec<f64>, half_widths: Vec<f64> },
}

/// A point on `Sigma` with its outward unit normal and surface weight.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySample {
    pub point: [f64; 4],
    pub normal: [f64; 4],
    pub weight: f64,
}

impl AxisymDomain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        AxisymDomain::Ball { center, radius }
    }

    pub fn ellipsoid(center: Vec<f64>, semi_axes: Vec<f64>) -> Self {
        AxisymDomain::Ellipsoid { center, semi_axes }
    }

    pub fn cuboid(center: Vec<f64>, half_widths: Vec<f64>) -> Self {
        AxisymDomain::Box { center, half_widths }
    }

    /// Tangential center `y_0`.
    pub fn center(&self) -> &[f64] {
        match self {
            AxisymDomain::Ball { center, .. }
            | AxisymDomain::Ellipsoid { center, .. }
            | AxisymDomain::Box { center, .. } => center,
        }
    }

    /// Number of coordinates `k + 1`.
    pub fn dim(&self) -> usize {
        self.center().len() + 1
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AxisymDomain::Ball { .. } => "ball",
            AxisymDomain::Ellipsoid { .. } => "ellipsoid",
            AxisymDomain::Box { .. } => "box",
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.center().len() != k {
            return bad(format!("center must have {k} tangential coordinates, got {}", self.center().len()));
        }
        if self.center().iter().any(|c| !c.is_finite()) {
            return bad("center must be finite".into());
        }
        let lengths: Vec<f64> = match self {
            AxisymDomain::Ball { radius, .. } => vec![*radius],
            AxisymDomain::Ellipsoid { semi_axes, .. } => semi_axes.clone(),
            AxisymDomain::Box { half_widths, .. } => half_widths.clone(),
        };
        if !matches!(self, AxisymDomain::Ball { .. }) && lengths.len() != k + 1 {
            return bad(format!("expected {} axis lengths, got {}", k + 1, lengths.len()));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("axis lengths must be positive".into());
        }
        Ok(())
    }

    /// Per-axis half extents `(r, y_1, .., y_k)` of the bounding box.
    pub fn half_extents(&self) -> Vec<f64> {
        match self {
            AxisymDomain::Ball { radius, .. } => vec![*radius; self.dim()],
            AxisymDomain::Ellipsoid { semi_axes, .. } => semi_axes.clone(),
            AxisymDomain::Box { half_widths, .. } => half_widths.clone(),
        }
    }

    /// Smallest semi-axis, used to judge grid resolution.
    pub fn min_feature(&self) -> f64 {
        self.half_extents().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to the boundary, negative inside. Only `|r|` enters.
    pub fn signed_distance(&self, p: &[f64]) -> f64 {
        let d = self.dim();
        let mut q = [0.0; 4];
        q[0] = p[0].abs();
        for j in 1..d {
            q[j] = p[j] - self.center()[j - 1];
        }
        match self {
            AxisymDomain::Ball { radius, .. } => {
                q[..d].iter().map(|x| x * x).sum::<f64>().sqrt() - radius
            }
            AxisymDomain::Ellipsoid { semi_axes, .. } => {
                for x in q[..d].iter_mut() {
                    *x = x.abs();
                }
                ellipsoid_signed_distance(&q[..d], semi_axes)
            }
            AxisymDomain::Box { half_widths, .. } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for j in 0..d {
                    let dj = q[j].abs() - half_widths[j];
                    outside += dj.max(0.0).powi(2);
                    inside = inside.max(dj);
                }
                outside.sqrt() + inside.min(0.0)
            }
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Unit gradient of the signed distance (central differences, exact for balls).
    pub fn distance_gradient(&self, p: &[f64]) -> [f64; 4] {
        let d = self.dim();
        let mut g = [0.0; 4];
        if let AxisymDomain::Ball { center, .. } = self {
            g[0] = p[0];
            for j in 1..d {
                g[j] = p[j] - center[j - 1];
            }
        } else {
            let eps = 1e-7 * (1.0 + self.min_feature());
            let mut x = [0.0; 4];
            x[..d].copy_from_slice(&p[..d]);
            for j in 0..d {
                let keep = x[j];
                x[j] = keep + eps;
                let fp = self.signed_distance(&x[..d]);
                x[j] = keep - eps;
                let fm = self.signed_distance(&x[..d]);
                x[j] = keep;
                g[j] = (fp - fm) / (2.0 * eps);
            }
        }
        let n = g[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            for v in g[..d].iter_mut() {
                *v /= n;
            }
        }
        g
    }

    /// Quasi-uniform samples of `Sigma` with outward normals and surface
    /// weights. Boxes are rejected because their normals jump at corners.
    pub fn boundary_samples(&self, count: usize) -> Result<Vec<BoundarySample>> {
        if count < 8 {
            return Err(Error::InvalidParams(format!("need at least 8 boundary samples, got {count}")));
        }
        let d = self.dim();
        let k = d - 1;
        let semi = match self {
            AxisymDomain::Box { .. } => {
                return Err(Error::UnsupportedShape("box boundary has corners".into()))
            }
            _ => self.half_extents(),
        };
        let prod: f64 = semi.iter().product();
        let samples = half_sphere_samples(k, count);
        Ok(samples
            .into_iter()
            .map(|s| {
                let mut point = [0.0; 4];
                let mut normal = [0.0; 4];
                for j in 0..d {
                    point[j] = semi[j] * s.dir[j] + if j > 0 { self.center()[j - 1] } else { 0.0 };
                    normal[j] = s.dir[j] / semi[j];
                }
                let nn = normal[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in normal[..d].iter_mut() {
                    *v /= nn;
                }
                BoundarySample {
                    point,
                    normal,
                    weight: s.weight * prod * nn,
                }
            })
            .collect())
    }
}

/// Signed distance from a point with nonnegative coordinates `q` (relative
/// to the center) to the ellipsoid with semi-axes `e`.
fn ellipsoid_signed_distance(q: &[f64], e: &[f64]) -> f64 {
    let s: f64 = q.iter().zip(e).map(|(q, e)| (q / e) * (q / e)).sum();
    let sign = if s < 1.0 { -1.0 } else { 1.0 };
    if s == 1.0 {
        return 0.0;
    }
    let emin = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let on_min_axis = |i: usize| (e[i] - emin).abs() <= 1e-14 * emin;

    // g(lambda) = sum (e_i q_i / (e_i^2 + lambda))^2, decreasing on (-emin^2, inf).
    let g = |lam: f64| -> (f64, f64) {
        let mut val = 0.0;
        let mut der = 0.0;
        for (qi, ei) in q.iter().zip(e) {
            if *qi == 0.0 {
                continue;
            }
            let den = ei * ei + lam;
            let t = ei * qi / den;
            val += t * t;
            der += -2.0 * t * t / den;
        }
        (val, der)
    };

    if sign < 0.0 && (0..q.len()).all(|i| !on_min_axis(i) || q[i] == 0.0) {
        // Medial-axis case: the stationarity system may have no root above -emin^2.
        let lim: f64 = (0..q.len())
            .filter(|&i| !on_min_axis(i))
            .map(|i| (e[i] * q[i] / (e[i] * e[i] - emin * emin)).powi(2))
            .sum();
        if lim <= 1.0 {
            let mut x = vec![0.0; q.len()];
            let mut used = 0.0;
            let mut m = None;
            for i in 0..q.len() {
                if on_min_axis(i) {
                    m.get_or_insert(i);
                } else {
                    x[i] = e[i] * e[i] * q[i] / (e[i] * e[i] - emin * emin);
                    used += (x[i] / e[i]).powi(2);
                }
            }
            let m = m.expect("some axis attains the minimum");
            x[m] = emin * (1.0 - used).max(0.0).sqrt();
            let dist = q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            return -dist;
        }
    }

    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let emax = e.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = if sign > 0.0 {
        (0.0, emax * qn + emax * emax)
    } else {
        (-emin * emin, 0.0)
    };
    let mut lam = if sign > 0.0 { 0.0 } else { 0.5 * lo };
    for _ in 0..200 {
        let (val, der) = g(lam);
        let f = val - 1.0;
        if f.abs() <= 1e-15 {
            break;
        }
        if f > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        let newton = lam - f / der;
        lam = if der < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * (emin * emin + lam.abs()) {
            break;
        }
    }
    // q - x = q_i * lambda / (e_i^2 + lambda), accurate for small lambda.
    let dist = q
        .iter()
        .zip(e)
        .map(|(qi, ei)| (qi * lam / (ei * ei + lam)).powi(2))
        .sum::<f64>()
        .sqrt();
    sign * dist
}
