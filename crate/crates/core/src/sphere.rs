//! Quasi-uniform quadrature on the half sphere `{x in S^k : x_r > 0}`.
//!
//! The `r` coordinate is used as the polar axis so that the samples are
//! stratified in `|x_r|`, which keeps the weight `|x_r|^a` well resolved
//! near the singular plane.

use std::f64::consts::PI;

/// One quadrature node: a unit direction (first entry is the `r` component)
/// and its share of the surface area.
#[derive(Debug, Clone, Copy)]
pub struct SphereSample {
    pub dir: [f64; 4],
    pub weight: f64,
}

fn golden_angle() -> f64 {
    PI * (3.0 - 5f64.sqrt())
}

/// Fibonacci points on `S^2`, equal weights summing to `4 pi`.
fn fibonacci_s2(m: usize) -> Vec<([f64; 3], f64)> {
    let ga = golden_angle();
    (0..m)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / m as f64;
            let s = (1.0 - z * z).max(0.0).sqrt();
            let phi = ga * i as f64;
            ([z, s * phi.cos(), s * phi.sin()], 4.0 * PI / m as f64)
        })
        .collect()
}

/// Samples on the half of `S^k` with positive `r` component. Weights sum to
/// half the area of `S^k` up to quadrature error. `count` is the
/// approximate number of samples returned.
pub fn half_sphere_samples(k: usize, count: usize) -> Vec<SphereSample> {
    let count = count.max(1);
    match k {
        1 => {
            let n = count;
            (0..n)
                .map(|j| {
                    let th = -PI / 2.0 + (j as f64 + 0.5) * PI / n as f64;
                    SphereSample {
                        dir: [th.cos(), th.sin(), 0.0, 0.0],
                        weight: PI / n as f64,
                    }
                })
                .collect()
        }
        2 => {
            let n = count;
            let ga = golden_angle();
            (0..n)
                .map(|i| {
                    let z = (i as f64 + 0.5) / n as f64;
                    let s = (1.0 - z * z).sqrt();
                    let phi = ga * i as f64;
                    SphereSample {
                        dir: [z, s * phi.cos(), s * phi.sin(), 0.0],
                        weight: 2.0 * PI / n as f64,
                    }
                })
                .collect()
        }
        3 => {
            // r = sin(psi), psi in (0, pi/2); the y-direction lives on S^2.
            let bands = ((count as f64).cbrt().round() as usize).max(2);
            let per_band = (count / bands).max(8);
            let s2 = fibonacci_s2(per_band);
            let dpsi = (PI / 2.0) / bands as f64;
            let mut out = Vec::with_capacity(bands * per_band);
            for b in 0..bands {
                let psi = (b as f64 + 0.5) * dpsi;
                let (z, c) = (psi.sin(), psi.cos());
                for (w, ws) in &s2 {
                    out.push(SphereSample {
                        dir: [z, c * w[0], c * w[1], c * w[2]],
                        weight: c * c * dpsi * ws,
                    });
                }
            }
            out
        }
        _ => panic!("unsupported tangential dimension {k}"),
    }
}

/// Area of the unit sphere `S^k` in `R^{k+1}` for the supported `k`.
pub fn unit_sphere_area(k: usize) -> f64 {
    match k {
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        3 => 2.0 * PI * PI,
        _ => panic!("unsupported tangential dimension {k}"),
    }
}
