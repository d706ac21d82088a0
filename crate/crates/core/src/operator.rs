//! The discrete Weinstein operator in weighted divergence form
//! `r^{-a} d_r (r^a d_r) + Lap_y`.
//!
//! Every `r`-row is a finite-volume balance over `[r - h_l/2, r + h_r/2]`
//! with face weights `|s|^a` and the exact cell measure `int |s|^a ds`. At
//! the symmetry plane of a half grid the inner face has zero flux, which
//! encodes `u_r(0, y) = 0`. Arms that cross the boundary are shortened to
//! the cut point and take the Dirichlet value there (Shortley-Weller).
//! Rows of cut nodes are not symmetric in the weighted inner product.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::BoundarySample;
use crate::grid::{dir, Mesh};
use crate::measure::{cell_r_weight, r_weight_between};
use crate::params::WeinsteinParams;
use crate::solver::Csr;

/// Scalar function of a point, shareable across worker threads.
pub type PointFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Stencil of one active node: diagonal, active neighbours and boundary cuts.
#[derive(Debug, Clone, Default)]
pub struct RowStencil {
    pub diag: f64,
    pub neighbors: Vec<(usize, f64)>,
    /// `(cut point, coefficient)`: the row reads `coefficient * g(cut point)`.
    pub cuts: Vec<([f64; 4], f64)>,
}

/// Build the stencil of active node `id`.
pub fn row_stencil(mesh: &Mesh, params: &WeinsteinParams, id: usize) -> RowStencil {
    let grid = &mesh.grid;
    let h = grid.h;
    let dim = mesh.dim();
    let x = mesh.coord(id);
    let cuts = mesh.cuts[id].as_deref();
    let mut row = RowStencil::default();

    // (arm length, Some(neighbour id) or None for a cut) per side
    let arm = |axis: usize, plus: bool| -> Option<(f64, Option<usize>)> {
        let d = dir(axis, plus);
        if let Some(theta) = cuts.and_then(|c| c[d]) {
            return Some((theta * h, None));
        }
        if !plus && axis == 0 && grid.touches_axis(mesh.active[id]) {
            return None;
        }
        let nb = mesh
            .neighbor_id(id, d)
            .expect("uncut neighbour of an active node is active");
        Some((h, Some(nb)))
    };
    let push = |axis: usize, plus: bool, len: f64, nb: Option<usize>, c: f64, row: &mut RowStencil| {
        row.diag -= c;
        match nb {
            Some(n) => row.neighbors.push((n, c)),
            None => {
                let mut p = x;
                p[axis] += if plus { len } else { -len };
                row.cuts.push((p, c));
            }
        }
    };

    // r: finite-volume balance with |s|^a faces
    let a = params.a;
    let right = arm(0, true).expect("plus-r arm always exists");
    let left = arm(0, false);
    let f_r = x[0] + 0.5 * right.0;
    let f_l = match left {
        Some((len, _)) => x[0] - 0.5 * len,
        None => 0.0,
    };
    let vol = r_weight_between(a, f_l, f_r);
    push(0, true, right.0, right.1, f_r.abs().powf(a) / (right.0 * vol), &mut row);
    if let Some((len, nb)) = left {
        push(0, false, len, nb, f_l.abs().powf(a) / (len * vol), &mut row);
    }

    // y: unequal-arm three-point Laplacian
    for axis in 1..dim {
        let (hr, nr) = arm(axis, true).expect("y arms always exist");
        let (hl, nl) = arm(axis, false).expect("y arms always exist");
        push(axis, true, hr, nr, 2.0 / (hr * (hl + hr)), &mut row);
        push(axis, false, hl, nl, 2.0 / (hl * (hl + hr)), &mut row);
    }
    row
}

fn all_rows(mesh: &Mesh, params: &WeinsteinParams) -> Vec<RowStencil> {
    (0..mesh.len())
        .into_par_iter()
        .map(|id| row_stencil(mesh, params, id))
        .collect()
}

/// Weights of the discrete inner product `<u, v> = sum u v w`, with
/// `w = int_cell |s|^a ds * h^k`.
pub fn inner_product_weights(mesh: &Mesh, params: &WeinsteinParams) -> Vec<f64> {
    let grid = &mesh.grid;
    let hk = grid.h.powi(grid.dim as i32 - 1);
    mesh.active
        .iter()
        .map(|&g| cell_r_weight(grid, params.a, g % grid.n[0]) * hk)
        .collect()
}

/// Apply the discrete `L_a` at every active node. Cut arms read `dirichlet`;
/// without it any cut node yields `MissingBoundaryData`.
pub fn apply_operator(
    u: &ScalarField,
    params: &WeinsteinParams,
    dirichlet: Option<PointFn<'_>>,
) -> Result<ScalarField> {
    let mesh = &u.mesh;
    let dim = mesh.dim();
    let out: Result<Vec<f64>> = (0..mesh.len())
        .into_par_iter()
        .map(|id| {
            let row = row_stencil(mesh, params, id);
            let mut v = row.diag * u.values[id];
            for (n, c) in &row.neighbors {
                v += c * u.values[*n];
            }
            if !row.cuts.is_empty() {
                let g = dirichlet.ok_or(Error::MissingBoundaryData)?;
                for (p, c) in &row.cuts {
                    v += c * g(&p[..dim]);
                }
            }
            Ok(v)
        })
        .collect();
    Ok(ScalarField {
        mesh: mesh.clone(),
        values: out?,
    })
}

/// Discrete `L_a` at interior nodes only (`None` at cut nodes).
pub fn apply_operator_interior(u: &ScalarField, params: &WeinsteinParams) -> Vec<Option<f64>> {
    let mesh = &u.mesh;
    (0..mesh.len())
        .into_par_iter()
        .map(|id| {
            if !mesh.is_interior(id) {
                return None;
            }
            let row = row_stencil(mesh, params, id);
            let mut v = row.diag * u.values[id];
            for (n, c) in &row.neighbors {
                v += c * u.values[*n];
            }
            Some(v)
        })
        .collect()
}

/// Assembled `A u = b` over the active nodes of `mesh`. `A` approximates
/// `L_a` itself (negative diagonal); `b` carries the forcing minus the
/// Dirichlet contributions of cut arms.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub mesh: Arc<Mesh>,
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    /// Weights of the inner product in which interior rows are symmetric.
    pub weights: Vec<f64>,
}

/// Minimum number of cells across the smallest semi-axis.
pub const MIN_CELLS_ACROSS: f64 = 8.0;

/// Assemble `L_a u = rhs` in the mesh with `u = dirichlet` on the boundary.
pub fn assemble_torsion_system(
    mesh: Arc<Mesh>,
    params: &WeinsteinParams,
    rhs: PointFn<'_>,
    dirichlet: PointFn<'_>,
) -> Result<SparseSystem> {
    let cells = mesh.domain.min_feature() / mesh.grid.h;
    if cells < MIN_CELLS_ACROSS - 1e-9 {
        return Err(Error::GridTooCoarse(format!(
            "{cells:.2} cells across the smallest semi-axis, need {MIN_CELLS_ACROSS}"
        )));
    }
    let dim = mesh.dim();
    let rows = all_rows(&mesh, params);
    let b: Vec<f64> = rows
        .par_iter()
        .enumerate()
        .map(|(id, row)| {
            let x = mesh.coord(id);
            let mut v = rhs(&x[..dim]);
            for (p, c) in &row.cuts {
                v -= c * dirichlet(&p[..dim]);
            }
            v
        })
        .collect();
    let matrix = Csr::from_rows(rows.iter().map(|r| (r.diag, r.neighbors.as_slice())));
    let weights = inner_product_weights(&mesh, params);
    Ok(SparseSystem {
        mesh,
        matrix,
        rhs: b,
        weights,
    })
}

/// Distance, in grid steps, of the two probes used for boundary gradients.
pub const NORMAL_PROBE_STEPS: f64 = 3.0;

/// Signed normal derivative `u_nu` at boundary samples of a field that
/// vanishes on `Sigma`: second-order one-sided difference along `-nu`
/// through the boundary value and two probes at distances `d` and `2d`
/// (quadratic interpolation, `d = 3h`).
pub fn boundary_normal_derivative(u: &ScalarField, samples: &[BoundarySample]) -> Result<Vec<f64>> {
    let dim = u.dim();
    let d = NORMAL_PROBE_STEPS * u.mesh.grid.h;
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut p1 = [0.0; 4];
            let mut p2 = [0.0; 4];
            for j in 0..dim {
                p1[j] = s.point[j] - d * s.normal[j];
                p2[j] = s.point[j] - 2.0 * d * s.normal[j];
            }
            let u1 = u
                .interpolate_quadratic(&p1[..dim])
                .map_err(|_| Error::StencilLeavesDomain(i))?;
            let u2 = u
                .interpolate_quadratic(&p2[..dim])
                .map_err(|_| Error::StencilLeavesDomain(i))?;
            // derivative along -nu is (4 u1 - u2 - 3 u0) / (2 d) with u0 = 0
            Ok(-(4.0 * u1 - u2) / (2.0 * d))
        })
        .collect()
}

/// `|u_nu|` at each boundary sample.
pub fn boundary_normal_gradient(u: &ScalarField, samples: &[BoundarySample]) -> Result<Vec<f64>> {
    Ok(boundary_normal_derivative(u, samples)?
        .into_iter()
        .map(f64::abs)
        .collect())
}

/// One tangential column's estimate of `u_r(0, y)`.
#[derive(Debug, Clone, Copy)]
pub struct AxisDerivative {
    pub y: [f64; 4],
    pub u_r: f64,
}

/// Extrapolated `u_r(0, y)` per tangential column: derivative at `r = 0` of
/// the quadratic through the three nodes nearest the axis. Short columns use
/// the boundary cut (where the torsion solution vanishes) as the last point.
pub fn normal_derivative_at_axis(u: &ScalarField) -> Vec<AxisDerivative> {
    let mesh = &u.mesh;
    let grid = &mesh.grid;
    let h = grid.h;
    let i0 = if grid.is_half() { 0 } else { (-grid.r_start) as usize };
    let mut out = Vec::new();
    for (id, &g) in mesh.active.iter().enumerate() {
        if g % grid.n[0] != i0 {
            continue;
        }
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(3);
        let mut cur = id;
        loop {
            let r = mesh.coord(cur)[0];
            pts.push((r, u.values[cur]));
            if pts.len() == 3 {
                break;
            }
            match mesh.neighbor_id(cur, dir(0, true)) {
                Some(n) => cur = n,
                None => {
                    if let Some(t) = mesh.cuts[cur].as_ref().and_then(|c| c[dir(0, true)]) {
                        pts.push((r + t * h, 0.0));
                    }
                    break;
                }
            }
        }
        if pts.len() < 2 {
            continue;
        }
        out.push(AxisDerivative {
            y: mesh.coord(id),
            u_r: lagrange_derivative_at_zero(&pts),
        });
    }
    out
}

fn lagrange_derivative_at_zero(pts: &[(f64, f64)]) -> f64 {
    let mut d = 0.0;
    for (i, &(xi, fi)) in pts.iter().enumerate() {
        // l_i'(0) = sum_{m != i} prod_{j != i, m} (0 - x_j) / prod_{j != i} (x_i - x_j)
        let denom: f64 = pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| xi - p.0).product();
        let mut num = 0.0;
        for m in (0..pts.len()).filter(|&m| m != i) {
            num += pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i && *j != m)
                .map(|(_, p)| -p.0)
                .product::<f64>();
        }
        d += fi * num / denom;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisymDomain;

    fn setup(a: f64, k: usize, h: f64) -> (Arc<Mesh>, WeinsteinParams) {
        let p = WeinsteinParams::new(a, k).unwrap();
        let d = AxisymDomain::ball(vec![0.0; k], 1.0);
        (Arc::new(Mesh::half(&d, h).unwrap()), p)
    }

    #[test]
    fn constants_are_annihilated() {
        let (m, p) = setup(0.7, 2, 1.0 / 8.0);
        let u = ScalarField::from_fn(m, |_| 3.5);
        let g = |_: &[f64]| 3.5;
        let lu = apply_operator(&u, &p, Some(&g)).unwrap();
        assert!(lu.max_abs() < 1e-10);
    }

    #[test]
    fn radial_quadratic_is_exact() {
        for a in [0.0, 0.5, 1.0, 2.0] {
            let (m, p) = setup(a, 1, 1.0 / 16.0);
            let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
            let u = ScalarField::from_fn(m, f);
            let lu = apply_operator(&u, &p, Some(&f)).unwrap();
            let want = 2.0 * p.dim_eff();
            for v in &lu.values {
                assert!((v - want).abs() < 1e-9 * want, "a={a}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn missing_dirichlet_is_reported() {
        let (m, p) = setup(1.0, 1, 1.0 / 8.0);
        let u = ScalarField::zeros(m);
        assert_eq!(apply_operator(&u, &p, None).unwrap_err(), Error::MissingBoundaryData);
    }

    #[test]
    fn interior_rows_are_weighted_symmetric() {
        let (m, p) = setup(1.3, 1, 1.0 / 16.0);
        let rows = all_rows(&m, &p);
        let w = inner_product_weights(&m, &p);
        for (i, row) in rows.iter().enumerate() {
            assert!(row.diag < 0.0);
            assert!(row.neighbors.len() + row.cuts.len() <= 2 * (p.k + 1));
            if !m.is_interior(i) {
                continue;
            }
            for &(j, c) in &row.neighbors {
                if !m.is_interior(j) {
                    continue;
                }
                let back = rows[j].neighbors.iter().find(|e| e.0 == i).unwrap().1;
                assert!((w[i] * c - w[j] * back).abs() <= 1e-12 * (w[i] * c).abs());
            }
        }
    }

    #[test]
    fn grid_too_coarse() {
        let (m, p) = setup(1.0, 1, 0.2);
        let z = |_: &[f64]| 0.0;
        assert!(matches!(
            assemble_torsion_system(m, &p, &z, &z),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn axis_derivative_detects_odd_fields() {
        let (m, _) = setup(1.0, 1, 1.0 / 16.0);
        // both vanish on the unit sphere, as a torsion solution does
        let even = ScalarField::from_fn(m.clone(), |x| 1.0 - x[0] * x[0] - x[1] * x[1]);
        let odd = ScalarField::from_fn(m, |x| x[0] * (1.0 - x[0] * x[0] - x[1] * x[1]));
        for c in normal_derivative_at_axis(&even) {
            assert!(c.u_r.abs() < 1e-12);
        }
        let cols = normal_derivative_at_axis(&odd);
        assert!(cols.len() >= 30);
        for c in cols {
            assert!((c.u_r - (1.0 - c.y[1] * c.y[1])).abs() < 0.05, "{c:?}");
        }
    }
}
