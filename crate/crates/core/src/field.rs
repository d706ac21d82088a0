//! Grid functions on the active nodes of a [`Mesh`].

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dir, Mesh};

/// Values of a function at every active node of a mesh.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

/// How derivative stencils close at a boundary cut.
#[derive(Clone, Copy)]
pub enum BoundaryData<'a> {
    /// Known boundary values (evaluated at the cut point).
    Dirichlet(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
    /// One-sided differences through interior nodes.
    OneSided,
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::InvalidParams(format!(
                "field has {} values for {} active nodes",
                values.len(),
                mesh.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value at active node {i}")));
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let dim = mesh.dim();
        let values = (0..mesh.len())
            .into_par_iter()
            .map(|id| f(&mesh.coord(id)[..dim]))
            .collect();
        Self { mesh, values }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.len();
        Self { mesh, values: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Map a lattice index along `axis` to a stored one, folding negative
    /// `r` indices of half grids onto their mirror images.
    fn fold(&self, axis: usize, i: i64) -> i64 {
        if axis == 0 && self.mesh.grid.is_half() && i < 0 {
            -1 - i
        } else {
            i
        }
    }

    fn lattice_position(&self, p: &[f64], axis: usize) -> f64 {
        let g = &self.mesh.grid;
        let x = if axis == 0 && g.is_half() { p[0].abs() } else { p[axis] };
        (x - g.axis_coord(axis, 0)) / g.h
    }

    fn tensor_stencil(&self, p: &[f64], nodes: &[[(i64, f64); 3]; 4], width: usize) -> Result<f64> {
        let dim = self.dim();
        let total = width.pow(dim as u32);
        let mut acc = 0.0;
        for c in 0..total {
            let mut rem = c;
            let mut ix = [0i64; 4];
            let mut w = 1.0;
            for a in 0..dim {
                let (i, wa) = nodes[a][rem % width];
                rem /= width;
                ix[a] = self.fold(a, i);
                w *= wa;
            }
            if w == 0.0 {
                continue;
            }
            let id = self
                .mesh
                .lookup(&ix)
                .ok_or_else(|| Error::OutsideField(p[..dim].to_vec()))?;
            acc += w * self.values[id];
        }
        Ok(acc)
    }

    /// Multilinear interpolation. Fails if a corner of the enclosing cell is
    /// not an active node.
    pub fn interpolate(&self, p: &[f64]) -> Result<f64> {
        let mut nodes = [[(0i64, 0.0f64); 3]; 4];
        for a in 0..self.dim() {
            let s = self.lattice_position(p, a);
            let i0 = s.floor();
            let t = s - i0;
            nodes[a] = [(i0 as i64, 1.0 - t), (i0 as i64 + 1, t), (0, 0.0)];
        }
        self.tensor_stencil(p, &nodes, 2)
    }

    /// Tensor-product quadratic Lagrange interpolation on the 3^(k+1) nodes
    /// nearest to `p`.
    pub fn interpolate_quadratic(&self, p: &[f64]) -> Result<f64> {
        let mut nodes = [[(0i64, 0.0f64); 3]; 4];
        for a in 0..self.dim() {
            let s = self.lattice_position(p, a);
            let c = s.round();
            let t = s - c;
            let c = c as i64;
            nodes[a] = [
                (c - 1, 0.5 * t * (t - 1.0)),
                (c, 1.0 - t * t),
                (c + 1, 0.5 * t * (t + 1.0)),
            ];
        }
        self.tensor_stencil(p, &nodes, 3)
    }

    /// Second-order nodal gradient. Interior arms use unequal-arm central
    /// differences; the symmetry plane uses the even reflection.
    pub fn gradient(&self, boundary: BoundaryData<'_>) -> Vec<[f64; 4]> {
        (0..self.mesh.len())
            .into_par_iter()
            .map(|id| self.gradient_at(id, boundary))
            .collect()
    }

    pub fn gradient_at(&self, id: usize, boundary: BoundaryData<'_>) -> [f64; 4] {
        let mesh = &self.mesh;
        let h = mesh.grid.h;
        let dim = mesh.dim();
        let x = mesh.coord(id);
        let u = self.values[id];
        let mut g = [0.0; 4];
        for (axis, ga) in g.iter_mut().enumerate().take(dim) {
            // (value, arm length) on each side, None when unavailable.
            let mut side = [None, None];
            for (s, plus) in [(0usize, false), (1usize, true)] {
                let d = dir(axis, plus);
                if let Some(nb) = mesh.neighbor_id(id, d) {
                    if mesh.cuts[id].as_ref().and_then(|c| c[d]).is_none() {
                        side[s] = Some((self.values[nb], h));
                        continue;
                    }
                }
                if !plus && axis == 0 && mesh.grid.touches_axis(mesh.active[id]) {
                    side[s] = Some((u, h));
                    continue;
                }
                if let (Some(theta), BoundaryData::Dirichlet(f)) =
                    (mesh.cuts[id].as_ref().and_then(|c| c[d]), boundary)
                {
                    let mut p = x;
                    p[axis] += if plus { theta * h } else { -theta * h };
                    side[s] = Some((f(&p[..dim]), theta * h));
                }
            }
            *ga = match side {
                [Some((ul, hl)), Some((ur, hr))] => {
                    (hl * hl * (ur - u) + hr * hr * (u - ul)) / (hl * hr * (hl + hr))
                }
                [None, Some(_)] => self.one_sided(id, axis, true),
                [Some(_), None] => self.one_sided(id, axis, false),
                [None, None] => 0.0,
            };
        }
        g
    }

    fn one_sided(&self, id: usize, axis: usize, plus: bool) -> f64 {
        let h = self.mesh.grid.h;
        let d = dir(axis, plus);
        let sign = if plus { 1.0 } else { -1.0 };
        let u0 = self.values[id];
        let Some(n1) = self.mesh.neighbor_id(id, d) else {
            return 0.0;
        };
        let u1 = self.values[n1];
        match self.mesh.neighbor_id(n1, d) {
            Some(n2) => sign * (-3.0 * u0 + 4.0 * u1 - self.values[n2]) / (2.0 * h),
            None => sign * (u1 - u0) / h,
        }
    }

    /// CSV with header `r,y1,...,yk,u`, one active node per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.dim();
        let mut header = String::from("r");
        for j in 1..dim {
            header.push_str(&format!(",y{j}"));
        }
        header.push_str(",u\n");
        w.write_all(header.as_bytes())?;
        let mut line = String::new();
        for id in 0..self.mesh.len() {
            line.clear();
            let p = self.mesh.coord(id);
            for v in &p[..dim] {
                line.push_str(&format!("{v:.16e},"));
            }
            line.push_str(&format!("{:.16e}\n", self.values[id]));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Parse a field written by [`write_csv`](Self::write_csv) onto `mesh`.
    pub fn read_csv(mesh: Arc<Mesh>, text: &str) -> Result<Self> {
        let dim = mesh.dim();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
        if header.split(',').count() != dim + 1 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let mut values = Vec::with_capacity(mesh.len());
        for (n, l) in lines.enumerate() {
            let last = l.rsplit(',').next().unwrap_or("");
            values.push(
                last.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?,
            );
        }
        Self::new(mesh, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisymDomain;

    fn mesh(h: f64) -> Arc<Mesh> {
        Arc::new(Mesh::half(&AxisymDomain::ball(vec![0.0], 1.0), h).unwrap())
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = mesh(1.0 / 16.0);
        let lin = ScalarField::from_fn(m.clone(), |p| 1.0 + 2.0 * p[1] + p[0] * p[0]);
        let quad = ScalarField::from_fn(m, |p| 1.0 + 2.0 * p[1] * p[1] - p[0] * p[0] * 3.0 + p[0] * p[0] * p[1]);
        for p in [[0.013, 0.2], [0.4, -0.31], [0.6, 0.1]] {
            // multilinear is exact for bilinear functions of (r^2-free) data; r^2 is not
            let exact = 1.0 + 2.0 * p[1] * p[1] - 3.0 * p[0] * p[0] + p[0] * p[0] * p[1];
            assert!((quad.interpolate_quadratic(&p).unwrap() - exact).abs() < 1e-12);
            let v = lin.interpolate(&p).unwrap();
            assert!((v - (1.0 + 2.0 * p[1] + p[0] * p[0])).abs() < 1e-2);
        }
    }

    #[test]
    fn interpolation_outside_fails() {
        let m = mesh(0.1);
        let f = ScalarField::zeros(m);
        assert!(matches!(f.interpolate(&[0.99, 0.1]), Err(Error::OutsideField(_))));
    }

    #[test]
    fn gradient_exact_on_quadratics_with_dirichlet() {
        let m = mesh(1.0 / 16.0);
        let u = |p: &[f64]| (1.0 - p[0] * p[0] - p[1] * p[1]) / 6.0;
        let f = ScalarField::from_fn(m.clone(), u);
        let g = f.gradient(BoundaryData::Dirichlet(&u));
        for id in 0..m.len() {
            let p = m.coord(id);
            assert!((g[id][0] + p[0] / 3.0).abs() < 1e-11);
            assert!((g[id][1] + p[1] / 3.0).abs() < 1e-11);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let m = mesh(0.25);
        let f = ScalarField::from_fn(m.clone(), |p| p[0] + 1.0 / 3.0 * p[1]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,y1,u\n"));
        let g = ScalarField::read_csv(m, &text).unwrap();
        assert_eq!(f.values, g.values);
    }
}
