//! Staggered tensor grids over the half-domain and node classification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::AxisymDomain;

/// Tensor lattice with spacing `h` on every axis. Along `r` the nodes sit at
/// `(i + r_start + 1/2) h`, so none of them lies on `r = 0`. Along each `y_j`
/// the nodes are `y_origin[j] + i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid {
    pub dim: usize,
    pub h: f64,
    pub n: [usize; 4],
    /// 0 for a half-domain grid; `-n_r/2` for a grid covering both signs of `r`.
    pub r_start: i64,
    pub y_origin: [f64; 4],
}

/// Direction index `2 * axis + side`, `side = 0` for minus, `1` for plus.
pub const fn dir(axis: usize, plus: bool) -> usize {
    2 * axis + plus as usize
}

impl StaggeredGrid {
    /// Half-domain grid (`r > 0`) with at least one cell of margin around `domain`.
    pub fn for_domain(domain: &AxisymDomain, h: f64) -> Result<Self> {
        Self::build(domain, h, false)
    }

    /// Grid covering the whole symmetric domain (both signs of `r`).
    pub fn for_full_domain(domain: &AxisymDomain, h: f64) -> Result<Self> {
        Self::build(domain, h, true)
    }

    fn build(domain: &AxisymDomain, h: f64, full: bool) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParams(format!("grid spacing must be positive, got {h}")));
        }
        let dim = domain.dim();
        let ext = domain.half_extents();
        let mut n = [1usize; 4];
        let mut y_origin = [0.0; 4];
        let nr = (ext[0] / h).ceil() as usize + 2;
        n[0] = if full { 2 * nr } else { nr };
        for j in 1..dim {
            let m = (ext[j] / h).ceil() as usize + 1;
            n[j] = 2 * m + 1;
            y_origin[j] = domain.center()[j - 1] - m as f64 * h;
        }
        let total: usize = n[..dim].iter().product();
        if total > 60_000_000 {
            return Err(Error::InvalidParams(format!("grid with {total} nodes is too large")));
        }
        Ok(Self {
            dim,
            h,
            n,
            r_start: if full { -(nr as i64) } else { 0 },
            y_origin,
        })
    }

    pub fn is_half(&self) -> bool {
        self.r_start == 0
    }

    pub fn len(&self) -> usize {
        self.n[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n[..axis].iter().product()
    }

    pub fn unravel(&self, mut idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for a in 0..self.dim {
            out[a] = idx % self.n[a];
            idx /= self.n[a];
        }
        out
    }

    pub fn ravel(&self, ix: &[usize; 4]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            idx = idx * self.n[a] + ix[a];
        }
        idx
    }

    /// Coordinate of lattice index `i` along `axis` (may lie outside the grid).
    pub fn axis_coord(&self, axis: usize, i: i64) -> f64 {
        if axis == 0 {
            (i + self.r_start) as f64 * self.h + 0.5 * self.h
        } else {
            self.y_origin[axis] + i as f64 * self.h
        }
    }

    pub fn coord(&self, idx: usize) -> [f64; 4] {
        let ix = self.unravel(idx);
        let mut p = [0.0; 4];
        for a in 0..self.dim {
            p[a] = self.axis_coord(a, ix[a] as i64);
        }
        p
    }

    /// Lattice neighbour of `idx` in direction `d`, if it is inside the grid.
    pub fn neighbor(&self, idx: usize, d: usize) -> Option<usize> {
        let axis = d / 2;
        let ix = self.unravel(idx);
        if d % 2 == 1 {
            (ix[axis] + 1 < self.n[axis]).then(|| idx + self.stride(axis))
        } else {
            (ix[axis] > 0).then(|| idx - self.stride(axis))
        }
    }

    /// True when the minus-`r` side of `idx` is the symmetry plane.
    pub fn touches_axis(&self, idx: usize) -> bool {
        self.is_half() && idx.is_multiple_of(self.n[0])
    }
}

/// Classification of one lattice node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeClass {
    /// The node and all of its `2(k+1)` neighbours are inside.
    Interior,
    /// Inside, but the segment to some neighbour crosses the boundary at
    /// fraction `theta in (0, 1]` of the step (indexed by [`dir`]).
    NearBoundary([Option<f64>; 8]),
    Exterior,
}

/// Bisection on the signed distance along `x -> x + h e_axis (+/-)`.
fn cut_fraction(domain: &AxisymDomain, x: &[f64; 4], dim: usize, axis: usize, sign: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut p = *x;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        p[axis] = x[axis] + sign * mid * h;
        if domain.signed_distance(&p[..dim]) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Classify lattice node `idx` of `grid` against `domain`.
pub fn classify_node(domain: &AxisymDomain, grid: &StaggeredGrid, idx: usize) -> NodeClass {
    let dim = grid.dim;
    let x = grid.coord(idx);
    if domain.signed_distance(&x[..dim]) >= 0.0 {
        return NodeClass::Exterior;
    }
    let mut cuts = [None; 8];
    let mut any = false;
    for axis in 0..dim {
        for plus in [false, true] {
            let d = dir(axis, plus);
            if !plus && axis == 0 && grid.touches_axis(idx) {
                continue;
            }
            let sign = if plus { 1.0 } else { -1.0 };
            // the neighbour's own lattice coordinate, so both classifications agree
            let outside = grid
                .neighbor(idx, d)
                .is_none_or(|n| domain.signed_distance(&grid.coord(n)[..dim]) >= 0.0);
            if outside {
                cuts[d] = Some(cut_fraction(domain, &x, dim, axis, sign, grid.h));
                any = true;
            }
        }
    }
    if any {
        NodeClass::NearBoundary(cuts)
    } else {
        NodeClass::Interior
    }
}

/// A grid together with its classification against a domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: AxisymDomain,
    pub grid: StaggeredGrid,
    /// Grid indices of the active (inside) nodes, in increasing order.
    pub active: Vec<usize>,
    /// Active id of each grid node, `u32::MAX` for exterior nodes.
    pub active_id: Vec<u32>,
    /// Boundary cuts of each active node (`None` for interior nodes).
    pub cuts: Vec<Option<Box<[Option<f64>; 8]>>>,
}

pub const INACTIVE: u32 = u32::MAX;

impl Mesh {
    pub fn new(domain: AxisymDomain, grid: StaggeredGrid) -> Result<Self> {
        if domain.dim() != grid.dim {
            return Err(Error::InvalidParams("grid and domain dimensions differ".into()));
        }
        let classes: Vec<(usize, NodeClass)> = (0..grid.len())
            .into_par_iter()
            .filter_map(|idx| match classify_node(&domain, &grid, idx) {
                NodeClass::Exterior => None,
                c => Some((idx, c)),
            })
            .collect();
        let mut active_id = vec![INACTIVE; grid.len()];
        let mut active = Vec::with_capacity(classes.len());
        let mut cuts = Vec::with_capacity(classes.len());
        for (id, (idx, c)) in classes.into_iter().enumerate() {
            active_id[idx] = id as u32;
            active.push(idx);
            cuts.push(match c {
                NodeClass::NearBoundary(t) => Some(Box::new(t)),
                _ => None,
            });
        }
        if active.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            domain,
            grid,
            active,
            active_id,
            cuts,
        })
    }

    /// Half-domain mesh with spacing `h`.
    pub fn half(domain: &AxisymDomain, h: f64) -> Result<Self> {
        let grid = StaggeredGrid::for_domain(domain, h)?;
        Self::new(domain.clone(), grid)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn coord(&self, id: usize) -> [f64; 4] {
        self.grid.coord(self.active[id])
    }

    pub fn is_interior(&self, id: usize) -> bool {
        self.cuts[id].is_none()
    }

    /// Active id of the lattice neighbour of active node `id` in direction `d`.
    pub fn neighbor_id(&self, id: usize, d: usize) -> Option<usize> {
        self.grid
            .neighbor(self.active[id], d)
            .and_then(|g| (self.active_id[g] != INACTIVE).then_some(self.active_id[g] as usize))
    }

    /// Active id of a lattice multi-index, if it is an active node.
    pub fn lookup(&self, ix: &[i64; 4]) -> Option<usize> {
        let mut u = [0usize; 4];
        for a in 0..self.dim() {
            if ix[a] < 0 || ix[a] as usize >= self.grid.n[a] {
                return None;
            }
            u[a] = ix[a] as usize;
        }
        let id = self.active_id[self.grid.ravel(&u)];
        (id != INACTIVE).then_some(id as usize)
    }

    /// Signed distance from active node `id` to the boundary, in units of `h`.
    pub fn depth(&self, id: usize) -> f64 {
        let p = self.coord(id);
        -self.domain.signed_distance(&p[..self.dim()]) / self.grid.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball() -> AxisymDomain {
        AxisymDomain::ball(vec![0.0], 1.0)
    }

    #[test]
    fn half_grid_avoids_axis_and_covers_domain() {
        let g = StaggeredGrid::for_domain(&unit_ball(), 0.1).unwrap();
        assert!((g.axis_coord(0, 0) - 0.05).abs() < 1e-15);
        assert!(g.axis_coord(0, g.n[0] as i64 - 1) > 1.0 + 0.1);
        assert!(g.axis_coord(1, 0) < -1.0 - 0.1 + 1e-12);
        assert!(g.axis_coord(1, g.n[1] as i64 - 1) > 1.0 + 0.1 - 1e-12);
    }

    #[test]
    fn classification_examples() {
        let b = unit_ball();
        let h = 0.1;
        let g = StaggeredGrid {
            dim: 2,
            h,
            n: [20, 41, 1, 1],
            r_start: 0,
            y_origin: [0.0, -2.0, 0.0, 0.0],
        };
        let idx_deep = g.ravel(&[4, 20, 0, 0]);
        assert_eq!(classify_node(&b, &g, idx_deep), NodeClass::Interior);
        let idx_out = g.ravel(&[15, 20, 0, 0]);
        assert_eq!(classify_node(&b, &g, idx_out), NodeClass::Exterior);

        // node r = 0.95 sits 0.3 h inside a ball of radius 0.98
        let dom = AxisymDomain::ball(vec![0.0], 0.98);
        let idx = g.ravel(&[9, 20, 0, 0]);
        match classify_node(&dom, &g, idx) {
            NodeClass::NearBoundary(c) => {
                let t = c[dir(0, true)].unwrap();
                assert!((t - 0.3).abs() < 1e-10, "{t}");
                assert!(c[dir(1, true)].is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classification_symmetric_in_r() {
        let d = AxisymDomain::ellipsoid(vec![0.0], vec![0.7, 1.1]);
        let g = StaggeredGrid::for_full_domain(&d, 0.05).unwrap();
        let nr = g.n[0];
        for idx in 0..g.len() {
            let ix = g.unravel(idx);
            let mirror = g.ravel(&[nr - 1 - ix[0], ix[1], 0, 0]);
            let a = classify_node(&d, &g, idx);
            let b = classify_node(&d, &g, mirror);
            match (a, b) {
                (NodeClass::NearBoundary(x), NodeClass::NearBoundary(y)) => {
                    assert_eq!(x[0].is_some(), y[1].is_some());
                    assert_eq!(x[2], y[2]);
                }
                (x, y) => assert_eq!(std::mem::discriminant(&x), std::mem::discriminant(&y)),
            }
        }
    }

    #[test]
    fn refinement_keeps_interior_inside() {
        let d = AxisymDomain::ellipsoid(vec![0.0], vec![1.0, 0.6]);
        let coarse = Mesh::half(&d, 1.0 / 16.0).unwrap();
        for id in 0..coarse.len() {
            if coarse.is_interior(id) {
                let p = coarse.coord(id);
                assert!(d.signed_distance(&p[..2]) < 0.0);
            }
        }
    }
}
