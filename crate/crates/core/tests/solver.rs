use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weinstein::operator::{assemble_torsion_system, SparseSystem};
use weinstein::solver::{is_weighted_symmetric, Csr, Method};
use weinstein::{solve, AxisymDomain, Error, Mesh, WeinsteinParams};

fn torsion(dom: &AxisymDomain, a: f64, k: usize, h: f64) -> SparseSystem {
    let q = WeinsteinParams::new(a, k).unwrap();
    let mesh = Arc::new(Mesh::half(dom, h).unwrap());
    assemble_torsion_system(mesh, &q, &|_| -1.0, &|_| 0.0).unwrap()
}

fn rel_residual(sys: &SparseSystem, u: &[f64]) -> f64 {
    let au = sys.matrix.mul(u);
    let num: f64 = au.iter().zip(&sys.rhs).map(|(a, b)| (b - a).powi(2)).sum();
    let den: f64 = sys.rhs.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

/// Symmetric chain `-(2.5 u_i - u_{i-1} - u_{i+1})` over the mesh's nodes.
fn chain(template: &SparseSystem, weights: Vec<f64>) -> SparseSystem {
    let n = template.matrix.n;
    let nbrs: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut v = Vec::new();
            if i > 0 {
                v.push((i - 1, 1.0));
            }
            if i + 1 < n {
                v.push((i + 1, 1.0));
            }
            v
        })
        .collect();
    let matrix = Csr::from_rows(nbrs.iter().map(|r| (-2.5, r.as_slice())));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    SparseSystem {
        mesh: template.mesh.clone(),
        matrix,
        rhs: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        weights,
    }
}

#[test]
fn curved_domains_select_bicgstab() {
    let sys = torsion(&AxisymDomain::ball(vec![0.0], 1.0), 1.0, 1, 1.0 / 16.0);
    assert!(!is_weighted_symmetric(&sys));
    let (u, rep) = solve(&sys, 1e-10, 20000).unwrap();
    assert_eq!(rep.method, Method::BiCGStab);
    assert!(rep.final_relative_residual <= 1e-10);
    assert!((rel_residual(&sys, &u.values) - rep.final_relative_residual).abs() <= 1e-12);
}

#[test]
fn cg_and_bicgstab_agree() {
    let base = torsion(&AxisymDomain::ball(vec![0.0], 1.0), 1.0, 1, 1.0 / 16.0);
    let n = base.matrix.n;
    let sym = chain(&base, vec![1.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let skew = chain(&base, (0..n).map(|_| rng.gen_range(0.5..2.0)).collect());
    assert!(is_weighted_symmetric(&sym) && !is_weighted_symmetric(&skew));
    let (u1, r1) = solve(&sym, 1e-12, 5000).unwrap();
    let (u2, r2) = solve(&skew, 1e-12, 5000).unwrap();
    assert_eq!((r1.method, r2.method), (Method::CG, Method::BiCGStab));
    let scale = u1.max_abs();
    for (a, b) in u1.values.iter().zip(&u2.values) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn no_convergence_carries_best_iterate() {
    let sys = torsion(&AxisymDomain::ellipsoid(vec![0.0], vec![1.0, 2.0]), 1.0, 1, 1.0 / 32.0);
    match solve(&sys, 1e-10, 30) {
        Err(Error::NoConvergence { max_iter, residual, best, iterations }) => {
            assert_eq!(max_iter, 30);
            assert!(iterations <= 30);
            assert_eq!(best.len(), sys.matrix.n);
            assert!(residual < 1.0 && residual > 1e-10);
            assert!((rel_residual(&sys, &best) - residual).abs() <= 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn tolerance_range_is_checked() {
    let sys = torsion(&AxisymDomain::ball(vec![0.0], 1.0), 1.0, 1, 1.0 / 8.0);
    for tol in [0.0, -1.0, 0.5, f64::NAN] {
        assert!(matches!(solve(&sys, tol, 100), Err(Error::InvalidParams(_))), "{tol}");
    }
}

#[test]
fn solves_are_deterministic() {
    let sys = torsion(&AxisymDomain::ellipsoid(vec![0.0, 0.0], vec![1.0, 1.5, 1.5]), 0.5, 2, 1.0 / 16.0);
    let runs: Vec<Vec<f64>> = (0..3).map(|_| solve(&sys, 1e-10, 20000).unwrap().0.values).collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
    let with_threads = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| solve(&sys, 1e-10, 20000).unwrap().0.values)
    };
    let (one, four) = (with_threads(1), with_threads(4));
    let scale = one.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in one.iter().zip(&four) {
        assert!((a - b).abs() <= 1e-13 * scale);
    }
}
