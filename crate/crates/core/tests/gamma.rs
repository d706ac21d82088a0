use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weinstein::config::SolverConfig;
use weinstein::gamma::*;
use weinstein::poly::{rational, PolyField};
use weinstein::rigidity::{explicit_ball_solution, solve_torsion};
use weinstein::{AxisymDomain, Mesh, ScalarField, WeinsteinParams};

const AS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];

fn weinstein_weights(a: f64, k: usize) -> BesselWeights {
    BesselWeights::weinstein(&WeinsteinParams::new(a, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cd_defect_is_nonnegative(ai in 0usize..4, k in 1usize..=2, seed in any::<u64>()) {
        let w = weinstein_weights(AS[ai], k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(cd_violations(&mut rng, &w, 3, 10, 6).unwrap(), 0);
    }

    #[test]
    fn cd_holds_for_sums_of_bessel_operators(a1 in 0usize..4, a2 in 0usize..4, seed in any::<u64>()) {
        let w = BesselWeights::new(vec![AS[a1], AS[a2], 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(cd_violations(&mut rng, &w, 2, 10, 4).unwrap(), 0);
    }

    #[test]
    fn elementary_inequality_direct(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let n = rng.gen_range(1..=5);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let gap = elementary_inequality_gap(&w, &a).unwrap();
            // oracle: sum A_i^2 / w_i - (sum A_i)^2 / sum w_i
            let direct = a.iter().zip(&w).map(|(a, w)| a * a / w).sum::<f64>()
                - a.iter().sum::<f64>().powi(2) / w.iter().sum::<f64>();
            let scale = a.iter().zip(&w).map(|(a, w)| a * a / w).sum::<f64>();
            prop_assert!(gap >= 0.0);
            prop_assert!((gap - direct).abs() <= 1e-12 * scale.max(1.0));
            let lambda = rng.gen_range(-3.0..3.0);
            let prop: Vec<f64> = w.iter().map(|w| lambda * w).collect();
            prop_assert!(elementary_inequality_gap(&w, &prop).unwrap() <= 1e-12 * (lambda * lambda * w.iter().sum::<f64>()).max(1.0));
        }
    }
}

#[test]
fn cd_exactness_at_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = 0;
    for a in AS {
        for k in [1, 2] {
            let w = weinstein_weights(a, k);
            total += cd_violations(&mut rng, &w, 25, 10, 6).unwrap();
        }
    }
    assert_eq!(total, 0);
}

#[test]
fn reduction_identity_on_random_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let w = weinstein_weights(AS[i % 4], 1 + i % 2);
        let u = random_even_polynomial(&mut rng, &w, 6);
        assert_eq!(gamma2(&u, &w).unwrap(), gamma2_closed_form(&u, &w).unwrap(), "{u}");
    }
}

fn random_rational(rng: &mut impl Rng) -> BigRational {
    rational(rng.gen_range(-16..=16), rng.gen_range(1..=8))
}

fn random_equality(rng: &mut impl Rng, w: &BesselWeights) -> PolyField {
    let mut alpha = random_rational(rng);
    if alpha.is_zero() {
        alpha = rational(1, 3);
    }
    // axisymmetric members: no linear term in r even when a = 0
    let beta: Vec<BigRational> = (0..w.len())
        .map(|i| if i == 0 { BigRational::zero() } else { random_rational(rng) })
        .collect();
    equality_quadratic(w, alpha, &beta, random_rational(rng))
}

/// Random even polynomial with a quartic leading term, never in the equality family.
fn random_generic(rng: &mut impl Rng, w: &BesselWeights) -> PolyField {
    let n = w.len();
    let base = random_even_polynomial(rng, w, 6);
    let mut e = [0u32; 4];
    e[rng.gen_range(0..n)] = 4;
    &base + &PolyField::monomial(n, rational(rng.gen_range(1..=8), 4), e)
}

fn defect_vanishes_on_sample(d: &PolyField, rng: &mut impl Rng, w: &BesselWeights) -> bool {
    (0..10).all(|_| d.eval_exact(&random_rational_point(rng, w, 0.1, 2.0)).is_zero())
}

#[test]
fn equality_classification_both_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for a in AS {
        for k in [1, 2] {
            let w = weinstein_weights(a, k);
            for _ in 0..10 {
                let u = random_equality(&mut rng, &w);
                let d = cd_defect(&u, &w).unwrap();
                assert!(d.is_zero(), "{u}");
                assert!(defect_vanishes_on_sample(&d, &mut rng, &w));
                let fit = quadratic_equality_fit(&u).unwrap();
                assert!(fit.is_equality_case(1e-10), "{u}: {fit:?}");

                let v = random_generic(&mut rng, &w);
                let dv = cd_defect(&v, &w).unwrap();
                assert!(!defect_vanishes_on_sample(&dv, &mut rng, &w), "{v}");
                assert!(!quadratic_equality_fit(&v).unwrap().is_equality_case(1e-10), "{v}");
            }
        }
    }
}

#[test]
fn defect_values_are_exact_rationals() {
    let w = weinstein_weights(1.0, 1);
    let r = PolyField::var(2, 0);
    let y = PolyField::var(2, 1);
    let u = &(&r * &r) * &y;
    let one = [rational(1, 1), rational(1, 1)];
    assert_eq!(gamma2(&u, &w).unwrap().eval_exact(&one), rational(16, 1));
    assert_eq!(cd_defect(&u, &w).unwrap().eval_exact(&one), rational(32, 3));
    assert!(cd_defect(&u, &w).unwrap().eval_exact(&one).is_positive());
}

/// `u = r^4 + r^2 y - y^3 / 3 + y^2`, exact Gamma_2 against the grid stencil.
#[test]
fn grid_gamma2_matches_exact_mode() {
    let a = 1.0;
    let params = WeinsteinParams::new(a, 1).unwrap();
    let w = BesselWeights::weinstein(&params);
    let u = PolyField::parse("1 4 0\n1 2 1\n-1/3 0 3\n1 0 2").unwrap();
    let exact = gamma2(&u, &w).unwrap();
    let dom = AxisymDomain::ball(vec![0.0], 1.0);
    let mut errs = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let mesh = Arc::new(Mesh::half(&dom, h).unwrap());
        let f = ScalarField::from_fn(mesh.clone(), |x| u.eval(x));
        let g = grid_gamma2(&f, &params);
        let err = g
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (v - exact.eval(&mesh.coord(i)[..2])).abs()))
            .fold(0.0, f64::max);
        errs.push(err);
    }
    for e in errs.windows(2) {
        assert!((e[0] / e[1]).log2() > 1.8, "{errs:?}");
    }
}

#[test]
fn p_function_on_the_ball() {
    let cfg = SolverConfig::default();
    for (a, k) in [(0.5, 1usize), (1.0, 2)] {
        let params = WeinsteinParams::new(a, k).unwrap();
        let n = params.dim_eff();
        let dom = AxisymDomain::ball(vec![0.0; k], 1.0);
        let (u, _) = solve_torsion(&dom, &params, 1.0 / 16.0, &cfg).unwrap();
        let p = p_function(&u, &params);
        for v in &p.values {
            assert!((v - 1.0 / (n * n)).abs() < 1e-9, "{v}");
        }
        let lp = summarize_subharmonicity(&p_subharmonicity_defect(&u, &params), 1e-8);
        assert!(lp.nodes > 0 && lp.min.abs() < 1e-8 && lp.fraction_below == 0.0, "{lp:?}");
        let zero = ScalarField::zeros(u.mesh.clone());
        assert!(p_function(&zero, &params).max_abs() == 0.0);
    }
}

#[test]
fn equality_profile_on_a_subdomain() {
    // gamma - rho^2 / (2n) about y0 = 0.3, restricted to an ellipsoid
    let params = WeinsteinParams::new(1.0, 1).unwrap();
    let dom = AxisymDomain::ellipsoid(vec![0.0], vec![0.7, 1.2]);
    let mesh = Arc::new(Mesh::half(&dom, 1.0 / 32.0).unwrap());
    let prof = explicit_ball_solution(&params, &[0.3], 2.0);
    let u = ScalarField::from_fn(mesh, |x| prof(x));
    let d = p_subharmonicity_defect(&u, &params);
    assert!(d.iter().flatten().all(|v| v.abs() < 1e-9));
    let cd = grid_cd_defect(&u, &params);
    assert!(cd.iter().flatten().all(|v| v.abs() < 1e-9));
    let fit = quadratic_equality_fit(&u).unwrap();
    assert!(fit.is_equality_case(1e-10), "{fit:?}");
    assert!((fit.alpha + 1.0 / 6.0).abs() < 1e-10);
    assert!((fit.y0.unwrap()[0] - 0.3).abs() < 1e-9);
}

#[test]
fn ellipsoid_is_not_an_equality_case() {
    let params = WeinsteinParams::new(1.0, 1).unwrap();
    let dom = AxisymDomain::ellipsoid(vec![0.0], vec![1.0, 2.0]);
    let (u, _) = solve_torsion(&dom, &params, 1.0 / 32.0, &SolverConfig::default()).unwrap();
    let fit = quadratic_equality_fit(&u).unwrap();
    assert!(fit.residual > 1e-3, "{fit:?}");
    let p = p_function(&u, &params);
    let (lo, hi) = p.values.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi - lo > 1e-2 * hi, "{lo} {hi}");
}
