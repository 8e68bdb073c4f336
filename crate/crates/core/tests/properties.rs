mod common;

use common::{explicit, normals, random_system, unitary_system, vector};
use koopcert::certify::{kmd_error_bounds, kmd_error_bounds_full, op_norm_power, Aggregation};
use koopcert::dynamics::{generate_snapshots, BoxBounds, DynamicalSystem, LebesgueShift, Sampling, SnapshotSet};
use koopcert::galerkin::build_edmd;
use koopcert::geometry::principal_angles;
use koopcert::linalg::SymEig;
use koopcert::observables::{eval_kernel_matrix, Dictionary, KernelSpec};
use koopcert::special::matern_profile;
use koopcert::surrogate::{expected_op_norm, EigenLaw, GpSurrogate, SurrogateBasis};
use koopcert::tune::{adam_minimize, AdamConfig, ParamBox};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn joint_gram_is_psd(seed in 0u64..10_000, n in 2usize..9) {
        let sys = random_system(seed, n, 4 * n + 3);
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&sys.g);
        j.view_mut((0, n), (n, n)).copy_from(&sys.a);
        j.view_mut((n, 0), (n, n)).copy_from(&sys.a.transpose());
        j.view_mut((n, n), (n, n)).copy_from(&sys.l);
        let e = SymEig::new(&j);
        let top = e.values[0];
        prop_assert!(e.values[2 * n - 1] >= -1e-8 * top);
    }

    #[test]
    fn edmd_permutation_invariant(seed in 0u64..10_000, shift in 1usize..60) {
        let s = generate_snapshots(
            &DynamicalSystem::duffing(),
            &Sampling::RandomBox { bounds: BoxBounds::cube(2, -2.0, 2.0), count: 61, seed },
        ).unwrap();
        let perm: Vec<usize> = (0..s.len()).map(|i| (i * 7 + shift) % s.len()).collect();
        let x = DMatrix::from_fn(s.len(), 2, |i, j| s.x[(perm[i], j)]);
        let y = DMatrix::from_fn(s.len(), 2, |i, j| s.y[(perm[i], j)]);
        let w = DVector::from_fn(s.len(), |i, _| s.weights[perm[i]]);
        let p = SnapshotSet::new(x, y, w, s.provenance.clone()).unwrap();
        let dict = Dictionary::chebyshev(3, BoxBounds::cube(2, -2.5, 2.5));
        let a = build_edmd(&dict, &s).unwrap();
        let b = build_edmd(&dict, &p).unwrap();
        let scale = a.g.amax().max(a.l.amax());
        prop_assert!((&a.g - &b.g).amax() <= 1e-12 * scale);
        prop_assert!((&a.a - &b.a).amax() <= 1e-12 * scale);
        prop_assert!((&a.l - &b.l).amax() <= 1e-12 * scale);
    }

    #[test]
    fn angles_depend_only_on_the_subspace(seed in 0u64..10_000, n in 2usize..7) {
        let sys = random_system(seed, n + 2, 40);
        let b = normals(seed + 1, n + 2, n);
        let m = DMatrix::identity(n, n) + normals(seed + 2, n, n) * 0.3;
        prop_assume!(m.clone().svd(false, false).singular_values.min() > 0.2);
        let a1 = principal_angles(&sys, &b, None).unwrap().angles;
        let a2 = principal_angles(&sys, &(&b * m), None).unwrap().angles;
        prop_assert_eq!(a1.len(), a2.len());
        prop_assert!((&a1 - &a2).amax() <= 1e-8, "{} vs {}", a1, a2);
    }

    #[test]
    fn one_step_error_below_angle_sum(seed in 0u64..10_000, n in 2usize..8) {
        let sys = random_system(seed, n, 5 * n);
        let res = principal_angles(&sys, &DMatrix::identity(n, n), None).unwrap();
        prop_assume!(res.count() == n);
        let a = vector(seed, n);
        let mut kg = DVector::zeros(2 * n);
        kg.rows_mut(n, n).copy_from(&a);
        let d = res.project_onto_v(&kg) - &kg;
        let lhs = res.inner(&d, &d).max(0.0).sqrt();
        let rhs: f64 = (0..n).map(|i| res.inner(&kg, &res.v_hat.column(i).into_owned()).abs() * res.angles[i].sin()).sum();
        prop_assert!(lhs <= rhs + 1e-8, "{} > {}", lhs, rhs);
    }

    #[test]
    fn first_step_is_the_one_step_residual(seed in 0u64..10_000, n in 1usize..9) {
        let sys = random_system(seed, n, 3 * n + 2);
        let g = vector(seed, n);
        let e = kmd_error_bounds(&sys, &g, 1).unwrap();
        let kg = &sys.k * &g;
        let direct = (g.dot(&(&sys.l * &g)) - kg.dot(&(&sys.g * &kg))).max(0.0).sqrt();
        prop_assert!((e.steps[0].value - direct).abs() <= 1e-10 * sys.l.amax().sqrt().max(1.0));
    }

    #[test]
    fn bounds_are_homogeneous(seed in 0u64..10_000, n in 1usize..7) {
        let sys = random_system(seed, n, 3 * n + 2);
        let g = vector(seed, n);
        let g2 = &g * 2.0;
        for (a, b) in [
            (kmd_error_bounds(&sys, &g, 8).unwrap(), kmd_error_bounds(&sys, &g2, 8).unwrap()),
            (kmd_error_bounds_full(&sys, &g, 8).unwrap(), kmd_error_bounds_full(&sys, &g2, 8).unwrap()),
        ] {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn square_sum_preferred_for_unitary(seed in 0u64..10_000, t1 in 0.05f64..3.0, t2 in 0.05f64..3.0) {
        let sys = unitary_system(seed, &[t1, t2]);
        let g = vector(seed, 4);
        let e = kmd_error_bounds(&sys, &g, 15).unwrap();
        for s in &e.steps {
            prop_assert!(s.e1 <= s.e2 + 1e-12);
            prop_assert_eq!(s.chosen, Aggregation::SquareSum);
        }
    }

    #[test]
    fn full_order_bounds_shift(n in 3usize..30, k in 1usize..6) {
        let shift = LebesgueShift::new(n, k).unwrap();
        let sys = shift.system();
        let g = shift.observable().coeffs;
        let full = kmd_error_bounds_full(&sys, &g, n).unwrap();
        for s in &full.steps {
            prop_assert!(s.value >= shift.exact_error(&g, s.step).unwrap() - 1e-10);
        }
    }

    #[test]
    fn expected_norm_below_worst_case(seed in 0u64..10_000, n in 2usize..7, j in 1usize..5) {
        let sys = random_system(seed, n, 4 * n);
        let sur = GpSurrogate { samples: 200, seed, ..GpSurrogate::default() };
        let (mean, std) = expected_op_norm(&sys, j, &sur).unwrap();
        prop_assert!(mean <= op_norm_power(&sys, j) + 3.0 * std / (sur.samples as f64).sqrt() + 1e-12);
    }

    #[test]
    fn degenerate_law_follows_first_mode(seed in 0u64..10_000, j in 0usize..5) {
        let g = DMatrix::identity(4, 4);
        let a = normals(seed, 4, 4) * 0.5;
        let sys = explicit(g.clone(), a.clone(), g + a.transpose() * &a);
        let law = EigenLaw::Custom { values: vec![1.0, 0.0, 0.0, 0.0] };
        let sur = GpSurrogate { law, samples: 50, seed, basis: SurrogateBasis::SvdOfG { rank: 4 } };
        let red = sur.reduce(&sys).unwrap().system;
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        let want = red.k.pow(j as u32) * e1;
        let (mean, std) = expected_op_norm(&sys, j, &sur).unwrap();
        prop_assert!((mean - want.norm()).abs() <= 1e-12 * want.norm().max(1.0));
        prop_assert!(std <= 1e-12);
    }

    #[test]
    fn expectations_are_deterministic(seed in 0u64..10_000, n in 2usize..6) {
        let sys = random_system(seed, n, 4 * n);
        let sur = GpSurrogate { samples: 64, seed, ..GpSurrogate::default() };
        prop_assert_eq!(expected_op_norm(&sys, 3, &sur).unwrap(), expected_op_norm(&sys, 3, &sur).unwrap());
    }

    #[test]
    fn snapshots_are_pure(seed in 0u64..10_000, count in 1usize..40) {
        let sampling = Sampling::RandomBox { bounds: BoxBounds::cube(2, -1.0, 1.0), count, seed };
        let a = generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap();
        let b = generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn matern_gram_is_numerically_psd(seed in 0u64..10_000, m in 2usize..50, nu in 0.3f64..4.0, sigma in 0.2f64..3.0) {
        let pts = normals(seed, m, 3);
        let k = eval_kernel_matrix(&KernelSpec::matern(sigma, nu), &pts, &pts).unwrap();
        let e = SymEig::new(&k);
        prop_assert!(e.values[m - 1] >= -1e-8 * e.values[0]);
    }

    #[test]
    fn best_so_far_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0, lr in 0.05f64..0.5) {
        let loss = move |s: f64, nu: f64| (s.ln() - a).powi(2) + (nu.ln() - b).powi(2) + (5.0 * s.ln()).sin() * 0.1;
        let cfg = AdamConfig { lr, epochs: 60, ..AdamConfig::default() };
        let r = adam_minimize(loss, (1.0, 1.0), &ParamBox::default(), &cfg, |_, _| None).unwrap();
        let best: Vec<f64> = r.history.iter().map(|h| h.best_loss).collect();
        prop_assert!(best.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.best_loss <= r.losses().iter().cloned().fold(f64::INFINITY, f64::min));
        prop_assert!((loss(r.best_s, r.best_nu) - r.best_loss).abs() <= 1e-12);
    }
}

#[test]
fn matern_continuous_at_origin() {
    for nu in [1.0, 2.0, 3.0] {
        let want = 2f64.powf(nu - 1.0) * koopcert::special::gamma(nu);
        assert!((matern_profile(nu, 1e-8).unwrap() - want).abs() <= 1e-6, "nu = {nu}");
    }
}

#[test]
fn standard_error_scales_with_sample_count() {
    let sys = random_system(5, 6, 30);
    let sem = |p: usize| {
        let sur = GpSurrogate { samples: p, seed: 3, ..GpSurrogate::default() };
        let (_, std) = expected_op_norm(&sys, 2, &sur).unwrap();
        std / (p as f64).sqrt()
    };
    let ratio = sem(400) / sem(1600);
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}
