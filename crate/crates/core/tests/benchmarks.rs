mod common;

use common::{random_system, vector};
use koopcert::certify::{initialization_error, kmd_error_bounds, kmd_error_bounds_full};
use koopcert::dynamics::{generate_snapshots, BoxBounds, DynamicalSystem, Sampling, SnapshotSet};
use koopcert::galerkin::{build_edmd, build_kedmd, svd_truncate, GalerkinSystem};
use koopcert::geometry::{pad_truncate, principal_angles};
use koopcert::io::{load_galerkin, save_galerkin};
use koopcert::linalg::{spectral_norm, PsdSpectrum};
use koopcert::observables::{default_kernel_scale, sample_centers, Dictionary, KernelSpec};
use koopcert::surrogate::{expected_kmd_errors, GpSurrogate};
use nalgebra::{DMatrix, DVector};

fn duffing(count: usize, seed: u64) -> SnapshotSet {
    let sampling = Sampling::RandomBox { bounds: BoxBounds::cube(2, -2.0, 2.0), count, seed };
    generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap()
}

fn duffing_trajectories(seed: u64) -> SnapshotSet {
    let sampling = Sampling::RandomTrajectories { bounds: BoxBounds::cube(2, -2.0, 2.0), trajectories: 50, length: 20, seed };
    generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap()
}

fn whitened_norm(sys: &GalerkinSystem) -> f64 {
    let spec = PsdSpectrum::gram(&sys.g);
    spectral_norm(&(spec.sqrt() * &sys.k * spec.pinv() * spec.sqrt()))
}

#[test]
fn lorenz_koopman_is_near_isometric() {
    let sampling = Sampling::ErgodicTrajectory { x0: vec![1.0, 1.0, 1.0], count: 5000, burn_in: 500 };
    let s = generate_snapshots(&DynamicalSystem::lorenz(), &sampling).unwrap();
    let dict = Dictionary::ExponentialRbf { centers: sample_centers(&s.x, 100, 0).unwrap(), scale: default_kernel_scale(&s).unwrap() };
    let norm = whitened_norm(&build_edmd(&dict, &s).unwrap());
    assert!((0.9..=1.1).contains(&norm), "{norm}");
}

#[test]
fn trajectory_kernel_sections_are_krylov() {
    let sampling = Sampling::ErgodicTrajectory { x0: vec![1.0, 1.0, 1.0], count: 30, burn_in: 100 };
    let s = generate_snapshots(&DynamicalSystem::lorenz(), &sampling).unwrap();
    let sys = build_kedmd(&KernelSpec::matern(default_kernel_scale(&s).unwrap(), 2.0), &s).unwrap();
    let res = principal_angles(&sys, &DMatrix::identity(30, 30), None).unwrap();
    assert!(res.angles.iter().take(29).all(|&t| t <= 1e-8), "{}", res.angles);
    assert!(res.angles[29] > 0.1);
}

#[test]
fn duffing_has_about_sixty_small_angles() {
    for seed in [1, 2, 3] {
        let s = duffing_trajectories(seed);
        let sys = build_edmd(&Dictionary::chebyshev(9, BoxBounds::cube(2, -2.5, 2.5)), &s).unwrap();
        let res = principal_angles(&sys, &DMatrix::identity(100, 100), None).unwrap();
        let r = res.angles.iter().filter(|&&t| t < 0.01).count();
        assert!((50..=70).contains(&r), "seed {seed}: {r}");
    }
}

#[test]
fn angles_settle_as_data_grows() {
    let dict = Dictionary::chebyshev(4, BoxBounds::cube(2, -2.5, 2.5));
    let n = dict.size();
    let big = duffing(4000, 11);
    let angles = |m: usize| {
        let sys = build_edmd(&dict, &big.head(m).unwrap()).unwrap();
        principal_angles(&sys, &DMatrix::identity(n, n), None).unwrap().angles
    };
    let (a1, a2, a4) = (angles(1000), angles(2000), angles(4000));
    assert!((&a2 - &a4).norm() <= (&a1 - &a2).norm() + 0.05);
}

#[test]
fn one_dimensional_angle_is_a_relative_residual() {
    for seed in 0..5 {
        let sys = random_system(seed, 5, 30);
        let g = vector(seed, 5);
        let b = DMatrix::from_column_slice(5, 1, g.as_slice());
        let theta = principal_angles(&sys, &b, None).unwrap().angles[0];
        let (gg, ag, lg) = (g.dot(&(&sys.g * &g)), g.dot(&(&sys.a * &g)), g.dot(&(&sys.l * &g)));
        let rel = |mu: f64| ((mu * mu * lg - 2.0 * mu * ag + gg) / gg).max(0.0).sqrt();
        let mut best = (0.0, f64::INFINITY);
        for i in -4000..=4000 {
            let mu = i as f64 * 1e-3;
            if rel(mu) < best.1 {
                best = (mu, rel(mu));
            }
        }
        let (mut lo, mut hi) = (best.0 - 1e-3, best.0 + 1e-3);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        while hi - lo > 1e-12 {
            let (c, d) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
            if rel(c) < rel(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        assert!((theta.sin() - rel(0.5 * (lo + hi))).abs() <= 1e-6, "seed {seed}");
    }
}

#[test]
fn full_rank_pad_reproduces_the_full_system() {
    let sys = random_system(4, 6, 40);
    let pad = pad_truncate(&sys, None, 6).unwrap();
    let red = pad.to_system(&sys);
    let g = vector(8, 6);
    let c = pad.u.transpose() * (&sys.g * &g);
    let basis = red.basis_matrix();
    for (full, reduced) in sys.powers(&g, 6).iter().zip(red.powers(&c, 6)) {
        assert!((full - &basis * reduced).amax() <= 1e-10 * full.amax().max(1.0));
    }
}

#[test]
fn duffing_expected_bounds_stay_below_strict() {
    let s = duffing(1000, 7);
    let dict = Dictionary::chebyshev(9, BoxBounds::cube(2, -2.5, 2.5));
    let full = build_edmd(&dict, &s).unwrap();
    let sys = svd_truncate(&full, 50).unwrap();
    let (c, _) = initialization_error(&dict, &s, &sys, &s.x.column(0).into_owned()).unwrap();
    let strict = kmd_error_bounds(&sys, &c, 20).unwrap();
    let expected = expected_kmd_errors(&sys, &c, 20, &GpSurrogate::default()).unwrap();
    for (e, b) in expected.values().iter().zip(strict.values()) {
        assert!(*e <= b * (1.0 + 1e-12), "{e} > {b}");
    }
}

#[test]
fn bounds_survive_a_round_trip_to_disk() {
    let s = duffing(300, 2);
    let sys = build_edmd(&Dictionary::chebyshev(5, BoxBounds::cube(2, -2.5, 2.5)), &s).unwrap();
    let red = svd_truncate(&sys, 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_galerkin(dir.path(), &red).unwrap();
    let back = load_galerkin(dir.path()).unwrap();
    let g = DVector::from_fn(20, |i, _| 1.0 / (1.0 + i as f64));
    for (a, b) in [
        (kmd_error_bounds(&red, &g, 10).unwrap(), kmd_error_bounds(&back, &g, 10).unwrap()),
        (kmd_error_bounds_full(&red, &g, 10).unwrap(), kmd_error_bounds_full(&back, &g, 10).unwrap()),
    ] {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
    }
}
