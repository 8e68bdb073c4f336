#![allow(dead_code)]

use koopcert::galerkin::{build_from_features, BasisDescriptor, GalerkinSystem, Space};
use koopcert::rng::StreamKey;
use nalgebra::{DMatrix, DVector};

pub fn normals(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let key = StreamKey::new(seed, 77);
    let data: Vec<Vec<f64>> = (0..rows).map(|i| key.normals(i as u64, cols)).collect();
    DMatrix::from_fn(rows, cols, |i, j| data[i][j])
}

pub fn vector(seed: u64, n: usize) -> DVector<f64> {
    DVector::from_vec(StreamKey::new(seed, 78).normals(0, n))
}

/// Galerkin system from `m` random quadrature samples of `n` features and their images.
pub fn random_system(seed: u64, n: usize, m: usize) -> GalerkinSystem {
    let px = normals(seed, m, n);
    let mix = normals(seed ^ 0x9e37, n, n) / (n as f64).sqrt();
    let py = &px * mix + normals(seed ^ 0x51ed, m, n) * 0.3;
    let w = DVector::from_element(m, 1.0 / m as f64);
    build_from_features(&px, &py, &w, BasisDescriptor::Explicit { label: format!("random-{seed}") }).unwrap()
}

pub fn explicit(g: DMatrix<f64>, a: DMatrix<f64>, l: DMatrix<f64>) -> GalerkinSystem {
    GalerkinSystem::from_matrices(g, a, l, Space::L2, BasisDescriptor::Explicit { label: "explicit".into() }).unwrap()
}

pub fn rotation_blocks(angles: &[f64]) -> DMatrix<f64> {
    let n = 2 * angles.len();
    let mut q = DMatrix::zeros(n, n);
    for (b, t) in angles.iter().enumerate() {
        let i = 2 * b;
        q[(i, i)] = t.cos();
        q[(i, i + 1)] = -t.sin();
        q[(i + 1, i)] = t.sin();
        q[(i + 1, i + 1)] = t.cos();
    }
    q
}

/// `G = I`, orthogonal `A = Q`, `L = I + R R^T` so the one-step residual is nonzero.
pub fn unitary_system(seed: u64, angles: &[f64]) -> GalerkinSystem {
    let q = rotation_blocks(angles);
    let n = q.nrows();
    let r = normals(seed, n, 2) * 0.2;
    explicit(DMatrix::identity(n, n), q, DMatrix::identity(n, n) + &r * r.transpose())
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = std::time::Instant::now();
    let v = f();
    (v, t0.elapsed().as_secs_f64())
}
