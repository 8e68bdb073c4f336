//! Galerkin matrices for the Koopman operator on L² and its adjoint on an RKHS.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, symmetrize, PsdSpectrum};
use crate::observables::{eval_dictionary, eval_kernel_matrix, Dictionary, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    L2,
    Rkhs,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::L2 => "L2",
            Space::Rkhs => "RKHS",
        }
    }
}

/// What the coefficient vectors of a system are coefficients of.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisDescriptor {
    Dictionary { dictionary: Dictionary },
    Kernel { kernel: KernelSpec, points: DMatrix<f64> },
    LebesgueShift { n: usize, k: usize },
    Explicit { label: String },
}

/// `G`, `A`, `L` (or `R`) and `K = pinv(G) A` for one subspace.
///
/// When `basis` is present, the system lives in a reduced basis whose columns
/// are coefficient vectors in the basis named by `descriptor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinSystem {
    pub g: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub space: Space,
    pub descriptor: BasisDescriptor,
    pub basis: Option<DMatrix<f64>>,
    pub numerical_rank: usize,
}

impl GalerkinSystem {
    /// Symmetrizes `G` and `L` and forms `K` by the cutoff pseudoinverse of `G`.
    pub fn from_matrices(
        g: DMatrix<f64>,
        a: DMatrix<f64>,
        l: DMatrix<f64>,
        space: Space,
        descriptor: BasisDescriptor,
    ) -> Result<Self> {
        let n = g.nrows();
        for (name, m) in [("G", &g), ("A", &a), ("L", &l)] {
            if m.shape() != (n, n) {
                return Err(Error::DimensionMismatch { context: "galerkin matrix", expected: n, found: m.nrows() });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("galerkin matrix {name}")));
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("galerkin system must be nonempty".into()));
        }
        let g = symmetrize(&g);
        let l = symmetrize(&l);
        let spec = PsdSpectrum::gram(&g);
        let numerical_rank = spec.rank();
        if numerical_rank < n {
            log::warn!("rank deficient Gram matrix: numerical rank {numerical_rank} < {n}");
        }
        let pinv = spec.pinv();
        let k0 = &pinv * &a;
        let k = &k0 + &pinv * (&a - &g * &k0);
        Ok(Self { g, a, l, k, space, descriptor, basis: None, numerical_rank })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.numerical_rank < self.dim()
    }

    /// Coefficient matrix of the current basis in the descriptor's basis.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        self.basis.clone().unwrap_or_else(|| DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn check_vector(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "coefficient vector", expected: self.dim(), found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coefficient vector".into()));
        }
        Ok(())
    }

    /// `L - K^T G K`, the Gram matrix of the one-step projection residuals.
    pub fn residual_matrix(&self) -> DMatrix<f64> {
        symmetrize(&(&self.l - self.k.transpose() * &self.g * &self.k))
    }

    /// `g^T (L - K^T G K) g`, clipped at zero.
    pub fn one_step_residual_sq(&self, g: &DVector<f64>) -> f64 {
        let kg = &self.k * g;
        let v = g.dot(&(&self.l * g)) - kg.dot(&(&self.g * &kg));
        v.max(0.0)
    }

    /// `K^n g` for `n = 0..=steps`, by repeated matrix-vector products.
    pub fn powers(&self, g: &DVector<f64>, steps: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(g.clone());
        for j in 0..steps {
            let next = &self.k * &out[j];
            out.push(next);
        }
        out
    }

    /// `v^T G v`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.g * v)).max(0.0)
    }

    /// Restriction to the span of `basis` columns: `B^T G B`, `B^T A B`, `B^T L B`.
    pub fn compress(&self, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { context: "selection matrix", expected: self.dim(), found: b.nrows() });
        }
        let bt = b.transpose();
        Ok((symmetrize(&(&bt * &self.g * b)), &bt * &self.a * b, symmetrize(&(&bt * &self.l * b))))
    }

    /// System in the basis `U` (columns orthonormal in `G`), with `G' = I`
    /// and `K' = A'`.
    pub fn reduce_orthonormal(&self, u: &DMatrix<f64>) -> Result<Self> {
        let (_, a, l) = self.compress(u)?;
        let r = u.ncols();
        let basis = Some(self.basis_matrix() * u);
        Ok(Self {
            g: DMatrix::identity(r, r),
            k: a.clone(),
            a,
            l,
            space: self.space,
            descriptor: self.descriptor.clone(),
            basis,
            numerical_rank: r,
        })
    }
}

fn check_snapshot_dim(snapshots: &SnapshotSet, d: usize) -> Result<()> {
    snapshots.validate()?;
    if snapshots.dim() != d {
        return Err(Error::DimensionMismatch { context: "snapshot dimension", expected: d, found: snapshots.dim() });
    }
    Ok(())
}

/// Weighted Gram products `P^T W Q`.
fn weighted_cross(p: &DMatrix<f64>, w: &DVector<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut wq = q.clone();
    for (m, mut r) in wq.row_iter_mut().enumerate() {
        r *= w[m];
    }
    p.transpose() * wq
}

/// EDMD: `G = Psi_X^T W Psi_X`, `A = Psi_X^T W Psi_Y`, `L = Psi_Y^T W Psi_Y`.
pub fn build_edmd(dict: &Dictionary, snapshots: &SnapshotSet) -> Result<GalerkinSystem> {
    check_snapshot_dim(snapshots, dict.dim())?;
    let px = eval_dictionary(dict, &snapshots.x)?;
    let py = eval_dictionary(dict, &snapshots.y)?;
    build_from_features(&px, &py, &snapshots.weights, BasisDescriptor::Dictionary { dictionary: dict.clone() })
}

/// EDMD from precomputed feature matrices.
pub fn build_from_features(
    px: &DMatrix<f64>,
    py: &DMatrix<f64>,
    w: &DVector<f64>,
    descriptor: BasisDescriptor,
) -> Result<GalerkinSystem> {
    if px.shape() != py.shape() || px.nrows() != w.len() {
        return Err(Error::DimensionMismatch { context: "feature matrices", expected: px.nrows(), found: py.nrows() });
    }
    let g = weighted_cross(px, w, px);
    let a = weighted_cross(px, w, py);
    let l = weighted_cross(py, w, py);
    GalerkinSystem::from_matrices(g, a, l, Space::L2, descriptor)
}

/// kEDMD for the Perron-Frobenius operator on the kernel's RKHS, with one
/// basis function `k(., x_j)` per snapshot.
pub fn build_kedmd(kernel: &KernelSpec, snapshots: &SnapshotSet) -> Result<GalerkinSystem> {
    snapshots.validate()?;
    let g = eval_kernel_matrix(kernel, &snapshots.x, &snapshots.x)?;
    let a = eval_kernel_matrix(kernel, &snapshots.x, &snapshots.y)?;
    let r = eval_kernel_matrix(kernel, &snapshots.y, &snapshots.y)?;
    GalerkinSystem::from_matrices(
        g,
        a,
        r,
        Space::Rkhs,
        BasisDescriptor::Kernel { kernel: *kernel, points: snapshots.x.clone() },
    )
}

/// Projection onto the `r` leading eigenvectors of `G`, in the orthonormal
/// basis `U = Q_r Lambda_r^{-1/2}`.
pub fn svd_truncate(sys: &GalerkinSystem, r: usize) -> Result<GalerkinSystem> {
    let spec = PsdSpectrum::gram(&sys.g);
    if r == 0 || r > spec.rank() {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {r} must lie in 1..={} (numerical rank of G)",
            spec.rank()
        )));
    }
    let u = spec.whitening().columns(0, r).into_owned();
    sys.reduce_orthonormal(&u)
}

/// Relative residual `|K g - lambda g| / |g|` evaluated through the Galerkin
/// quadratic forms.
pub fn residual(sys: &GalerkinSystem, lambda: Complex64, g: &[Complex64]) -> Result<f64> {
    if g.len() != sys.dim() {
        return Err(Error::DimensionMismatch { context: "residual vector", expected: sys.dim(), found: g.len() });
    }
    if g.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroVector);
    }
    let form = |m: &DMatrix<f64>, x: &[Complex64], y: &[Complex64]| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m.nrows() {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..m.ncols() {
                row += y[j] * m[(i, j)];
            }
            acc += x[i].conj() * row;
        }
        acc
    };
    let lg = form(&sys.l, g, g).re;
    let ag = form(&sys.a, g, g);
    let gg = form(&sys.g, g, g).re;
    // g^* A^T g = conj(g^* A g) for real A
    let num = lg - (lambda * ag.conj()).re - (lambda.conj() * ag).re + lambda.norm_sqr() * gg;
    if !(gg > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(num.max(0.0).sqrt() / gg.sqrt())
}

/// `|G K - A| / |A|` on the numerical range of `G`.
pub fn solve_defect(sys: &GalerkinSystem) -> f64 {
    let spec = PsdSpectrum::gram(&sys.g);
    let p = &spec.vectors * spec.vectors.transpose();
    let num = spectral_norm(&(&sys.g * &sys.k - &p * &sys.a));
    let den = spectral_norm(&sys.a);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
