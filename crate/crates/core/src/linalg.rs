//! Dense linear-algebra helpers shared by the Galerkin, geometry and bound modules.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue cutoff applied to Gram matrices before inversion.
pub const GRAM_CUTOFF: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn max_value(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }
}

/// Eigenpairs of a positive semi-definite matrix above a relative cutoff.
///
/// Every square-root and inverse of a Gram matrix in the crate goes through this
/// type, so "pseudoinverse" always means the same truncation.
#[derive(Debug, Clone)]
pub struct PsdSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub dim: usize,
}

impl PsdSpectrum {
    pub fn new(m: &DMatrix<f64>, rel_cutoff: f64) -> Self {
        let eig = SymEig::new(m);
        let dim = m.nrows();
        let lmax = eig.max_value().max(0.0);
        let cutoff = rel_cutoff * lmax;
        let rank = eig.values.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
        Self {
            values: eig.values.rows(0, rank).into_owned(),
            vectors: eig.vectors.columns(0, rank).into_owned(),
            dim,
        }
    }

    pub fn gram(m: &DMatrix<f64>) -> Self {
        Self::new(m, GRAM_CUTOFF)
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    fn scaled(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut q = self.vectors.clone();
        for (j, mut col) in q.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        q
    }

    /// `Q_r f(Λ_r) Q_r^T`.
    fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        self.scaled(f) * self.vectors.transpose()
    }

    pub fn pinv(&self) -> DMatrix<f64> {
        self.apply(|v| 1.0 / v)
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        self.apply(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.apply(|v| 1.0 / v.sqrt())
    }

    /// `Q_r Λ_r^{-1/2}`: columns form an orthonormal basis in the metric of the matrix.
    pub fn whitening(&self) -> DMatrix<f64> {
        self.scaled(|v| 1.0 / v.sqrt())
    }

    /// `Λ_r^{1/2} Q_r^T`, the left inverse of [`Self::whitening`] on the retained range.
    pub fn coloring_t(&self) -> DMatrix<f64> {
        self.scaled(f64::sqrt).transpose()
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    to_faer(m)
        .singular_values()
        .map(|s| s.first().copied().unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Orthonormal basis for the column span, truncating singular values below
/// `max(p, n) * eps * sigma_max`.
pub fn orth(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = m.shape();
    if p == 0 || n == 0 {
        return DMatrix::zeros(p, 0);
    }
    let svd = sorted_svd(m);
    let smax = svd.s.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = (p.max(n) as f64) * f64::EPSILON * smax;
    let keep = svd.s.iter().take_while(|&&s| s > tol).count();
    svd.u.columns(0, keep).into_owned()
}

/// Thin SVD with singular values sorted descending.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Computed with faer: nalgebra's SVD loses accuracy in the singular values
/// when singular vectors are requested.
pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return SortedSvd { u: DMatrix::zeros(m.nrows(), 0), s: DVector::zeros(0), v: DMatrix::zeros(m.ncols(), 0) };
    }
    let svd = to_faer(m).thin_svd().expect("SVD did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]));
    let u = DMatrix::from_fn(m.nrows(), k, |i, j| fu[(i, idx[j])]);
    let v = DMatrix::from_fn(m.ncols(), k, |i, j| fv[(i, idx[j])]);
    let s = DVector::from_fn(k, |j, _| fs[idx[j]]);
    SortedSvd { u, s, v }
}

/// Minimum-norm least-squares solution, dropping singular values below `rcond * sigma_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let svd = sorted_svd(a);
    let smax = svd.s.iter().fold(0.0_f64, |x, &y| x.max(y));
    let utb = svd.u.transpose() * b;
    let mut x = DVector::zeros(a.ncols());
    for j in 0..svd.s.len() {
        if svd.s[j] > rcond * smax && svd.s[j] > 0.0 {
            x += svd.v.column(j) * (utb[j] / svd.s[j]);
        }
    }
    x
}

/// Fixed-shape pairwise summation; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and (unbiased) standard deviation; std is zero for fewer than two samples.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}
