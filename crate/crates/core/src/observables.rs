//! Dictionaries of observables and the Matérn kernel.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoxBounds, SnapshotSet};
use crate::error::{Error, Result};
use crate::linalg::mean_std;
use crate::special::{matern_origin_value, matern_profile};

/// A finite family of observables `psi_1, ..., psi_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dictionary {
    /// Products of Chebyshev polynomials `T_{k_1}(t_1) ... T_{k_d}(t_d)` with `t`
    /// the affine image of `x` in `[-1, 1]^d`. Ordered lexicographically in
    /// `(k_1, ..., k_d)`, last axis fastest.
    ChebyshevTensor { degrees: Vec<usize>, domain: BoxBounds },
    /// `psi_i(x) = exp(-s |x - c_i|)`.
    ExponentialRbf { centers: DMatrix<f64>, scale: f64 },
    /// `psi_i(x) = (s r)^nu K_nu(s r)` with `r = |x - c_i|`.
    MaternRbf { centers: DMatrix<f64>, scale: f64, order: f64 },
}

impl Dictionary {
    pub fn chebyshev(degree: usize, domain: BoxBounds) -> Self {
        let d = domain.dim();
        Dictionary::ChebyshevTensor { degrees: vec![degree; d], domain }
    }

    pub fn size(&self) -> usize {
        match self {
            Dictionary::ChebyshevTensor { degrees, .. } => degrees.iter().map(|k| k + 1).product(),
            Dictionary::ExponentialRbf { centers, .. } | Dictionary::MaternRbf { centers, .. } => centers.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dictionary::ChebyshevTensor { domain, .. } => domain.dim(),
            Dictionary::ExponentialRbf { centers, .. } | Dictionary::MaternRbf { centers, .. } => centers.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Dictionary::ChebyshevTensor { degrees, domain } => {
                domain.validate()?;
                if degrees.len() != domain.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "chebyshev degrees",
                        expected: domain.dim(),
                        found: degrees.len(),
                    });
                }
            }
            Dictionary::ExponentialRbf { centers, scale } => {
                check_centers(centers)?;
                check_positive("rbf scale", *scale)?;
            }
            Dictionary::MaternRbf { centers, scale, order } => {
                check_centers(centers)?;
                check_positive("matern scale", *scale)?;
                check_positive("matern order", *order)?;
            }
        }
        Ok(())
    }

    /// Multi-indices of the tensor basis in storage order.
    pub fn chebyshev_indices(degrees: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &k in degrees {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..=k).map(move |j| {
                        let mut p = prefix.clone();
                        p.push(j);
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn eval_row(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Dictionary::ChebyshevTensor { degrees, domain } => {
                let tables: Vec<Vec<f64>> = degrees
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| {
                        let (lo, hi) = (domain.lower[a], domain.upper[a]);
                        let t = (2.0 * x[a] - (lo + hi)) / (hi - lo);
                        chebyshev_values(t, k)
                    })
                    .collect();
                let mut idx = 0;
                let mut stack = vec![0usize; degrees.len()];
                loop {
                    let mut v = 1.0;
                    for (a, &j) in stack.iter().enumerate() {
                        v *= tables[a][j];
                    }
                    out[idx] = v;
                    idx += 1;
                    // odometer increment, last axis fastest
                    let mut a = degrees.len();
                    loop {
                        if a == 0 {
                            return Ok(());
                        }
                        a -= 1;
                        if stack[a] < degrees[a] {
                            stack[a] += 1;
                            break;
                        }
                        stack[a] = 0;
                    }
                }
            }
            Dictionary::ExponentialRbf { centers, scale } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (-scale * distance(x, centers, i)).exp();
                }
                Ok(())
            }
            Dictionary::MaternRbf { centers, scale, order } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = matern_profile(*order, scale * distance(x, centers, i))?;
                }
                Ok(())
            }
        }
    }
}

fn check_centers(c: &DMatrix<f64>) -> Result<()> {
    if c.nrows() == 0 || c.ncols() == 0 {
        return Err(Error::InvalidArgument("dictionary needs at least one center".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dictionary centers".into()));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn distance(x: &[f64], centers: &DMatrix<f64>, i: usize) -> f64 {
    x.iter()
        .enumerate()
        .map(|(a, &v)| (v - centers[(i, a)]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn chebyshev_values(t: f64, degree: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(degree + 1);
    v.push(1.0);
    if degree >= 1 {
        v.push(t);
    }
    for k in 2..=degree {
        let next = 2.0 * t * v[k - 1] - v[k - 2];
        v.push(next);
    }
    v
}

fn check_points(points: &DMatrix<f64>, d: usize, context: &'static str) -> Result<()> {
    if points.ncols() != d {
        return Err(Error::DimensionMismatch { context, expected: d, found: points.ncols() });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{context} contain non-finite coordinates")));
    }
    Ok(())
}

fn row(points: &DMatrix<f64>, m: usize) -> Vec<f64> {
    points.row(m).iter().copied().collect()
}

/// `Psi` evaluated at every row of `points`: entry `(m, j) = psi_j(x_m)`.
pub fn eval_dictionary(dict: &Dictionary, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    dict.validate()?;
    check_points(points, dict.dim(), "dictionary points")?;
    let n = dict.size();
    let rows: Vec<Vec<f64>> = (0..points.nrows())
        .into_par_iter()
        .map(|m| {
            let mut out = vec![0.0; n];
            dict.eval_row(&row(points, m), &mut out).map(|_| out)
        })
        .collect::<Result<_>>()?;
    let mut psi = DMatrix::zeros(points.nrows(), n);
    for (m, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            psi[(m, j)] = v;
        }
    }
    Ok(psi)
}

/// Reproducing kernel of the Matérn family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(x, y) = (sigma |x - y|)^nu K_nu(sigma |x - y|)`.
    MaternBessel { sigma: f64, nu: f64 },
}

impl KernelSpec {
    pub fn matern(sigma: f64, nu: f64) -> Self {
        KernelSpec::MaternBessel { sigma, nu }
    }

    pub fn validate(&self) -> Result<()> {
        let KernelSpec::MaternBessel { sigma, nu } = *self;
        check_positive("kernel scale", sigma)?;
        check_positive("kernel order", nu)
    }

    pub fn diagonal_value(&self) -> f64 {
        let KernelSpec::MaternBessel { nu, .. } = *self;
        matern_origin_value(nu)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let KernelSpec::MaternBessel { sigma, nu } = *self;
        let r = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        matern_profile(nu, sigma * r)
    }
}

/// Kernel matrix with entry `(i, j) = k(q_j, p_i)`.
pub fn eval_kernel_matrix(kernel: &KernelSpec, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let d = p.ncols();
    check_points(p, d, "kernel points")?;
    check_points(q, d, "kernel points")?;
    let qs: Vec<Vec<f64>> = (0..q.nrows()).map(|j| row(q, j)).collect();
    let rows: Vec<Vec<f64>> = (0..p.nrows())
        .into_par_iter()
        .map(|i| {
            let pi = row(p, i);
            qs.iter().map(|qj| kernel.eval(qj, &pi)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(p.nrows(), q.nrows());
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            k[(i, j)] = v;
        }
    }
    Ok(k)
}

/// Kernel sections `k(x0, x_j)` for every data point.
pub fn kernel_vector(kernel: &KernelSpec, x0: &[f64], points: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = DMatrix::from_row_slice(1, x0.len(), x0);
    let k = eval_kernel_matrix(kernel, points, &p)?;
    Ok(k.column(0).into_owned())
}

/// `1 / mean_i std(X[:, i])`.
pub fn default_kernel_scale(snapshots: &SnapshotSet) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientData("kernel scale needs at least two states".into()));
    }
    let stds: Vec<f64> = snapshots
        .x
        .column_iter()
        .map(|c| mean_std(&c.iter().copied().collect::<Vec<_>>()).1)
        .collect();
    let avg = stds.iter().sum::<f64>() / stds.len() as f64;
    if !(avg > 0.0) {
        return Err(Error::DegenerateData("all states are identical".into()));
    }
    Ok(1.0 / avg)
}

/// Centers drawn uniformly from the bounding box of `points`.
pub fn sample_centers(points: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let bounds = BoxBounds::of_points(points)?;
    let mut lower = bounds.lower.clone();
    let mut upper = bounds.upper.clone();
    for (lo, hi) in lower.iter_mut().zip(upper.iter_mut()) {
        if !(*lo < *hi) {
            *lo -= 0.5;
            *hi += 0.5;
        }
    }
    Ok(BoxBounds { lower, upper }.sample(count, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Provenance;
    use crate::linalg::SymEig;

    #[test]
    fn chebyshev_degree_one() {
        let d = Dictionary::chebyshev(1, BoxBounds::cube(1, -1.0, 1.0));
        let psi = eval_dictionary(&d, &DMatrix::from_row_slice(1, 1, &[0.5])).unwrap();
        assert_eq!(psi.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn chebyshev_tensor_size_and_order() {
        let d = Dictionary::ChebyshevTensor { degrees: vec![2, 1], domain: BoxBounds::cube(2, -1.0, 1.0) };
        assert_eq!(d.size(), 6);
        let psi = eval_dictionary(&d, &DMatrix::from_row_slice(1, 2, &[0.5, 0.25])).unwrap();
        // (0,0) (0,1) (1,0) (1,1) (2,0) (2,1)
        let t2 = 2.0 * 0.25 - 1.0;
        let want = [1.0, 0.25, 0.5, 0.125, t2, t2 * 0.25];
        for (a, b) in psi.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let idx = Dictionary::chebyshev_indices(&[2, 1]);
        assert_eq!(idx[3], vec![1, 1]);
    }

    #[test]
    fn chebyshev_endpoints() {
        let d = Dictionary::chebyshev(9, BoxBounds::cube(1, -2.5, 2.5));
        let psi = eval_dictionary(&d, &DMatrix::from_row_slice(2, 1, &[-2.5, 2.5])).unwrap();
        for k in 0..10 {
            assert!((psi[(0, k)] - if k % 2 == 0 { 1.0 } else { -1.0 }).abs() <= 1e-14);
            assert!((psi[(1, k)] - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn rbf_at_center() {
        let c = DMatrix::from_row_slice(1, 2, &[0.3, -0.1]);
        let e = Dictionary::ExponentialRbf { centers: c.clone(), scale: 3.0 };
        assert_eq!(eval_dictionary(&e, &c).unwrap()[(0, 0)], 1.0);
        let m = Dictionary::MaternRbf { centers: c.clone(), scale: 3.0, order: 2.0 };
        assert_eq!(eval_dictionary(&m, &c).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = Dictionary::chebyshev(2, BoxBounds::cube(2, -1.0, 1.0));
        let err = eval_dictionary(&d, &DMatrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn kernel_values() {
        let k = KernelSpec::matern(1.0, 2.0);
        let p = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(eval_kernel_matrix(&k, &p, &p).unwrap()[(0, 0)], 2.0);
        let q = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = eval_kernel_matrix(&k, &q, &q).unwrap();
        assert!((m[(0, 1)] - 1.624_838_898_635_177_5).abs() < 1e-12);
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 0.1, 1.0, 2.0, -1.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 2, &[0.7, 0.2, -0.3, 1.1]);
        let ab = eval_kernel_matrix(&k, &a, &b).unwrap();
        let ba = eval_kernel_matrix(&k, &b, &a).unwrap();
        assert!((ab - ba.transpose()).amax() == 0.0);
    }

    #[test]
    fn matern_gram_is_psd() {
        let pts = BoxBounds::cube(2, -1.0, 1.0).sample(50, 3);
        for nu in [0.5, 1.0, 2.0, 3.5] {
            let g = eval_kernel_matrix(&KernelSpec::matern(1.5, nu), &pts, &pts).unwrap();
            let e = SymEig::new(&g);
            let min = e.values[e.values.len() - 1];
            assert!(min >= -1e-8 * e.max_value(), "nu={nu} min={min}");
        }
    }

    #[test]
    fn kernel_scale_formula() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0 * 2f64.sqrt(), 2.0 * 2f64.sqrt()]);
        let s = SnapshotSet::uniform(x.clone(), x.clone(), Provenance::Ingested).unwrap();
        assert!((default_kernel_scale(&s).unwrap() - 0.5).abs() < 1e-15);
        let s10 = SnapshotSet::uniform(&x * 10.0, &x * 10.0, Provenance::Ingested).unwrap();
        assert!((default_kernel_scale(&s10).unwrap() - 0.05).abs() < 1e-15);
        let flat = DMatrix::from_element(3, 2, 1.0);
        let s = SnapshotSet::uniform(flat.clone(), flat, Provenance::Ingested).unwrap();
        assert!(matches!(default_kernel_scale(&s), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn centers_lie_in_bounding_box() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, -1.0, 1.0, 0.0]);
        let c = sample_centers(&pts, 20, 5).unwrap();
        assert!(c.column(0).iter().all(|v| (0.0..=2.0).contains(v)));
        assert!(c.column(1).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
