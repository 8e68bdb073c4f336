//! Multi-step error bounds for Koopman and Perron-Frobenius mode decompositions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::galerkin::{BasisDescriptor, GalerkinSystem, Space};
use crate::linalg::{spectral_norm, symmetrize, PsdSpectrum, SymEig};
use crate::observables::{eval_dictionary, kernel_vector, Dictionary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    FirstOrderMin,
    FullOrder,
    Expected,
}

/// Which of the two aggregation formulas produced a step's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Root of the sum of squares weighted by powers of the one-step norm.
    SquareSum,
    /// Sum weighted by the norms of the operator powers.
    TriangleSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub step: usize,
    pub value: f64,
    pub e1: f64,
    pub e2: f64,
    pub chosen: Aggregation,
    pub init: f64,
    pub proj: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub variant: BoundVariant,
    pub steps: Vec<StepError>,
    /// False when an input (for example an estimated observable norm) is not itself rigorous.
    pub rigorous: bool,
}

impl ErrorSeries {
    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.value).collect()
    }

    pub fn horizon(&self) -> usize {
        self.steps.last().map_or(0, |s| s.step)
    }

    pub fn get(&self, step: usize) -> Option<&StepError> {
        self.steps.iter().find(|s| s.step == step)
    }

    /// Every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.steps {
            s.value *= factor;
            s.e1 *= factor;
            s.e2 *= factor;
            s.init *= factor;
            s.proj *= factor;
            s.std = s.std.map(|v| v * factor);
        }
        out
    }
}

fn combine(e1: f64, e2: f64) -> (f64, Aggregation) {
    if e1 <= e2 {
        (e1, Aggregation::SquareSum)
    } else {
        (e2, Aggregation::TriangleSum)
    }
}

/// Norms `|G^{1/2} K^j G^{-1/2}|` for `j = 0..=max_power` on the numerical range of `G`.
pub fn op_norm_powers(sys: &GalerkinSystem, max_power: usize) -> Vec<f64> {
    let spec = PsdSpectrum::gram(&sys.g);
    let w = spec.whitening();
    let c = spec.coloring_t();
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(1.0);
    let mut t = w;
    for _ in 0..max_power {
        t = &sys.k * t;
        out.push(spectral_norm(&(&c * &t)));
    }
    out
}

/// `|G^{1/2} K^j G^{-1/2}|`.
pub fn op_norm_power(sys: &GalerkinSystem, j: usize) -> f64 {
    op_norm_powers(sys, j)[j]
}

fn nonzero(g: &DVector<f64>) -> Result<()> {
    if g.iter().all(|&v| v == 0.0) {
        Err(Error::ZeroVector)
    } else {
        Ok(())
    }
}

/// `(K^j g)^T (L - K^T G K) (K^j g)` for `j = 0..count`, clipped at zero.
pub fn projection_residuals(sys: &GalerkinSystem, g: &DVector<f64>, count: usize) -> Vec<f64> {
    let r = sys.residual_matrix();
    sys.powers(g, count.saturating_sub(1))
        .iter()
        .take(count)
        .map(|p| p.dot(&(&r * p)).max(0.0))
        .collect()
}

fn first_order_terms(q: &[f64], nu: &[f64], m: usize) -> (f64, f64) {
    let nu1 = nu.get(1).copied().unwrap_or(1.0);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for j in 0..m {
        let qj = q[m - j - 1];
        s1 += nu1.powi(2 * j as i32) * qj;
        s2 += nu[j] * qj.sqrt();
    }
    (s1.sqrt(), s2)
}

/// First-order KMD bounds `E_m = min(E_m^(1), E_m^(2))` for `m = 1..=n`.
pub fn kmd_error_bounds(sys: &GalerkinSystem, g: &DVector<f64>, n: usize) -> Result<ErrorSeries> {
    sys.check_vector(g)?;
    nonzero(g)?;
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let q = projection_residuals(sys, g, n);
    let nu = op_norm_powers(sys, n);
    let steps = (1..=n)
        .map(|m| {
            let (e1, e2) = first_order_terms(&q, &nu, m);
            let (value, chosen) = combine(e1, e2);
            StepError { step: m, value, e1, e2, chosen, init: 0.0, proj: value, std: None }
        })
        .collect();
    Ok(ErrorSeries { variant: BoundVariant::FirstOrderMin, steps, rigorous: true })
}

/// `sqrt(lambda_max(G^+ L))`, the norm of the operator restricted to the subspace.
pub fn restricted_operator_norm(sys: &GalerkinSystem) -> f64 {
    let spec = PsdSpectrum::gram(&sys.g);
    let w = spec.whitening();
    let m = symmetrize(&(w.transpose() * &sys.l * &w));
    SymEig::new(&m).max_value().max(0.0).sqrt()
}

/// Bounds keeping every order of the recursive expansion of the out-of-subspace
/// terms, with the norm of `QK` replaced by its value on the subspace.
pub fn kmd_error_bounds_full(sys: &GalerkinSystem, g: &DVector<f64>, n: usize) -> Result<ErrorSeries> {
    sys.check_vector(g)?;
    nonzero(g)?;
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let q = projection_residuals(sys, g, n);
    let nu = op_norm_powers(sys, n);
    let nu1 = nu[1];
    let qk = restricted_operator_norm(sys);
    // b[k] bounds |Q K^k P^* g|; f[k] bounds the error after k steps
    let mut b = vec![0.0; n + 1];
    let mut f = vec![0.0; n + 1];
    let mut steps = Vec::with_capacity(n);
    for m in 1..=n {
        b[m] = q[m - 1].sqrt() + qk * f[m - 1];
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for j in 0..m {
            s1 += nu1.powi(2 * j as i32) * b[m - j].powi(2);
            s2 += nu[j] * b[m - j];
        }
        let (value, chosen) = combine(s1.sqrt(), s2);
        f[m] = value;
        steps.push(StepError { step: m, value, e1: s1.sqrt(), e2: s2, chosen, init: 0.0, proj: value, std: None });
    }
    Ok(ErrorSeries { variant: BoundVariant::FullOrder, steps, rigorous: true })
}

/// Least-squares coefficients of `g` in the system's basis under the quadrature
/// inner product, and the quadrature norm of the residual.
pub fn initialization_error(
    dict: &Dictionary,
    snapshots: &SnapshotSet,
    sys: &GalerkinSystem,
    g_samples: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    if g_samples.len() != snapshots.len() {
        return Err(Error::DimensionMismatch { context: "observable samples", expected: snapshots.len(), found: g_samples.len() });
    }
    if g_samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observable samples".into()));
    }
    let psi = eval_dictionary(dict, &snapshots.x)? * sys.basis_matrix();
    if psi.ncols() != sys.dim() {
        return Err(Error::DimensionMismatch { context: "dictionary size", expected: sys.dim(), found: psi.ncols() });
    }
    Ok(initialization_from_features(&psi, &snapshots.weights, g_samples))
}

/// As [`initialization_error`] with precomputed features `Phi = Psi_X B`.
pub fn initialization_from_features(
    phi: &DMatrix<f64>,
    w: &DVector<f64>,
    g_samples: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let wg = g_samples.component_mul(w);
    let mut wphi = phi.clone();
    for (m, mut r) in wphi.row_iter_mut().enumerate() {
        r *= w[m];
    }
    let gram = symmetrize(&(phi.transpose() * &wphi));
    let coeffs = PsdSpectrum::gram(&gram).pinv() * (phi.transpose() * wg);
    let resid = phi * &coeffs - g_samples;
    let err = resid.iter().zip(w.iter()).map(|(r, w)| w * r * r).sum::<f64>().sqrt();
    (coeffs, err)
}

/// Quadrature-weighted error of the one-step forecast of `g`: fit `g(X)` in the
/// system's basis, advance by `K`, compare with `g(Y)`. `psi_x` is the full
/// dictionary at the data points.
pub fn one_step_prediction_error(
    sys: &GalerkinSystem,
    psi_x: &DMatrix<f64>,
    weights: &DVector<f64>,
    g_x: &DVector<f64>,
    g_y: &DVector<f64>,
) -> Result<f64> {
    let m = weights.len();
    for (what, n) in [("dictionary rows", psi_x.nrows()), ("g(X)", g_x.len()), ("g(Y)", g_y.len())] {
        if n != m {
            return Err(Error::DimensionMismatch { context: what, expected: m, found: n });
        }
    }
    let basis = sys.basis_matrix();
    if psi_x.ncols() != basis.nrows() {
        return Err(Error::DimensionMismatch { context: "dictionary size", expected: basis.nrows(), found: psi_x.ncols() });
    }
    let phi = psi_x * basis;
    let (c, _) = initialization_from_features(&phi, weights, g_x);
    let pred = phi * (&sys.k * c);
    Ok(pred.iter().zip(g_y.iter()).zip(weights.iter()).map(|((p, t), w)| w * (p - t) * (p - t)).sum::<f64>().sqrt())
}

/// Kernel data for a forecast started at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmdQuery {
    pub x0: Vec<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub delta: f64,
    pub g_norm: f64,
    /// False when `g_norm` was estimated from data rather than supplied.
    pub g_norm_rigorous: bool,
}

/// How the RKHS norm of the forecast observable is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum GNorm {
    Analytic(f64),
    /// Values of `g` at the system's data points; the norm of the least-squares
    /// representer in the subspace is used.
    Estimated(DVector<f64>),
}

fn rkhs_parts(sys: &GalerkinSystem) -> Result<(&crate::observables::KernelSpec, &DMatrix<f64>)> {
    if sys.space != Space::Rkhs {
        return Err(Error::SpaceMismatch { expected: "RKHS", found: sys.space.name() });
    }
    match &sys.descriptor {
        BasisDescriptor::Kernel { kernel, points } => Ok((kernel, points)),
        _ => Err(Error::InvalidArgument("RKHS system does not carry its kernel and data points".into())),
    }
}

/// `g^T pinv(G) g` with `g` the inner products of the observable with the basis.
pub fn estimate_rkhs_norm(sys: &GalerkinSystem, g_at_data: &DVector<f64>) -> Result<f64> {
    let (_, points) = rkhs_parts(sys)?;
    if g_at_data.len() != points.nrows() {
        return Err(Error::DimensionMismatch { context: "observable values", expected: points.nrows(), found: g_at_data.len() });
    }
    let h = sys.basis_matrix().transpose() * g_at_data;
    let v = h.dot(&(PsdSpectrum::gram(&sys.g).pinv() * &h));
    Ok(v.max(0.0).sqrt())
}

impl PfmdQuery {
    pub fn new(sys: &GalerkinSystem, x0: &[f64], g_norm: GNorm) -> Result<Self> {
        let (kernel, points) = rkhs_parts(sys)?;
        if x0.len() != points.ncols() {
            return Err(Error::DimensionMismatch { context: "start state", expected: points.ncols(), found: x0.len() });
        }
        let b = sys.basis_matrix().transpose() * kernel_vector(kernel, x0, points)?;
        let pinv = PsdSpectrum::gram(&sys.g).pinv();
        let c0 = &pinv * &b;
        let c = &c0 + &pinv * (&b - &sys.g * &c0);
        let delta = (kernel.eval(x0, x0)? - 2.0 * c.dot(&b) + c.dot(&(&sys.g * &c))).max(0.0).sqrt();
        let (g_norm, g_norm_rigorous) = match g_norm {
            GNorm::Analytic(v) => {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("observable norm must be finite and nonnegative, got {v}")));
                }
                (v, true)
            }
            GNorm::Estimated(values) => (estimate_rkhs_norm(sys, &values)?, false),
        };
        Ok(Self { x0: x0.to_vec(), b, c, delta, g_norm, g_norm_rigorous })
    }
}

/// RKHS-norm bounds for the forecast of `k(., x0)` and pointwise bounds scaled
/// by the observable norm, for steps `0..=n`.
pub fn pfmd_pointwise_bounds(sys: &GalerkinSystem, query: &PfmdQuery, n: usize) -> Result<(ErrorSeries, ErrorSeries)> {
    rkhs_parts(sys)?;
    sys.check_vector(&query.c)?;
    let q = projection_residuals(sys, &query.c, n.max(1));
    let nu = op_norm_powers(sys, n.max(1));
    let steps: Vec<StepError> = (0..=n)
        .map(|m| {
            let init = nu[m] * query.delta;
            let proj: f64 = (0..m).map(|j| nu[j] * q[m - j - 1].sqrt()).sum();
            let value = init + proj;
            StepError { step: m, value, e1: value, e2: value, chosen: Aggregation::TriangleSum, init, proj, std: None }
        })
        .collect();
    let norm = ErrorSeries { variant: BoundVariant::FirstOrderMin, steps, rigorous: true };
    let mut pointwise = norm.scaled(query.g_norm);
    pointwise.rigorous = query.g_norm_rigorous;
    Ok((norm, pointwise))
}

/// Forecast `g(F^n(x0))` for `n = 0..=steps` from values of `g` at the data points.
pub fn pfmd_predict(sys: &GalerkinSystem, query: &PfmdQuery, g_at_data: &DVector<f64>, steps: usize) -> Result<Vec<f64>> {
    let (_, points) = rkhs_parts(sys)?;
    if g_at_data.len() != points.nrows() {
        return Err(Error::DimensionMismatch { context: "observable values", expected: points.nrows(), found: g_at_data.len() });
    }
    let h = sys.basis_matrix().transpose() * g_at_data;
    Ok(sys.powers(&query.c, steps).iter().map(|p| p.dot(&h)).collect())
}
