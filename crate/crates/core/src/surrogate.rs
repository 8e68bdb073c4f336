//! Expected errors from Gaussian random elements with a data-driven covariance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{op_norm_powers, projection_residuals, Aggregation, BoundVariant, ErrorSeries, GNorm, PfmdQuery, StepError};
use crate::error::{Error, Result};
use crate::galerkin::{BasisDescriptor, GalerkinSystem, Space};
use crate::geometry::{pad_truncate, principal_angles};
use crate::linalg::{mean_std, PsdSpectrum};
use crate::rng::StreamKey;

const DOMAIN_COEFFS: u64 = 0;
const DOMAIN_OPNORM: u64 = 1;
const DOMAIN_FUNCTIONAL: u64 = 2;
const DOMAIN_TRIANGLE: u64 = 1 << 32;
const MAX_ATTEMPTS: u32 = 16;

/// How `tau` enters the exponential law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawConvention {
    /// `lambda_j^2 = exp(-j / tau)`.
    Squared,
    /// `lambda_j = exp(-j / tau)`.
    Direct,
}

/// Covariance eigenvalues `lambda_1 >= lambda_2 >= ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenLaw {
    ExpDecay { tau: f64, convention: LawConvention },
    Custom { values: Vec<f64> },
}

impl Default for EigenLaw {
    fn default() -> Self {
        EigenLaw::ExpDecay { tau: 1e3, convention: LawConvention::Squared }
    }
}

impl EigenLaw {
    pub fn values(&self, r: usize) -> Result<Vec<f64>> {
        match self {
            EigenLaw::ExpDecay { tau, convention } => {
                if !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::InvalidArgument(format!("eigenvalue decay tau must be positive, got {tau}")));
                }
                let scale = match convention {
                    LawConvention::Squared => 0.5 / tau,
                    LawConvention::Direct => 1.0 / tau,
                };
                Ok((1..=r).map(|j| (-(j as f64) * scale).exp()).collect())
            }
            EigenLaw::Custom { values } => {
                if values.len() < r {
                    return Err(Error::InvalidArgument(format!(
                        "custom eigenvalue law has {} entries, basis needs {r}",
                        values.len()
                    )));
                }
                let v = values[..r].to_vec();
                if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidArgument("custom eigenvalues must be finite and nonnegative".into()));
                }
                if v.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidArgument("custom eigenvalues must be nonincreasing".into()));
                }
                if v.first().is_some_and(|x| *x == 0.0) {
                    return Err(Error::InvalidArgument("leading custom eigenvalue must be positive".into()));
                }
                Ok(v)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EigenLaw::ExpDecay { tau, convention: LawConvention::Squared } => format!("lambda_j^2=exp(-j/{tau})"),
            EigenLaw::ExpDecay { tau, convention: LawConvention::Direct } => format!("lambda_j=exp(-j/{tau})"),
            EigenLaw::Custom { values } => format!("custom({} values)", values.len()),
        }
    }
}

/// Orthonormal basis the Gaussian element is expanded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateBasis {
    SvdOfG { rank: usize },
    Pad { rank: usize },
}

impl SurrogateBasis {
    pub fn rank(&self) -> usize {
        match self {
            SurrogateBasis::SvdOfG { rank } | SurrogateBasis::Pad { rank } => *rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSurrogate {
    pub law: EigenLaw,
    pub samples: usize,
    pub seed: u64,
    pub basis: SurrogateBasis,
}

impl Default for GpSurrogate {
    fn default() -> Self {
        Self { law: EigenLaw::default(), samples: 100, seed: 0, basis: SurrogateBasis::SvdOfG { rank: 200 } }
    }
}

/// A system expressed in the surrogate's orthonormal basis.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub system: GalerkinSystem,
    /// Columns of the orthonormal basis as coefficients in the parent system.
    pub map: DMatrix<f64>,
}

impl ReducedSystem {
    /// Coefficients of the orthogonal projection of `g` onto the reduced span.
    fn project(&self, parent: &GalerkinSystem, g: &DVector<f64>) -> DVector<f64> {
        self.map.transpose() * (&parent.g * g)
    }
}

impl GpSurrogate {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("surrogate sample count must be at least 1".into()));
        }
        if self.basis.rank() == 0 {
            return Err(Error::InvalidArgument("surrogate basis rank must be at least 1".into()));
        }
        Ok(())
    }

    /// Orthonormal reduction used for every expectation; the rank is capped at
    /// what the system supports.
    pub fn reduce(&self, sys: &GalerkinSystem) -> Result<ReducedSystem> {
        self.validate()?;
        match self.basis {
            SurrogateBasis::SvdOfG { rank } => {
                let spec = PsdSpectrum::gram(&sys.g);
                let r = rank.min(spec.rank());
                if r == 0 {
                    return Err(Error::DegenerateData("Gram matrix has numerical rank 0".into()));
                }
                let map = spec.whitening().columns(0, r).into_owned();
                Ok(ReducedSystem { system: sys.reduce_orthonormal(&map)?, map })
            }
            SurrogateBasis::Pad { rank } => {
                let q = principal_angles(sys, &DMatrix::identity(sys.dim(), sys.dim()), None)?.count();
                let pad = pad_truncate(sys, None, rank.min(q))?;
                Ok(ReducedSystem { system: pad.to_system(sys), map: pad.u })
            }
        }
    }

    fn scales(&self, r: usize) -> Result<Vec<f64>> {
        Ok(self.law.values(r)?.into_iter().map(f64::sqrt).collect())
    }

    /// Row `index` of the coefficient block for `domain`, redrawn on the probability-zero event of a zero norm.
    fn draw(&self, domain: u64, index: usize, scales: &[f64]) -> Result<DVector<f64>> {
        let key = StreamKey::new(self.seed, domain);
        for attempt in 0..MAX_ATTEMPTS {
            let w = key.normals_attempt(index as u64, scales.len(), attempt);
            let v = DVector::from_iterator(scales.len(), w.iter().zip(scales).map(|(a, s)| a * s));
            if v.norm() > 0.0 {
                return Ok(v);
            }
        }
        Err(Error::SingularSample { index, attempts: MAX_ATTEMPTS })
    }

    fn draws(&self, domain: u64, count: usize, scales: &[f64]) -> Result<Vec<DVector<f64>>> {
        (0..count).into_par_iter().map(|k| self.draw(domain, k, scales)).collect()
    }
}

/// `count x r` matrix whose row `k` is `(sqrt(lambda_1) w_k1, ..., sqrt(lambda_r) w_kr)`.
pub fn sample_gp_coeffs(surrogate: &GpSurrogate, count: usize) -> Result<DMatrix<f64>> {
    surrogate.validate()?;
    let scales = surrogate.scales(surrogate.basis.rank())?;
    let key = StreamKey::new(surrogate.seed, DOMAIN_COEFFS);
    let rows: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|k| key.normals(k as u64, scales.len()).iter().zip(&scales).map(|(a, s)| a * s).collect())
        .collect();
    Ok(DMatrix::from_fn(count, scales.len(), |i, j| rows[i][j]))
}

/// Per-sample ratios `|K^j w_k| / |w_k|` for `j = 0..=max_power`.
fn ratio_samples(red: &GalerkinSystem, surrogate: &GpSurrogate, max_power: usize) -> Result<Vec<Vec<f64>>> {
    let scales = surrogate.scales(red.dim())?;
    let ws = surrogate.draws(DOMAIN_OPNORM, surrogate.samples, &scales)?;
    Ok(ws
        .par_iter()
        .map(|w| {
            let n0 = w.norm();
            let mut out = Vec::with_capacity(max_power + 1);
            let mut v = w.clone();
            out.push(1.0);
            for _ in 0..max_power {
                v = &red.k * v;
                out.push(v.norm() / n0);
            }
            out
        })
        .collect())
}

fn column_stats(samples: &[Vec<f64>], j: usize) -> (f64, f64) {
    mean_std(&samples.iter().map(|s| s[j]).collect::<Vec<_>>())
}

/// Monte Carlo `E_C[K^j]` with its sample standard deviation, for `j = 0..=max_power`.
pub fn expected_op_norms(sys: &GalerkinSystem, max_power: usize, surrogate: &GpSurrogate) -> Result<Vec<(f64, f64)>> {
    let red = surrogate.reduce(sys)?;
    let samples = ratio_samples(&red.system, surrogate, max_power)?;
    Ok((0..=max_power).map(|j| column_stats(&samples, j)).collect())
}

pub fn expected_op_norm(sys: &GalerkinSystem, j: usize, surrogate: &GpSurrogate) -> Result<(f64, f64)> {
    Ok(expected_op_norms(sys, j, surrogate)?[j])
}

/// Unit directions `w_{j,k} / |w_{j,k}|`, indexed `[j][k]`.
fn unit_draws(surrogate: &GpSurrogate, terms: usize, r: usize) -> Result<Vec<Vec<DVector<f64>>>> {
    let scales = surrogate.scales(r)?;
    (0..terms)
        .map(|j| {
            let ws = surrogate.draws(DOMAIN_TRIANGLE + j as u64, surrogate.samples, &scales)?;
            Ok(ws.into_iter().map(|w| w.normalize()).collect())
        })
        .collect()
}

/// Per-sample `|sum_j alpha_j u_{j,k}|` over the terms with nonzero weight.
fn aggregate(alphas: &[(usize, f64)], units: &[Vec<DVector<f64>>], samples: usize, r: usize) -> Vec<f64> {
    (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut acc = DVector::zeros(r);
            for &(j, a) in alphas {
                if a != 0.0 {
                    acc.axpy(a, &units[j][k], 1.0);
                }
            }
            acc.norm()
        })
        .collect()
}

fn nonzero(g: &DVector<f64>) -> Result<()> {
    if g.iter().all(|&v| v == 0.0) {
        Err(Error::ZeroVector)
    } else {
        Ok(())
    }
}

/// Expected KMD errors for `m = 1..=n`.
///
/// Each step reports both the square-sum form with `E_C[K]` in place of the
/// one-step norm (`e1`) and the Gaussian triangle aggregate (`e2`). `value`
/// takes the form matching the aggregation the strict bound selects on the
/// same reduced system.
pub fn expected_kmd_errors(sys: &GalerkinSystem, g: &DVector<f64>, n: usize, surrogate: &GpSurrogate) -> Result<ErrorSeries> {
    sys.check_vector(g)?;
    nonzero(g)?;
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let red = surrogate.reduce(sys)?;
    let rs = &red.system;
    let r = rs.dim();
    let gr = red.project(sys, g);
    let q = projection_residuals(rs, &gr, n);
    let nu = op_norm_powers(rs, n);
    let ratios = ratio_samples(rs, surrogate, n.max(1))?;
    let ec: Vec<f64> = (0..=n.max(1)).map(|j| column_stats(&ratios, j).0).collect();
    let units = unit_draws(surrogate, n, r)?;

    let mut steps = Vec::with_capacity(n);
    for m in 1..=n {
        let mut s1 = 0.0;
        let mut strict2 = 0.0;
        for j in 0..m {
            s1 += nu[1].powi(2 * j as i32) * q[m - j - 1];
            strict2 += nu[j] * q[m - j - 1].sqrt();
        }
        let strict_choice = if s1.sqrt() <= strict2 { Aggregation::SquareSum } else { Aggregation::TriangleSum };

        let e1 = (0..m).map(|j| ec[1].powi(2 * j as i32) * q[m - j - 1]).sum::<f64>().sqrt();
        let e1_samples: Vec<f64> = ratios
            .iter()
            .map(|rho| (0..m).map(|j| rho[1].powi(2 * j as i32) * q[m - j - 1]).sum::<f64>().sqrt())
            .collect();
        let alphas: Vec<(usize, f64)> = (0..m).map(|j| (j, ec[j] * q[m - j - 1].sqrt())).collect();
        let tri = aggregate(&alphas, &units, surrogate.samples, r);
        let (e2, std2) = mean_std(&tri);
        let (_, std1) = mean_std(&e1_samples);

        let (value, std) = match strict_choice {
            Aggregation::SquareSum => (e1, std1),
            Aggregation::TriangleSum => (e2, std2),
        };
        steps.push(StepError { step: m, value, e1, e2, chosen: strict_choice, init: 0.0, proj: value, std: Some(std) });
    }
    Ok(ErrorSeries { variant: BoundVariant::Expected, steps, rigorous: false })
}

fn kernel_points(sys: &GalerkinSystem) -> Result<&DMatrix<f64>> {
    if sys.space != Space::Rkhs {
        return Err(Error::SpaceMismatch { expected: "RKHS", found: sys.space.name() });
    }
    match &sys.descriptor {
        BasisDescriptor::Kernel { points, .. } => Ok(points),
        _ => Err(Error::InvalidArgument("RKHS system does not carry its kernel and data points".into())),
    }
}

fn functional_samples(red: &ReducedSystem, surrogate: &GpSurrogate, g_at_data: &DVector<f64>) -> Result<Vec<f64>> {
    let h = red.system.basis_matrix().transpose() * g_at_data;
    let scales = surrogate.scales(red.system.dim())?;
    let ws = surrogate.draws(DOMAIN_FUNCTIONAL, surrogate.samples, &scales)?;
    Ok(ws.iter().map(|w| h.dot(w).abs() / w.norm()).collect())
}

/// Monte Carlo `E_C[g] = E |<g, zeta>| / |zeta|` from the values of `g` at the
/// data points, with its sample standard deviation.
pub fn expected_functional_values(sys: &GalerkinSystem, surrogate: &GpSurrogate, g_at_data: &DVector<f64>) -> Result<(f64, f64)> {
    let points = kernel_points(sys)?;
    if g_at_data.len() != points.nrows() {
        return Err(Error::DimensionMismatch { context: "observable values", expected: points.nrows(), found: g_at_data.len() });
    }
    let red = surrogate.reduce(sys)?;
    Ok(mean_std(&functional_samples(&red, surrogate, g_at_data)?))
}

/// As [`expected_functional_values`], evaluating `g` at the data points.
pub fn expected_functional<F>(g: F, sys: &GalerkinSystem, surrogate: &GpSurrogate) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let points = kernel_points(sys)?;
    let vals = DVector::from_iterator(
        points.nrows(),
        points.row_iter().map(|row| g(&row.iter().copied().collect::<Vec<_>>())),
    );
    Ok(expected_functional_values(sys, surrogate, &vals)?.0)
}

/// Expected RKHS-norm errors for the forecast of `k(., x0)` and expected
/// pointwise errors for `g`, for steps `0..=n`.
pub fn expected_pfmd_errors(
    sys: &GalerkinSystem,
    query: &PfmdQuery,
    n: usize,
    surrogate: &GpSurrogate,
    g_at_data: &DVector<f64>,
) -> Result<(ErrorSeries, ErrorSeries)> {
    kernel_points(sys)?;
    let red = surrogate.reduce(sys)?;
    let rs = &red.system;
    let r = rs.dim();
    let rq = PfmdQuery::new(rs, &query.x0, GNorm::Analytic(query.g_norm))?;
    let q = projection_residuals(rs, &rq.c, n.max(1));
    let ratios = ratio_samples(rs, surrogate, n.max(1))?;
    let ec: Vec<f64> = (0..=n).map(|j| column_stats(&ratios, j).0).collect();
    let units = unit_draws(surrogate, n + 1, r)?;

    let mut steps = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut alphas: Vec<(usize, f64)> = (0..m).map(|j| (j, ec[j] * q[m - j - 1].sqrt())).collect();
        let init = ec[m] * rq.delta;
        let proj = mean_std(&aggregate(&alphas, &units, surrogate.samples, r)).0;
        alphas.push((m, init));
        let (value, std) = mean_std(&aggregate(&alphas, &units, surrogate.samples, r));
        steps.push(StepError { step: m, value, e1: value, e2: value, chosen: Aggregation::TriangleSum, init, proj, std: Some(std) });
    }
    let norm = ErrorSeries { variant: BoundVariant::Expected, steps, rigorous: false };
    let (eg, _) = mean_std(&functional_samples(&red, surrogate, g_at_data)?);
    Ok((norm.clone(), norm.scaled(eg)))
}
