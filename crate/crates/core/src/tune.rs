//! Dictionary hyperparameter learning by minimizing averaged forecast error bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{initialization_from_features, op_norm_powers, projection_residuals};
use crate::dynamics::SnapshotSet;
use crate::error::{Error, Result};
use crate::galerkin::{build_from_features, svd_truncate, BasisDescriptor, GalerkinSystem};
use crate::linalg::PsdSpectrum;
use crate::observables::{eval_dictionary, Dictionary};

/// Admissible range of the scale `s` and order `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub s: (f64, f64),
    pub nu: (f64, f64),
}

impl Default for ParamBox {
    fn default() -> Self {
        Self { s: (1e-3, 1e2), nu: (0.25, 8.0) }
    }
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("s", self.s), ("nu", self.nu)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!("parameter box for {name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, s: f64, nu: f64) -> bool {
        (self.s.0..=self.s.1).contains(&s) && (self.nu.0..=self.nu.1).contains(&nu)
    }
}

/// Held-out trajectories; row `n` of each matrix is the state after `n` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub trajectories: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct TuningProblem {
    pub snapshots: SnapshotSet,
    pub centers: DMatrix<f64>,
    pub rank: usize,
    pub horizon: usize,
    pub bounds: ParamBox,
    pub test: Option<TestSet>,
}

impl TuningProblem {
    pub fn new(snapshots: SnapshotSet, centers: DMatrix<f64>, rank: usize) -> Result<Self> {
        let p = Self { snapshots, centers, rank, horizon: 21, bounds: ParamBox::default(), test: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.snapshots.validate()?;
        self.bounds.validate()?;
        if self.centers.ncols() != self.snapshots.dim() {
            return Err(Error::DimensionMismatch { context: "center dimension", expected: self.snapshots.dim(), found: self.centers.ncols() });
        }
        if self.centers.nrows() == 0 || self.rank == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("tuning needs at least one center, rank >= 1 and horizon >= 1".into()));
        }
        if let Some(t) = &self.test {
            if t.trajectories.iter().any(|tr| tr.ncols() != self.snapshots.dim() || tr.nrows() < 2) {
                return Err(Error::InvalidArgument("test trajectories need the state dimension and at least two rows".into()));
            }
        }
        Ok(())
    }

    pub fn dictionary(&self, s: f64, nu: f64) -> Dictionary {
        Dictionary::MaternRbf { centers: self.centers.clone(), scale: s, order: nu }
    }
}

/// Reduced model at one parameter point.
#[derive(Debug, Clone)]
pub struct TunedModel {
    pub dictionary: Dictionary,
    pub system: GalerkinSystem,
    /// Reduced coefficients of each coordinate observable.
    pub coords: Vec<DVector<f64>>,
    pub init_errors: Vec<f64>,
    /// Rank actually used; below the requested rank when `G` has lower numerical rank.
    pub rank_used: usize,
}

/// Assembles the reduced model and coordinate fits at `(s, nu)`.
pub fn tuned_model(problem: &TuningProblem, s: f64, nu: f64) -> Result<TunedModel> {
    if !problem.bounds.contains(s, nu) {
        return Err(Error::InvalidArgument(format!("(s, nu) = ({s}, {nu}) lies outside the parameter box")));
    }
    let dictionary = problem.dictionary(s, nu);
    let snaps = &problem.snapshots;
    let px = eval_dictionary(&dictionary, &snaps.x)?;
    let py = eval_dictionary(&dictionary, &snaps.y)?;
    if px.iter().chain(py.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("dictionary values at s={s}, nu={nu}")));
    }
    let full = build_from_features(&px, &py, &snaps.weights, BasisDescriptor::Dictionary { dictionary: dictionary.clone() })?;
    let rank_used = problem.rank.min(PsdSpectrum::gram(&full.g).rank());
    if rank_used < problem.rank {
        log::debug!("rank capped at {rank_used} (requested {}) at s={s}, nu={nu}", problem.rank);
    }
    let system = svd_truncate(&full, rank_used)?;
    let phi = &px * system.basis_matrix();
    let (coords, init_errors) = (0..snaps.dim())
        .map(|i| initialization_from_features(&phi, &snaps.weights, &snaps.x.column(i).into_owned()))
        .unzip();
    Ok(TunedModel { dictionary, system, coords, init_errors, rank_used })
}

/// Bound `E_n(g_i)` for `n = 0..horizon` and every coordinate, indexed `[i][n]`.
pub fn coordinate_bounds(model: &TunedModel, horizon: usize) -> Vec<Vec<f64>> {
    let sys = &model.system;
    let nu = op_norm_powers(sys, horizon.saturating_sub(1));
    model
        .coords
        .par_iter()
        .zip(&model.init_errors)
        .map(|(g, &init)| {
            let q = projection_residuals(sys, g, horizon.saturating_sub(1));
            (0..horizon)
                .map(|n| nu[n] * init + (0..n).map(|j| nu[j] * q[n - j - 1].sqrt()).sum::<f64>())
                .collect()
        })
        .collect()
}

fn mean_bound(model: &TunedModel, horizon: usize) -> f64 {
    let b = coordinate_bounds(model, horizon);
    let total: f64 = b.iter().flatten().sum();
    total / (horizon * b.len()) as f64
}

/// Average of the coordinate bounds over horizons `0..H` and coordinates.
pub fn tuning_loss(problem: &TuningProblem, s: f64, nu: f64) -> Result<f64> {
    let model = tuned_model(problem, s, nu)?;
    let loss = mean_bound(&model, problem.horizon);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("tuning loss at s={s}, nu={nu}")));
    }
    Ok(loss)
}

/// Root-mean-square forecast error on the test trajectories, averaged over
/// steps `1..H` and coordinates.
pub fn test_error(model: &TunedModel, test: &TestSet, horizon: usize) -> Result<f64> {
    let sys = &model.system;
    let basis = sys.basis_matrix();
    let steps = horizon.saturating_sub(1).max(1);
    let d = model.coords.len();
    let starts = DMatrix::from_fn(test.trajectories.len(), d, |k, j| test.trajectories[k][(0, j)]);
    let psi0 = eval_dictionary(&model.dictionary, &starts)? * basis;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, g) in model.coords.iter().enumerate() {
        let pw = sys.powers(g, steps);
        for n in 1..=steps {
            let pred = &psi0 * &pw[n];
            let mut sq = 0.0;
            let mut used = 0usize;
            for (k, tr) in test.trajectories.iter().enumerate().filter(|(_, t)| t.nrows() > n) {
                sq += (pred[k] - tr[(n, i)]).powi(2);
                used += 1;
            }
            if used > 0 {
                total += (sq / used as f64).sqrt();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("test trajectories are shorter than two steps".into()));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub epochs: usize,
    pub fd_step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-2, epochs: 500, fd_step: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub s: f64,
    pub nu: f64,
    pub loss: f64,
    pub best_loss: f64,
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_s: f64,
    pub best_nu: f64,
    pub best_loss: f64,
    pub initial_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl TuningResult {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.loss).collect()
    }

    pub fn test_errors(&self) -> Option<Vec<f64>> {
        self.history.iter().map(|h| h.test_error).collect()
    }
}

/// Adam on `(log s, log nu)` with central finite-difference gradients of an
/// arbitrary loss; non-finite probes contribute a zero gradient component.
///
/// `observe` is called once per epoch at the current iterate and may attach a
/// test error to the record.
pub fn adam_minimize<F, O>(loss: F, init: (f64, f64), bounds: &ParamBox, config: &AdamConfig, mut observe: O) -> Result<TuningResult>
where
    F: Fn(f64, f64) -> f64 + Sync,
    O: FnMut(f64, f64) -> Option<f64>,
{
    bounds.validate()?;
    if config.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(config.lr > 0.0 && config.fd_step > 0.0) {
        return Err(Error::InvalidArgument("learning rate and finite-difference step must be positive".into()));
    }
    let lo = [bounds.s.0.ln(), bounds.nu.0.ln()];
    let hi = [bounds.s.1.ln(), bounds.nu.1.ln()];
    let clamp = |t: [f64; 2]| [t[0].clamp(lo[0], hi[0]), t[1].clamp(lo[1], hi[1])];
    let eval = |t: [f64; 2]| {
        let v = loss(t[0].exp(), t[1].exp());
        if v.is_finite() { v } else { f64::INFINITY }
    };

    let mut theta = clamp([init.0.ln(), init.1.ln()]);
    let initial_loss = eval(theta);
    if !initial_loss.is_finite() {
        return Err(Error::AllEvaluationsFailed);
    }
    let mut m = [0.0; 2];
    let mut v = [0.0; 2];
    let mut best = (theta, initial_loss);
    let mut history = Vec::with_capacity(config.epochs);
    let h = config.fd_step;

    for epoch in 0..config.epochs {
        let current = if epoch == 0 { initial_loss } else { eval(theta) };
        if current < best.1 {
            best = (theta, current);
        }
        let probes: Vec<f64> = (0..4)
            .into_par_iter()
            .map(|p| {
                let mut t = theta;
                t[p / 2] += if p % 2 == 0 { h } else { -h };
                eval(t)
            })
            .collect();
        let mut grad = [0.0; 2];
        for c in 0..2 {
            let (up, down) = (probes[2 * c], probes[2 * c + 1]);
            if up.is_finite() && down.is_finite() {
                grad[c] = (up - down) / (2.0 * h);
            }
        }
        let test_error = observe(theta[0].exp(), theta[1].exp());
        history.push(EpochRecord {
            epoch,
            s: theta[0].exp(),
            nu: theta[1].exp(),
            loss: current,
            best_loss: best.1,
            test_error,
        });
        let t = (epoch + 1) as i32;
        for c in 0..2 {
            m[c] = config.beta1 * m[c] + (1.0 - config.beta1) * grad[c];
            v[c] = config.beta2 * v[c] + (1.0 - config.beta2) * grad[c] * grad[c];
            let mh = m[c] / (1.0 - config.beta1.powi(t));
            let vh = v[c] / (1.0 - config.beta2.powi(t));
            theta[c] -= config.lr * mh / (vh.sqrt() + config.eps);
        }
        theta = clamp(theta);
    }
    let last = eval(theta);
    if last < best.1 {
        best = (theta, last);
    }
    Ok(TuningResult { best_s: best.0[0].exp(), best_nu: best.0[1].exp(), best_loss: best.1, initial_loss, history })
}

/// Runs [`adam_minimize`] on [`tuning_loss`], recording test errors when the problem has a test set.
pub fn optimize(problem: &TuningProblem, init: (f64, f64), config: &AdamConfig) -> Result<TuningResult> {
    problem.validate()?;
    let loss = |s: f64, nu: f64| tuning_loss(problem, s, nu).unwrap_or(f64::INFINITY);
    let observe = |s: f64, nu: f64| {
        let test = problem.test.as_ref()?;
        let model = tuned_model(problem, s, nu).ok()?;
        test_error(&model, test, problem.horizon).ok()
    };
    adam_minimize(loss, init, &problem.bounds, config, observe)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { context: "spearman inputs", expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData("spearman correlation needs at least two pairs".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateData("spearman input is constant".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Subtracts the mass-weighted mean of each within-body column from every row.
///
/// Columns are grouped into `masses.len()` consecutive blocks of equal width.
pub fn barycentre_shift(states: &DMatrix<f64>, masses: &[f64]) -> Result<DMatrix<f64>> {
    let bodies = masses.len();
    if bodies == 0 || states.ncols() % bodies != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} state columns cannot be split evenly over {bodies} bodies",
            states.ncols()
        )));
    }
    if masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidArgument("body masses must be positive".into()));
    }
    let width = states.ncols() / bodies;
    let total: f64 = masses.iter().sum();
    let mut out = states.clone();
    for mut row in out.row_iter_mut() {
        for c in 0..width {
            let centre = (0..bodies).map(|b| masses[b] * row[b * width + c]).sum::<f64>() / total;
            for b in 0..bodies {
                row[b * width + c] -= centre;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BoxBounds, Provenance};

    fn linear_problem() -> TuningProblem {
        let x = BoxBounds::cube(2, -1.0, 1.0).sample(120, 3);
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.2, 0.9]);
        let y = &x * a.transpose();
        let snaps = SnapshotSet::uniform(x, y, Provenance::RandomIid).unwrap();
        let centers = BoxBounds::cube(2, -1.0, 1.0).sample(15, 5);
        TuningProblem::new(snaps, centers, 10).unwrap()
    }

    #[test]
    fn unit_horizon_is_mean_init() {
        let mut p = linear_problem();
        p.horizon = 1;
        let m = tuned_model(&p, 0.7, 1.5).unwrap();
        let want = m.init_errors.iter().sum::<f64>() / 2.0;
        assert!((tuning_loss(&p, 0.7, 1.5).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn center_permutation_invariance() {
        let p = linear_problem();
        let mut q = p.clone();
        let n = q.centers.nrows();
        let perm: Vec<usize> = (0..n).rev().collect();
        q.centers = DMatrix::from_fn(n, 2, |i, j| p.centers[(perm[i], j)]);
        let a = tuning_loss(&p, 0.8, 2.0).unwrap();
        let b = tuning_loss(&q, 0.8, 2.0).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} {b}");
    }

    #[test]
    fn quadratic_harness() {
        let (a, b) = (0.5f64, -0.4f64);
        let f = |s: f64, nu: f64| (s.ln() - a).powi(2) + (nu.ln() - b).powi(2);
        let bounds = ParamBox { s: (1e-3, 1e2), nu: (1e-2, 8.0) };
        let res = adam_minimize(f, (1.0, 1.0), &bounds, &AdamConfig::default(), |_, _| None).unwrap();
        assert!((res.best_s.ln() - a).abs() < 1e-3, "{}", res.best_s.ln());
        assert!((res.best_nu.ln() - b).abs() < 1e-3, "{}", res.best_nu.ln());
        assert_eq!(res.history.len(), 500);
        assert!(res.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
    }

    #[test]
    fn rejects_zero_epochs_and_bad_start() {
        let cfg = AdamConfig { epochs: 0, ..AdamConfig::default() };
        assert!(adam_minimize(|_, _| 1.0, (1.0, 1.0), &ParamBox::default(), &cfg, |_, _| None).is_err());
        let res = adam_minimize(|_, _| f64::NAN, (1.0, 1.0), &ParamBox::default(), &AdamConfig::default(), |_, _| None);
        assert!(matches!(res, Err(Error::AllEvaluationsFailed)));
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        // ties: ranks (1.5, 1.5, 3) against (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn barycentre() {
        let s = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 6.0]);
        let out = barycentre_shift(&s, &[1.0, 3.0]).unwrap();
        // centre = (2.5, 5.0)
        assert_eq!(out, DMatrix::from_row_slice(1, 4, &[-1.5, -3.0, 0.5, 1.0]));
        assert!(barycentre_shift(&s, &[1.0, 1.0, 1.0]).is_err());
    }
}
