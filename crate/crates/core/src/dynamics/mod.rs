//! Benchmark dynamical systems, their flow maps and snapshot generation.

mod shift;
mod snapshots;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, Tolerance};

pub use shift::{lebesgue_shift_system, LebesgueShift, ShiftObservable};
pub use snapshots::{Provenance, SnapshotSet};

pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Unforced Duffing damping coefficient.
pub const DUFFING_DAMPING: f64 = 0.05;
/// Duffing sampling interval used by the benchmark.
pub const DUFFING_DT: f64 = 0.25;
pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;
/// Lorenz sampling interval used by the benchmark.
pub const LORENZ_DT: f64 = 0.1;
/// Transient discarded before recording an ergodic trajectory.
pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Clone)]
pub enum SystemKind {
    /// `u'' + 0.05 u' - u + u^3 = 0` with state `(u, u')`.
    DuffingUnforced,
    Lorenz63,
    /// Discrete map `x -> M x`.
    LinearMap(DMatrix<f64>),
    CustomFlow { rhs: VectorField, dim: usize },
}

impl fmt::Debug for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::DuffingUnforced => write!(f, "DuffingUnforced"),
            SystemKind::Lorenz63 => write!(f, "Lorenz63"),
            SystemKind::LinearMap(m) => write!(f, "LinearMap({}x{})", m.nrows(), m.ncols()),
            SystemKind::CustomFlow { dim, .. } => write!(f, "CustomFlow(dim={dim})"),
        }
    }
}

/// A discrete-time map `F`, either given directly or as the time-`dt` flow of an ODE.
#[derive(Debug, Clone)]
pub struct DynamicalSystem {
    pub kind: SystemKind,
    pub flow_time: f64,
    pub tolerance: Tolerance,
}

fn duffing_rhs(x: &[f64], dx: &mut [f64]) {
    dx[0] = x[1];
    dx[1] = -DUFFING_DAMPING * x[1] + x[0] - x[0] * x[0] * x[0];
}

fn lorenz_rhs(x: &[f64], dx: &mut [f64]) {
    dx[0] = LORENZ_SIGMA * (x[1] - x[0]);
    dx[1] = x[0] * (LORENZ_RHO - x[2]) - x[1];
    dx[2] = x[0] * x[1] - LORENZ_BETA * x[2];
}

impl DynamicalSystem {
    pub fn duffing() -> Self {
        Self::continuous(SystemKind::DuffingUnforced, DUFFING_DT)
    }

    pub fn lorenz() -> Self {
        Self::continuous(SystemKind::Lorenz63, LORENZ_DT)
    }

    pub fn linear(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidArgument("linear map must be a nonempty square matrix".into()));
        }
        Ok(Self { kind: SystemKind::LinearMap(m), flow_time: 1.0, tolerance: Tolerance::default() })
    }

    pub fn custom(rhs: VectorField, dim: usize, flow_time: f64) -> Self {
        Self::continuous(SystemKind::CustomFlow { rhs, dim }, flow_time)
    }

    fn continuous(kind: SystemKind, flow_time: f64) -> Self {
        Self { kind, flow_time, tolerance: Tolerance::default() }
    }

    pub fn with_flow_time(mut self, dt: f64) -> Self {
        self.flow_time = dt;
        self
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SystemKind::DuffingUnforced => 2,
            SystemKind::Lorenz63 => 3,
            SystemKind::LinearMap(m) => m.nrows(),
            SystemKind::CustomFlow { dim, .. } => *dim,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, SystemKind::LinearMap(_))
    }

    /// One application of `F`.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "state", expected: self.dim(), found: x.len() });
        }
        let out = match &self.kind {
            SystemKind::LinearMap(m) => {
                let v = m * nalgebra::DVector::from_column_slice(x);
                v.as_slice().to_vec()
            }
            SystemKind::DuffingUnforced => ode::flow(&duffing_rhs, x, self.flow_time, self.tolerance)?,
            SystemKind::Lorenz63 => ode::flow(&lorenz_rhs, x, self.flow_time, self.tolerance)?,
            SystemKind::CustomFlow { rhs, .. } => {
                let f = |y: &[f64], dy: &mut [f64]| rhs(y, dy);
                ode::flow(&f, x, self.flow_time, self.tolerance)?
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow map produced a non-finite state".into()));
        }
        Ok(out)
    }

    /// Trajectory `x0, F(x0), ..., F^steps(x0)` as a `(steps+1) x d` matrix.
    pub fn integrate(&self, x0: &[f64], steps: usize) -> Result<DMatrix<f64>> {
        if self.is_continuous() && !(self.flow_time > 0.0) {
            return Err(Error::InvalidArgument("continuous systems need a positive flow time".into()));
        }
        let d = self.dim();
        if x0.len() != d {
            return Err(Error::DimensionMismatch { context: "initial state", expected: d, found: x0.len() });
        }
        let mut traj = DMatrix::zeros(steps + 1, d);
        let mut x = x0.to_vec();
        for k in 0..=steps {
            for (j, &v) in x.iter().enumerate() {
                traj[(k, j)] = v;
            }
            if k < steps {
                x = self.step(&x)?;
            }
        }
        Ok(traj)
    }
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self { lower: vec![lo; d], upper: vec![hi; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidArgument("box bounds need matching nonempty lower/upper".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("box bound {i} is not well ordered: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Bounding box of the rows of `points`.
    pub fn of_points(points: &DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InsufficientData("cannot bound an empty point set".into()));
        }
        let lower = points.column_iter().map(|c| c.min()).collect();
        let upper = points.column_iter().map(|c| c.max()).collect();
        Ok(Self { lower, upper })
    }

    /// `count` points drawn uniformly from the box.
    pub fn sample(&self, count: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        for m in 0..count {
            for j in 0..d {
                let u: f64 = rng.random();
                out[(m, j)] = self.lower[j] + (self.upper[j] - self.lower[j]) * u;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `count` i.i.d. uniform states in the box, each paired with its image.
    RandomBox { bounds: BoxBounds, count: usize, seed: u64 },
    /// `trajectories` uniform initial states, each followed for `length` steps;
    /// every consecutive pair is a snapshot.
    RandomTrajectories { bounds: BoxBounds, trajectories: usize, length: usize, seed: u64 },
    /// A single trajectory from `x0`, recorded after `burn_in` discarded steps.
    ErgodicTrajectory { x0: Vec<f64>, count: usize, burn_in: usize },
}

/// Samples snapshot pairs with uniform weights `1/M`.
pub fn generate_snapshots(system: &DynamicalSystem, sampling: &Sampling) -> Result<SnapshotSet> {
    let d = system.dim();
    match sampling {
        Sampling::RandomBox { bounds, count, seed } => {
            check_bounds(bounds, d)?;
            require_count(*count)?;
            let x = bounds.sample(*count, *seed);
            let mut y = DMatrix::zeros(*count, d);
            for m in 0..*count {
                let row: Vec<f64> = x.row(m).iter().copied().collect();
                let img = system.step(&row)?;
                for j in 0..d {
                    y[(m, j)] = img[j];
                }
            }
            SnapshotSet::uniform(x, y, Provenance::RandomIid)
        }
        Sampling::RandomTrajectories { bounds, trajectories, length, seed } => {
            check_bounds(bounds, d)?;
            require_count(trajectories * length)?;
            let starts = bounds.sample(*trajectories, *seed);
            let total = trajectories * length;
            let mut x = DMatrix::zeros(total, d);
            let mut y = DMatrix::zeros(total, d);
            for t in 0..*trajectories {
                let x0: Vec<f64> = starts.row(t).iter().copied().collect();
                let traj = system.integrate(&x0, *length)?;
                for k in 0..*length {
                    let m = t * length + k;
                    x.set_row(m, &traj.row(k));
                    y.set_row(m, &traj.row(k + 1));
                }
            }
            SnapshotSet::uniform(x, y, Provenance::RandomTrajectories)
        }
        Sampling::ErgodicTrajectory { x0, count, burn_in } => {
            require_count(*count)?;
            let mut start = x0.clone();
            for _ in 0..*burn_in {
                start = system.step(&start)?;
            }
            let traj = system.integrate(&start, *count)?;
            let x = traj.rows(0, *count).into_owned();
            let y = traj.rows(1, *count).into_owned();
            SnapshotSet::uniform(x, y, Provenance::ErgodicTrajectory)
        }
    }
}

fn check_bounds(bounds: &BoxBounds, d: usize) -> Result<()> {
    bounds.validate()?;
    if bounds.dim() != d {
        return Err(Error::DimensionMismatch { context: "sampling box", expected: d, found: bounds.dim() });
    }
    Ok(())
}

fn require_count(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("snapshot count must be at least 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::Tolerance;

    #[test]
    fn linear_map_recursion() {
        let sys = DynamicalSystem::linear(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let t = sys.integrate(&[1.0], 3).unwrap();
        assert_eq!(t.column(0).as_slice(), &[1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn linear_map_semigroup_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.3, -0.2, 0.7]);
        let sys = DynamicalSystem::linear(m).unwrap();
        let x0 = [0.3, -1.1];
        let direct = sys.integrate(&x0, 7).unwrap();
        let first = sys.integrate(&x0, 3).unwrap();
        let last: Vec<f64> = first.row(3).iter().copied().collect();
        let second = sys.integrate(&last, 4).unwrap();
        assert_eq!(direct.row(7), second.row(4));
    }

    #[test]
    fn duffing_origin_is_fixed() {
        let t = DynamicalSystem::duffing().integrate(&[0.0, 0.0], 10).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lorenz_step_matches_tighter_reference() {
        let sys = DynamicalSystem::lorenz();
        let x0 = [-5.9, -5.5, 24.6];
        let coarse = sys.integrate(&x0, 1).unwrap();
        let fine = sys
            .clone()
            .with_tolerance(Tolerance { abs: 1e-12, rel: 1e-12 })
            .integrate(&x0, 1)
            .unwrap();
        let diff = (coarse.row(1) - fine.row(1)).amax();
        assert!(diff < 1e-6, "diff {diff}");
        let finer = sys
            .with_tolerance(Tolerance { abs: 5e-13, rel: 5e-13 })
            .integrate(&x0, 1)
            .unwrap();
        assert!((fine.row(1) - finer.row(1)).amax() < 1e-9);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let sys = DynamicalSystem::lorenz();
        let a = sys.step(&[1.0, 2.0, 3.0]).unwrap();
        let b = sys.step(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_box_duffing() {
        let sampling = Sampling::RandomBox { bounds: BoxBounds::cube(2, -2.0, 2.0), count: 1000, seed: 7 };
        let s = generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.weights.iter().all(|&w| (w - 1e-3).abs() < 1e-18));
        assert!(s.x.iter().all(|v| (-2.0..=2.0).contains(v)));
        let again = generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn ergodic_pairs_are_consecutive() {
        let sampling = Sampling::ErgodicTrajectory { x0: vec![1.0, 1.0, 1.0], count: 5, burn_in: 10 };
        let s = generate_snapshots(&DynamicalSystem::lorenz(), &sampling).unwrap();
        assert_eq!(s.len(), 5);
        for m in 0..4 {
            assert_eq!(s.y.row(m), s.x.row(m + 1));
        }
    }

    #[test]
    fn trajectory_sampling_shape() {
        let sampling = Sampling::RandomTrajectories {
            bounds: BoxBounds::cube(2, -2.0, 2.0),
            trajectories: 3,
            length: 4,
            seed: 1,
        };
        let s = generate_snapshots(&DynamicalSystem::duffing(), &sampling).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.y.row(0), s.x.row(1));
        assert_ne!(s.y.row(3), s.x.row(4));
    }

    #[test]
    fn rejects_bad_box() {
        let sampling = Sampling::RandomBox { bounds: BoxBounds::cube(2, 1.0, -1.0), count: 3, seed: 0 };
        assert!(generate_snapshots(&DynamicalSystem::duffing(), &sampling).is_err());
    }
}
