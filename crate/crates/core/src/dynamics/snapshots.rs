use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RandomIid,
    RandomTrajectories,
    ErgodicTrajectory,
    Quadrature,
    Ingested,
}

/// Paired samples `y = F(x)` with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub provenance: Provenance,
}

impl SnapshotSet {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, weights: DVector<f64>, provenance: Provenance) -> Result<Self> {
        let s = Self { x, y, weights, provenance };
        s.validate()?;
        Ok(s)
    }

    /// Uniform weights `1/M`.
    pub fn uniform(x: DMatrix<f64>, y: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        let m = x.nrows();
        let w = DVector::from_element(m, 1.0 / m.max(1) as f64);
        Self::new(x, y, w, provenance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::InsufficientData("snapshot set is empty".into()));
        }
        if self.x.shape() != self.y.shape() {
            return Err(Error::DimensionMismatch {
                context: "snapshot images",
                expected: self.x.ncols(),
                found: self.y.ncols(),
            });
        }
        if self.weights.len() != self.x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "quadrature weights",
                expected: self.x.nrows(),
                found: self.weights.len(),
            });
        }
        if let Some(i) = self.weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {} but weights must be positive",
                self.weights[i]
            )));
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot data".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// First `m` pairs, with weights rescaled to preserve the total mass.
    pub fn head(&self, m: usize) -> Result<Self> {
        let m = m.min(self.len());
        let x = self.x.rows(0, m).into_owned();
        let y = self.y.rows(0, m).into_owned();
        let w = self.weights.rows(0, m).into_owned();
        let total: f64 = w.sum();
        let full: f64 = self.weights.sum();
        Self::new(x, y, w * (full / total), self.provenance)
    }
}
