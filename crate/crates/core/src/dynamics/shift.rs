use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::galerkin::{BasisDescriptor, GalerkinSystem, Space};

/// Bilateral shift `K g_j = g_{j-1}` on an orthonormal family `{g_j}` (plus the
/// constant function), restricted exactly to `span{1, g_{-N}, ..., g_N}`.
///
/// Coefficient index 0 is the constant; index `1 + N + j` is `g_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LebesgueShift {
    pub n: usize,
    pub k: usize,
}

/// Distinguished observable `g_{k-N-1}`, whose image leaves the subspace at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftObservable {
    pub index: usize,
    pub coeffs: DVector<f64>,
}

impl LebesgueShift {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("shift system needs N >= 1".into()));
        }
        if k == 0 || k > 2 * n + 1 {
            return Err(Error::InvalidArgument(format!("shift horizon k={k} must lie in 1..={}", 2 * n + 1)));
        }
        Ok(Self { n, k })
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 2
    }

    fn index_of(&self, j: i64) -> Option<usize> {
        let n = self.n as i64;
        (-n..=n).contains(&j).then(|| (1 + n + j) as usize)
    }

    /// Exact Galerkin matrices: `G = I`, `L = I`, `A = K` the truncated shift.
    pub fn system(&self) -> GalerkinSystem {
        let dim = self.dim();
        let n = self.n as i64;
        let mut a = DMatrix::zeros(dim, dim);
        a[(0, 0)] = 1.0;
        for j in (-n + 1)..=n {
            let col = self.index_of(j).expect("in range");
            let row = self.index_of(j - 1).expect("in range");
            a[(row, col)] = 1.0;
        }
        GalerkinSystem {
            g: DMatrix::identity(dim, dim),
            k: a.clone(),
            a,
            l: DMatrix::identity(dim, dim),
            space: Space::L2,
            descriptor: BasisDescriptor::LebesgueShift { n: self.n, k: self.k },
            basis: None,
            numerical_rank: dim,
        }
    }

    pub fn observable(&self) -> ShiftObservable {
        let index = self.k;
        let mut coeffs = DVector::zeros(self.dim());
        coeffs[index] = 1.0;
        ShiftObservable { index, coeffs }
    }

    /// `|K^m g - Psi K^m c|` computed on the infinite lattice.
    pub fn exact_error(&self, coeffs: &DVector<f64>, m: usize) -> Result<f64> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch { context: "shift coefficients", expected: self.dim(), found: coeffs.len() });
        }
        let n = self.n as i64;
        let mut sq = 0.0;
        for j in -n..=n {
            let c = coeffs[self.index_of(j).expect("in range")];
            // the image g_{j-m} is orthogonal to everything the truncated model retains
            if j - (m as i64) < -n {
                sq += c * c;
            }
        }
        Ok(sq.sqrt())
    }
}

/// Exact shift system and the index of its distinguished observable.
pub fn lebesgue_shift_system(n: usize, k: usize) -> Result<(GalerkinSystem, usize)> {
    let shift = LebesgueShift::new(n, k)?;
    Ok((shift.system(), shift.observable().index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_plus_constant() {
        let (sys, idx) = lebesgue_shift_system(1, 2).unwrap();
        assert_eq!(sys.dim(), 4);
        assert_eq!(idx, 2);
        let want = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 0.0,
        ]);
        assert_eq!(sys.a, want);
        assert!(sys.a.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ata_is_zero_one_diagonal() {
        let (sys, _) = lebesgue_shift_system(5, 3).unwrap();
        let ata = sys.a.transpose() * &sys.a;
        for i in 0..ata.nrows() {
            for j in 0..ata.ncols() {
                let v = ata[(i, j)];
                if i == j {
                    assert!(v == 0.0 || v == 1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_large_k() {
        assert!(matches!(lebesgue_shift_system(2, 6), Err(Error::InvalidArgument(_))));
        assert!(lebesgue_shift_system(2, 5).is_ok());
    }

    #[test]
    fn exact_error_steps_up_at_k() {
        let s = LebesgueShift::new(100, 4).unwrap();
        let g = s.observable().coeffs;
        for m in 0..4 {
            assert_eq!(s.exact_error(&g, m).unwrap(), 0.0);
        }
        for m in 4..30 {
            assert_eq!(s.exact_error(&g, m).unwrap(), 1.0);
        }
    }
}
