//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use koopcert::certify::{kmd_error_bounds, kmd_error_bounds_full, initialization_error, GNorm, PfmdQuery, pfmd_pointwise_bounds, pfmd_predict};
use koopcert::dynamics::{generate_snapshots, BoxBounds, DynamicalSystem, LebesgueShift, Sampling, SnapshotSet};
use koopcert::galerkin::{build_edmd, build_kedmd, svd_truncate, BasisDescriptor, GalerkinSystem, Space};
use koopcert::geometry::{pad_truncate, principal_angles};
use koopcert::io::{load_galerkin, save_galerkin};
use koopcert::observables::{default_kernel_scale, Dictionary, KernelSpec};
use koopcert::surrogate::{expected_kmd_errors, GpSurrogate, SurrogateBasis};
use koopcert::ErrorKind;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: koopcert::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Numerical => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("{what} must be a nonempty list of equal-length rows")));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn snapshots(x: &[Vec<f64>], y: &[Vec<f64>]) -> PyResult<SnapshotSet> {
    SnapshotSet::uniform(matrix(x, "x")?, matrix(y, "y")?, koopcert::dynamics::Provenance::Ingested).map_err(py_err)
}

/// Samples `count` snapshot pairs of "duffing" or "lorenz"; returns `(x, y)`.
#[pyfunction]
#[pyo3(signature = (system, count, seed=0))]
fn simulate(system: &str, count: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (sys, sampling) = match system {
        "duffing" => (DynamicalSystem::duffing(), Sampling::RandomBox { bounds: BoxBounds::cube(2, -2.0, 2.0), count, seed }),
        "lorenz" => (
            DynamicalSystem::lorenz(),
            Sampling::ErgodicTrajectory { x0: vec![1.0; 3], count, burn_in: koopcert::dynamics::DEFAULT_BURN_IN },
        ),
        other => return Err(PyValueError::new_err(format!("unknown system {other:?}, expected duffing or lorenz"))),
    };
    let s = generate_snapshots(&sys, &sampling).map_err(py_err)?;
    Ok((rows(&s.x), rows(&s.y)))
}

#[pyfunction]
fn bessel_k(nu: f64, x: f64) -> PyResult<f64> {
    koopcert::special::bessel_k(nu, x).map_err(py_err)
}

/// A Galerkin approximation `G`, `A`, `L`, `K`.
#[pyclass(name = "GalerkinSystem", module = "koopcert")]
struct PySystem {
    inner: GalerkinSystem,
    data: Option<SnapshotSet>,
}

#[pymethods]
impl PySystem {
    /// EDMD with a tensor Chebyshev dictionary on `[lower, upper]^d`.
    #[staticmethod]
    #[pyo3(signature = (x, y, degree, lower, upper))]
    fn edmd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, degree: usize, lower: f64, upper: f64) -> PyResult<Self> {
        let s = snapshots(&x, &y)?;
        let dict = Dictionary::chebyshev(degree, BoxBounds::cube(s.dim(), lower, upper));
        dict.validate().map_err(py_err)?;
        let inner = build_edmd(&dict, &s).map_err(py_err)?;
        Ok(Self { inner, data: Some(s) })
    }

    /// Kernel EDMD with the Matérn kernel; `sigma` defaults to the data scale.
    #[staticmethod]
    #[pyo3(signature = (x, y, nu=2.0, sigma=None))]
    fn kedmd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, nu: f64, sigma: Option<f64>) -> PyResult<Self> {
        let s = snapshots(&x, &y)?;
        let sigma = match sigma {
            Some(v) => v,
            None => default_kernel_scale(&s).map_err(py_err)?,
        };
        let inner = build_kedmd(&KernelSpec::matern(sigma, nu), &s).map_err(py_err)?;
        Ok(Self { inner, data: Some(s) })
    }

    /// The shift system with `n` and distinguished index `k`; returns `(system, g)`.
    #[staticmethod]
    fn lebesgue_shift(n: usize, k: usize) -> PyResult<(Self, Vec<f64>)> {
        let shift = LebesgueShift::new(n, k).map_err(py_err)?;
        let g = shift.observable().coeffs.iter().copied().collect();
        Ok((Self { inner: shift.system(), data: None }, g))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_galerkin(&path).map_err(py_err)?, data: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_galerkin(&path, &self.inner).map(|_| ()).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn space(&self) -> &'static str {
        self.inner.space.name()
    }

    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.k)
    }

    #[getter]
    fn g(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.g)
    }

    /// Principal angles between the subspace and its image, ascending.
    fn principal_angles(&self) -> PyResult<Vec<f64>> {
        let n = self.inner.dim();
        let res = principal_angles(&self.inner, &DMatrix::identity(n, n), None).map_err(py_err)?;
        Ok(res.angles.iter().copied().collect())
    }

    fn pad(&self, r: usize) -> PyResult<Self> {
        let red = pad_truncate(&self.inner, None, r).map_err(py_err)?;
        Ok(Self { inner: red.to_system(&self.inner), data: self.data.clone() })
    }

    fn svd(&self, r: usize) -> PyResult<Self> {
        Ok(Self { inner: svd_truncate(&self.inner, r).map_err(py_err)?, data: self.data.clone() })
    }

    /// Least-squares coefficients and residual of the state coordinate `i` (0-based).
    fn fit_coordinate(&self, i: usize) -> PyResult<(Vec<f64>, f64)> {
        let s = self.data.as_ref().ok_or_else(|| PyValueError::new_err("system carries no snapshot data"))?;
        let BasisDescriptor::Dictionary { dictionary } = &self.inner.descriptor else {
            return Err(PyValueError::new_err("coordinate fits need a dictionary system"));
        };
        if i >= s.dim() {
            return Err(PyValueError::new_err(format!("state has {} coordinates", s.dim())));
        }
        let (c, e) = initialization_error(dictionary, s, &self.inner, &s.x.column(i).into_owned()).map_err(py_err)?;
        Ok((c.iter().copied().collect(), e))
    }

    /// Strict KMD bounds for coefficients `g` at steps `1..=horizon`.
    #[pyo3(signature = (g, horizon, full_order=false))]
    fn bounds(&self, g: Vec<f64>, horizon: usize, full_order: bool) -> PyResult<Vec<f64>> {
        let g = DVector::from_vec(g);
        let series = if full_order {
            kmd_error_bounds_full(&self.inner, &g, horizon)
        } else {
            kmd_error_bounds(&self.inner, &g, horizon)
        };
        Ok(series.map_err(py_err)?.values())
    }

    /// Expected KMD bounds from the default Gaussian surrogate, capped at the rank of `G`.
    #[pyo3(signature = (g, horizon, samples=100, seed=0))]
    fn expected_bounds(&self, g: Vec<f64>, horizon: usize, samples: usize, seed: u64) -> PyResult<Vec<f64>> {
        let sur = GpSurrogate {
            samples,
            seed,
            basis: SurrogateBasis::SvdOfG { rank: 200.min(self.inner.numerical_rank) },
            ..GpSurrogate::default()
        };
        Ok(expected_kmd_errors(&self.inner, &DVector::from_vec(g), horizon, &sur).map_err(py_err)?.values())
    }

    /// Forecast of coordinate `i` from `x0` on an RKHS system with pointwise bounds, steps `0..=horizon`.
    fn kernel_forecast(&self, x0: Vec<f64>, i: usize, horizon: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        if self.inner.space != Space::Rkhs {
            return Err(PyValueError::new_err("kernel forecasts need an RKHS system"));
        }
        let BasisDescriptor::Kernel { points, .. } = &self.inner.descriptor else {
            return Err(PyValueError::new_err("system carries no kernel data points"));
        };
        if i >= points.ncols() {
            return Err(PyValueError::new_err(format!("state has {} coordinates", points.ncols())));
        }
        let g = points.column(i).into_owned();
        let q = PfmdQuery::new(&self.inner, &x0, GNorm::Estimated(g.clone())).map_err(py_err)?;
        let pred = pfmd_predict(&self.inner, &q, &g, horizon).map_err(py_err)?;
        let (_, pointwise) = pfmd_pointwise_bounds(&self.inner, &q, horizon).map_err(py_err)?;
        Ok((pred, pointwise.values()))
    }
}

#[pymodule(name = "koopcert")]
fn koopcert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", koopcert::VERSION)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_k, m)?)?;
    m.add_class::<PySystem>()?;
    Ok(())
}
