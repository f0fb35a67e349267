//! Python bindings: benchmark data, the IB-UQ regressor, the deep-ensemble
//! baseline, and the data-generation utilities.
//!
//! Arrays cross the boundary as nested lists. A flat list is read as a
//! single column.

use std::path::PathBuf;

use ibuq::baselines::{ensemble_predict, train_deep_ensemble, DeepEnsemble, EnsembleConfig};
use ibuq::datagen::{
    discontinuous_fn, grf_sample, lof_scores, sample_discontinuous, solve_diffusion_reaction,
    GrfConfig, PdeConfig, RegressionData,
};
use ibuq::netcore::SeededRng;
use ibuq::regression::{train_regression, RegressionConfig, RegressionModel};
use ibuq::Error;
use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    let mut root = &e;
    while let Error::Context { source, .. } = root {
        root = source;
    }
    let msg = e.to_string();
    match root {
        Error::Shape { .. } | Error::InvalidParameter(_) | Error::EmptyData(_) => {
            PyValueError::new_err(msg)
        }
        Error::Io { .. } | Error::Format { .. } => PyOSError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

#[derive(FromPyObject)]
enum Matrix {
    Rows(Vec<Vec<f64>>),
    Column(Vec<f64>),
}

impl Matrix {
    fn into_array(self) -> PyResult<Array2<f64>> {
        match self {
            Matrix::Column(v) => Ok(Array1::from(v).insert_axis(ndarray::Axis(1))),
            Matrix::Rows(rows) => rows_to_array(rows),
        }
    }
}

fn rows_to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().position(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!(
            "row {r} has {} entries, expected {cols}",
            rows[r].len()
        )));
    }
    let n = rows.len();
    Ok(
        Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
            .expect("rectangular"),
    )
}

type Rows = Vec<Vec<f64>>;

fn to_rows(a: &Array2<f64>) -> Rows {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// The piecewise benchmark function.
#[pyfunction]
#[pyo3(name = "discontinuous_fn")]
fn py_discontinuous_fn(x: f64) -> f64 {
    discontinuous_fn(x)
}

/// `n` noisy benchmark samples split evenly over the two training intervals.
#[pyfunction]
#[pyo3(name = "sample_discontinuous", signature = (n, noise=0.1, seed=0))]
fn py_sample_discontinuous(n: usize, noise: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = sample_discontinuous(n, noise, &mut SeededRng::new(seed)).map_err(to_py)?;
    Ok((d.x.column(0).to_vec(), d.y.column(0).to_vec()))
}

/// One GRF draw on `m` equispaced points of `[0, 1]`.
#[pyfunction]
#[pyo3(name = "grf_sample", signature = (length, m=100, seed=0))]
fn py_grf_sample(length: f64, m: usize, seed: u64) -> PyResult<Vec<f64>> {
    grf_sample(
        &GrfConfig::unit_interval(length, m),
        &mut SeededRng::new(seed),
    )
    .map_err(to_py)
}

/// Solution `s[i][j]` at `x_i`, `t_j` for source term `u` on the spatial grid.
#[pyfunction]
#[pyo3(name = "solve_diffusion_reaction", signature = (u, nt=100, diffusion=0.01, reaction=0.5))]
fn py_solve(u: Vec<f64>, nt: usize, diffusion: f64, reaction: f64) -> PyResult<Vec<Vec<f64>>> {
    let cfg = PdeConfig {
        nx: u.len(),
        nt,
        diffusion,
        reaction,
        ..PdeConfig::default()
    };
    Ok(to_rows(&solve_diffusion_reaction(&u, &cfg).map_err(to_py)?))
}

/// Negated local outlier factor of every point.
#[pyfunction]
#[pyo3(name = "lof_scores", signature = (points, k=20))]
fn py_lof(points: Matrix, k: usize) -> PyResult<Vec<f64>> {
    Ok(lof_scores(&points.into_array()?, k)
        .map_err(to_py)?
        .to_vec())
}

/// Relative L2 error.
#[pyfunction]
#[pyo3(name = "rl2e")]
fn py_rl2e(pred: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    ibuq::regression::rl2e(Array1::from(pred).view(), Array1::from(target).view()).map_err(to_py)
}

fn regression_data(x: Matrix, y: Matrix) -> PyResult<RegressionData> {
    RegressionData::new(x.into_array()?, y.into_array()?).map_err(to_py)
}

/// IB-UQ regressor. Build one with `IbuqRegressor.fit` or `IbuqRegressor.load`.
#[pyclass(name = "IbuqRegressor", module = "ibuq", unsendable)]
struct PyRegressor {
    model: RegressionModel,
    final_terms: Option<(f64, f64, f64)>,
}

#[pymethods]
impl PyRegressor {
    /// Trains on `x` (n × d) and `y` (n × k). Unset settings keep the
    /// library defaults.
    #[staticmethod]
    #[pyo3(signature = (x, y, seed=0, beta=None, iterations=None, latent_dim=None, hidden=None, lr=None, mixup=None))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        x: Matrix,
        y: Matrix,
        seed: u64,
        beta: Option<f64>,
        iterations: Option<usize>,
        latent_dim: Option<usize>,
        hidden: Option<Vec<usize>>,
        lr: Option<f64>,
        mixup: Option<bool>,
    ) -> PyResult<Self> {
        let data = regression_data(x, y)?;
        let mut cfg = RegressionConfig::new(data.x.ncols(), data.y.ncols(), seed);
        if let Some(d) = latent_dim {
            cfg.ib = cfg.ib.with_latent_dim(d);
        }
        if let Some(b) = beta {
            cfg.ib.beta = b;
        }
        if let Some(h) = hidden {
            cfg.ib.hidden = h;
        }
        if let Some(n) = iterations {
            cfg.iterations = n;
        }
        if let Some(lr) = lr {
            cfg.schedule.base_lr = lr;
        }
        if let Some(m) = mixup {
            cfg.mixup.enabled = m;
        }
        cfg.validate().map_err(to_py)?;
        let trained = py.detach(|| train_regression(&data, &cfg)).map_err(to_py)?;
        let t = trained.final_terms;
        Ok(Self {
            model: trained.model,
            final_terms: Some((t.objective, t.iyz, t.ixz)),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            model: RegressionModel::load(&path).map_err(to_py)?,
            final_terms: None,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.save(&path).map_err(to_py)
    }

    /// `{"mean", "std", "gate"}`, each with one row per input.
    #[pyo3(signature = (x, samples=64, seed=0))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        x: Matrix,
        samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let p = self
            .model
            .predict(&x.into_array()?, samples, &mut SeededRng::new(seed))
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("mean", to_rows(&p.mean))?;
        d.set_item("std", to_rows(&p.std))?;
        d.set_item("gate", p.mean_gate().to_vec())?;
        Ok(d)
    }

    /// `(objective, I(Y;Z), I(X;Z))` after training; `None` for a loaded model.
    #[getter]
    fn final_terms(&self) -> Option<(f64, f64, f64)> {
        self.final_terms
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.model.config.ib.beta
    }
}

/// Deep-ensemble baseline.
#[pyclass(name = "DeepEnsemble", module = "ibuq", unsendable)]
struct PyEnsemble {
    inner: DeepEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[staticmethod]
    #[pyo3(signature = (x, y, seed=0, members=None, steps=None))]
    fn fit(
        py: Python<'_>,
        x: Matrix,
        y: Matrix,
        seed: u64,
        members: Option<usize>,
        steps: Option<usize>,
    ) -> PyResult<Self> {
        let data = regression_data(x, y)?;
        let defaults = EnsembleConfig::default();
        let cfg = EnsembleConfig {
            seed,
            members: members.unwrap_or(defaults.members),
            train_steps: steps.unwrap_or(defaults.train_steps),
            ..defaults
        };
        let inner = py
            .detach(|| train_deep_ensemble(&data, &cfg))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: DeepEnsemble::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// `(mean, std)` with one row per input.
    fn predict(&self, x: Matrix) -> PyResult<(Rows, Rows)> {
        let (mean, std) = ensemble_predict(&self.inner, &x.into_array()?).map_err(to_py)?;
        Ok((to_rows(&mean), to_rows(&std)))
    }

    #[getter]
    fn members(&self) -> usize {
        self.inner.members.len()
    }
}

#[pymodule]
#[pyo3(name = "ibuq")]
fn ibuq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(py_discontinuous_fn, m)?)?;
    m.add_function(wrap_pyfunction!(py_sample_discontinuous, m)?)?;
    m.add_function(wrap_pyfunction!(py_grf_sample, m)?)?;
    m.add_function(wrap_pyfunction!(py_solve, m)?)?;
    m.add_function(wrap_pyfunction!(py_lof, m)?)?;
    m.add_function(wrap_pyfunction!(py_rl2e, m)?)?;
    m.add_class::<PyRegressor>()?;
    m.add_class::<PyEnsemble>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_are_rejected() {
        assert_eq!(
            rows_to_array(vec![vec![1.0, 2.0], vec![3.0, 4.0]])
                .unwrap()
                .dim(),
            (2, 2)
        );
        assert!(rows_to_array(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
        let a = Matrix::Column(vec![1.0, 2.0, 3.0]).into_array().unwrap();
        assert_eq!(a.dim(), (3, 1));
        assert_eq!(to_rows(&a), vec![vec![1.0], vec![2.0], vec![3.0]]);
    }
}
