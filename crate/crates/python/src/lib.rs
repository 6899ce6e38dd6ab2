use std::collections::HashSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use psc_core::classifier::{self, Hyperparams};
use psc_core::cv::{cv_run as core_cv_run, ExperimentConfig};
use psc_core::dataset::{self, LabeledMatrix};
use psc_core::{metrics, scatter, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("row {bad} has {} values, expected {d}", rows[bad].len())));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn to_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Samples (rows) with ±1 labels.
#[pyclass(name = "Dataset", module = "psc", frozen)]
struct PyDataset {
    inner: LabeledMatrix,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<i8>) -> PyResult<Self> {
        let inner = LabeledMatrix::new(to_matrix(&rows)?, labels).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn labels(&self) -> Vec<i8> {
        self.inner.labels().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.samples())
    }

    fn select(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.inner.n()) {
            return Err(PyValueError::new_err(format!("index {i} out of range")));
        }
        Ok(Self {
            inner: self.inner.select(&indices).map_err(py_err)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        dataset::write_csv(&self.inner, &path).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let pos = self.inner.labels().iter().filter(|&&y| y == 1).count();
        format!("Dataset(n={}, d={}, n_pos={pos})", self.inner.n(), self.inner.d())
    }
}

#[pyclass(name = "LinearModel", module = "psc", frozen)]
struct PyLinearModel {
    inner: classifier::LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[getter]
    fn method(&self) -> String {
        self.inner.method_tag.to_string()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.clone()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn n1(&self) -> usize {
        self.inner.n1
    }

    #[getter]
    fn n2(&self) -> usize {
        self.inner.n2
    }

    #[getter]
    fn gamma(&self) -> Option<f64> {
        self.inner.gamma
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.inner.lambda
    }

    #[getter]
    fn c0(&self) -> Option<f64> {
        self.inner.c0
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn kkt_residual(&self) -> Option<f64> {
        self.inner.kkt_residual
    }

    fn decision(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.decision(&x).map_err(py_err)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<i8> {
        self.inner.predict(&x).map_err(py_err)
    }

    fn decisions(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.decisions(&to_matrix(&rows)?).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: classifier::LinearModel::from_json(text).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("LinearModel(method={}, d={}, b={})", self.inner.method_tag, self.inner.d, self.inner.b)
    }
}

#[pyclass(name = "EvalReport", module = "psc", frozen)]
struct PyEvalReport {
    inner: metrics::EvalReport,
}

#[pymethods]
impl PyEvalReport {
    /// `(tp, fn, fp, tn)`.
    #[getter]
    fn confusion(&self) -> (u64, u64, u64, u64) {
        let c = &self.inner.confusion;
        (c.tp, c.fn_, c.fp, c.tn)
    }

    #[getter]
    fn ccr1(&self) -> f64 {
        self.inner.ccr1
    }

    #[getter]
    fn ccr2(&self) -> f64 {
        self.inner.ccr2
    }

    #[getter]
    fn total_ccr(&self) -> f64 {
        self.inner.total_ccr
    }

    #[getter]
    fn mwe(&self) -> f64 {
        self.inner.mwe
    }

    #[getter]
    fn bccr(&self) -> f64 {
        self.inner.bccr
    }

    #[getter]
    fn auc(&self) -> Option<f64> {
        self.inner.auc
    }

    #[getter]
    fn roc(&self) -> Option<Vec<(f64, f64)>> {
        self.inner.roc.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "EvalReport(ccr1={:.6}, ccr2={:.6}, bccr={:.6})",
            self.inner.ccr1, self.inner.ccr2, self.inner.bccr
        )
    }
}

#[pyfunction]
fn simulate_hdlss(d: usize, n_pos: usize, n_neg: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: dataset::simulate_hdlss(d, n_pos, n_neg, seed).map_err(py_err)?,
    })
}

#[pyfunction]
fn simulate_fig1(n_pos: usize, n_neg: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: dataset::simulate_fig1(n_pos, n_neg, seed).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (path, label_column = "label", positive = None))]
fn load_csv(path: PathBuf, label_column: &str, positive: Option<Vec<String>>) -> PyResult<PyDataset> {
    let positive: HashSet<String> = positive
        .unwrap_or_else(psc_core::cv::default_positive_labels)
        .into_iter()
        .collect();
    Ok(PyDataset {
        inner: dataset::load_csv(&path, label_column, &positive).map_err(py_err)?,
    })
}

#[pyfunction]
fn stratified_kfold(labels: Vec<i8>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(dataset::stratified_kfold(&labels, k, seed).map_err(py_err)?.assignments)
}

#[pyfunction]
#[pyo3(signature = (data, gamma = 0.5, c0 = 1.0, r_scale = 2.0, tol = 1e-6, max_iter = 10_000_000))]
fn fit_psc(data: &PyDataset, gamma: f64, c0: f64, r_scale: f64, tol: f64, max_iter: usize) -> PyResult<PyLinearModel> {
    let hp = Hyperparams {
        gamma,
        c0,
        r_scale,
        tol,
        max_iter,
    };
    Ok(PyLinearModel {
        inner: classifier::fit_psc(&data.inner, &hp).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (data, c0 = 1.0, tol = 1e-6, max_iter = 10_000_000))]
fn fit_cssvm(data: &PyDataset, c0: f64, tol: f64, max_iter: usize) -> PyResult<PyLinearModel> {
    Ok(PyLinearModel {
        inner: classifier::fit_cssvm(&data.inner, c0, tol, max_iter).map_err(py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (data, r_scale = 2.0))]
fn fit_rmdd(data: &PyDataset, r_scale: f64) -> PyResult<PyLinearModel> {
    Ok(PyLinearModel {
        inner: classifier::fit_rmdd(&data.inner, r_scale).map_err(py_err)?,
    })
}

#[pyfunction]
fn bayes_oracle(mu_pos: Vec<f64>, mu_neg: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<PyLinearModel> {
    let model = classifier::bayes_oracle(
        &DVector::from_vec(mu_pos),
        &DVector::from_vec(mu_neg),
        &to_matrix(&sigma)?,
    )
    .map_err(py_err)?;
    Ok(PyLinearModel { inner: model })
}

#[pyfunction]
fn evaluate(labels: Vec<i8>, decisions: Vec<f64>) -> PyResult<PyEvalReport> {
    Ok(PyEvalReport {
        inner: metrics::evaluate(&labels, &decisions).map_err(py_err)?,
    })
}

#[pyfunction]
fn bccr(ccr1: f64, ccr2: f64) -> PyResult<f64> {
    metrics::bccr(ccr1, ccr2).map_err(py_err)
}

#[pyfunction]
fn mwe(ccr1: f64, ccr2: f64) -> PyResult<f64> {
    metrics::mwe(ccr1, ccr2).map_err(py_err)
}

#[pyfunction]
fn beta(n1: usize, n2: usize) -> f64 {
    scatter::beta(n1, n2)
}

/// Runs nested cross-validation from a JSON config and returns the summary
/// as JSON text.
#[pyfunction]
fn cv_run(config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let out = core_cv_run(&cfg).map_err(py_err)?;
    out.summary.to_json().map_err(py_err)
}

#[pymodule]
fn psc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_function(wrap_pyfunction!(simulate_hdlss, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_fig1, m)?)?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_kfold, m)?)?;
    m.add_function(wrap_pyfunction!(fit_psc, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cssvm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rmdd, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bccr, m)?)?;
    m.add_function(wrap_pyfunction!(mwe, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(cv_run, m)?)?;
    Ok(())
}
