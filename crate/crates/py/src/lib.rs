//! Python bindings: datasets, synthetic designs, the estimation pipeline
//! and fold partitions, exposed as a small extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use setid_dml::config::{RunConfig, Variant};
use setid_dml::crossfit::LearnerSet;
use setid_dml::dataset as core_dataset;
use setid_dml::dataset::{DgpSpec, DgpTruth, ModelKind};
use setid_dml::error::Error;
use setid_dml::sim;

fn to_py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_model(name: &str) -> PyResult<ModelKind> {
    match name {
        "plp" => Ok(ModelKind::Plp),
        "apd" => Ok(ModelKind::Apd),
        "lee" => Ok(ModelKind::Lee),
        other => Err(PyValueError::new_err(format!("unknown model '{other}'"))),
    }
}

/// Pass a serializable document to Python as native objects.
fn to_py_doc<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value)
        .map_err(|e| PyValueError::new_err(format!("serialize: {e}")))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

/// An observation table. Construct it from a CSV file in the reserved
/// column layout or from a synthetic design via [`generate`].
#[pyclass(name = "Dataset")]
pub struct Dataset {
    inner: core_dataset::Dataset,
    truth: Option<DgpTruth>,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let inner =
            core_dataset::Dataset::read_csv_path(std::path::Path::new(path)).map_err(to_py_err)?;
        Ok(Dataset { inner, truth: None })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv_path(std::path::Path::new(path)).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d_dim(&self) -> usize {
        self.inner.d_dim()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Whether the dataset carries the generating process's exact
    /// nuisances (true only for generated data).
    #[getter]
    fn has_truth(&self) -> bool {
        self.truth.is_some()
    }

    fn validate_for(&self, model: &str) -> PyResult<()> {
        self.inner.validate_for(parse_model(model)?).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d_dim={}, p={})", self.inner.n(), self.inner.d_dim(), self.inner.p())
    }
}

/// Draw a synthetic dataset from one of the three designs.
#[pyfunction]
#[pyo3(signature = (model, n, p, sparsity, beta0, interval_width, noise_sd, residual_sd, seed))]
#[allow(clippy::too_many_arguments)]
fn generate(
    model: &str,
    n: usize,
    p: usize,
    sparsity: usize,
    beta0: Vec<f64>,
    interval_width: f64,
    noise_sd: f64,
    residual_sd: f64,
    seed: u64,
) -> PyResult<Dataset> {
    let spec = DgpSpec {
        model: parse_model(model)?,
        n,
        p,
        sparsity,
        beta0,
        interval_width,
        noise_sd,
        residual_sd,
        seed,
    };
    let (data, truth) = core_dataset::generate(&spec).map_err(to_py_err)?;
    Ok(Dataset { inner: data, truth: Some(truth) })
}

/// Uniformly random K-fold assignment (1-based fold indices).
#[pyfunction]
fn kfold_partition(n: usize, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(core_dataset::kfold_partition(n, k, seed).map_err(to_py_err)?.assignments)
}

/// Full estimation pipeline: cross-fit the nuisances, estimate bounds and
/// the support function, and bootstrap the confidence region. Returns a
/// dict with "results" and "region" documents.
#[pyfunction]
#[pyo3(signature = (dataset, model, k=2, b=300, alpha=0.05, grid_size=64, seed=0, use_oracle=false))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    dataset: &Dataset,
    model: &str,
    k: usize,
    b: usize,
    alpha: f64,
    grid_size: usize,
    seed: u64,
    use_oracle: bool,
) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig {
        model: parse_model(model)?,
        dgp: None,
        data_path: None,
        learners: if use_oracle { LearnerSet::oracle() } else { LearnerSet::default() },
        k,
        grid_size,
        b,
        alpha,
        m: 1,
        estimator_variants: vec![Variant::OrthogonalCrossfit],
        seed,
        output_dir: String::new(),
    };
    if use_oracle && dataset.truth.is_none() {
        return Err(PyValueError::new_err("oracle learners need a generated dataset"));
    }
    let out =
        sim::run_estimate(&cfg, &dataset.inner, dataset.truth.as_ref()).map_err(to_py_err)?;
    let doc = serde_json::json!({
        "results": serde_json::to_value(&out.results).map_err(|e| PyValueError::new_err(e.to_string()))?,
        "region": serde_json::to_value(&out.region).map_err(|e| PyValueError::new_err(e.to_string()))?,
    });
    to_py_doc(py, &doc)
}

/// Monte Carlo simulation study on a synthetic design; returns the summary
/// document (per-variant bias, standard deviation and RMSE).
#[pyfunction]
#[pyo3(signature = (model, n, p, sparsity, beta0, interval_width, noise_sd, residual_sd, m, variants, seed=0, k=2))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &str,
    n: usize,
    p: usize,
    sparsity: usize,
    beta0: Vec<f64>,
    interval_width: f64,
    noise_sd: f64,
    residual_sd: f64,
    m: usize,
    variants: Vec<String>,
    seed: u64,
    k: usize,
) -> PyResult<Py<PyAny>> {
    let model = parse_model(model)?;
    let parsed: Vec<Variant> = variants
        .iter()
        .map(|v| match v.as_str() {
            "orthogonal_crossfit" => Ok(Variant::OrthogonalCrossfit),
            "orthogonal_nosplit" => Ok(Variant::OrthogonalNosplit),
            "naive" => Ok(Variant::Naive),
            "oracle" => Ok(Variant::Oracle),
            other => Err(PyValueError::new_err(format!("unknown variant '{other}'"))),
        })
        .collect::<PyResult<_>>()?;
    let cfg = RunConfig {
        model,
        dgp: Some(DgpSpec {
            model,
            n,
            p,
            sparsity,
            beta0,
            interval_width,
            noise_sd,
            residual_sd,
            seed,
        }),
        data_path: None,
        learners: LearnerSet::default(),
        k,
        grid_size: 16,
        b: 100,
        alpha: 0.05,
        m,
        estimator_variants: parsed,
        seed,
        output_dir: String::new(),
    };
    let out = sim::run_simulation(&cfg).map_err(to_py_err)?;
    to_py_doc(py, &out.summary)
}

/// Inverse standard normal CDF.
#[pyfunction]
fn normal_quantile(p: f64) -> f64 {
    setid_dml::stats::normal_quantile(p)
}

#[pymodule]
fn setid_dml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_partition, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    Ok(())
}
