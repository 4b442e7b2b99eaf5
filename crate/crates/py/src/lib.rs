//! Python bindings. Parameter tuples are plain dicts; values map to
//! `bool`, `int`, `float`, `str`, `list`, `dict` and `None`.

use pyo3::exceptions::{PyRuntimeError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};

use contrast_repair::bugspec::{load_bug_spec, BugSpec as CoreBugSpec};
use contrast_repair::harness::TestCase;
use contrast_repair::llm::Provider;
use contrast_repair::mutation::MutationConfig;
use contrast_repair::pairing::{build_pool, PairConfig};
use contrast_repair::prompting;
use contrast_repair::repair::{RepairBudget, RepairConfig, RepairSession, RepairStatus};
use contrast_repair::similarity;
use contrast_repair::values::{self, ParamTuple, TypedValue};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_value(obj: &Bound<'_, PyAny>) -> PyResult<TypedValue> {
    if obj.is_none() {
        Ok(TypedValue::Null)
    } else if let Ok(b) = obj.cast::<PyBool>() {
        Ok(TypedValue::Bool(b.is_true()))
    } else if obj.is_instance_of::<PyInt>() {
        Ok(TypedValue::Int(obj.extract()?))
    } else if obj.is_instance_of::<PyFloat>() {
        Ok(TypedValue::Float(obj.extract()?))
    } else if obj.is_instance_of::<PyString>() {
        Ok(TypedValue::Str(obj.extract()?))
    } else if let Ok(list) = obj.cast::<PyList>() {
        Ok(TypedValue::Array(list.iter().map(|v| to_value(&v)).collect::<PyResult<_>>()?))
    } else if let Ok(tuple) = obj.cast::<PyTuple>() {
        Ok(TypedValue::Array(tuple.iter().map(|v| to_value(&v)).collect::<PyResult<_>>()?))
    } else if let Ok(dict) = obj.cast::<PyDict>() {
        TypedValue::object(dict_entries(dict)?).map_err(value_err)
    } else {
        Err(PyTypeError::new_err(format!(
            "unsupported value type {}",
            obj.get_type().name()?
        )))
    }
}

fn dict_entries(dict: &Bound<'_, PyDict>) -> PyResult<Vec<(String, TypedValue)>> {
    dict.iter()
        .map(|(k, v)| Ok((k.extract::<String>()?, to_value(&v)?)))
        .collect()
}

fn to_params(dict: &Bound<'_, PyDict>) -> PyResult<ParamTuple> {
    ParamTuple::new(dict_entries(dict)?).map_err(value_err)
}

fn from_value(py: Python<'_>, value: &TypedValue) -> PyResult<Py<PyAny>> {
    Ok(match value {
        TypedValue::Null => py.None(),
        TypedValue::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        TypedValue::Int(i) => i.into_pyobject(py)?.into_any().unbind(),
        TypedValue::Float(x) => x.into_pyobject(py)?.into_any().unbind(),
        TypedValue::Char(c) => c.to_string().into_pyobject(py)?.into_any().unbind(),
        TypedValue::Str(s) => s.into_pyobject(py)?.into_any().unbind(),
        TypedValue::Array(items) => {
            let items = items.iter().map(|v| from_value(py, v)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        TypedValue::Object(fields) => from_fields(py, fields)?.into_any().unbind(),
    })
}

fn from_fields<'py>(py: Python<'py>, fields: &[(String, TypedValue)]) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    for (k, v) in fields {
        dict.set_item(k, from_value(py, v)?)?;
    }
    Ok(dict)
}

fn from_params<'py>(py: Python<'py>, params: &ParamTuple) -> PyResult<Bound<'py, PyDict>> {
    from_fields(py, params.entries())
}

/// Optimal-string-alignment distance between two strings.
#[pyfunction]
fn dl_distance(a: &str, b: &str) -> usize {
    similarity::dl_distance(a, b)
}

/// `1 - d / max(len)` over two strings.
#[pyfunction]
fn text_similarity(a: &str, b: &str) -> f64 {
    similarity::text_similarity(a, b).value()
}

/// Similarity of two parameter dicts.
#[pyfunction]
fn delta(failing: &Bound<'_, PyDict>, passing: &Bound<'_, PyDict>) -> PyResult<f64> {
    Ok(similarity::delta(&to_params(failing)?, &to_params(passing)?).value())
}

/// Text that similarity is measured on.
#[pyfunction]
fn sim_text(params: &Bound<'_, PyDict>) -> PyResult<String> {
    Ok(values::params_sim_text(&to_params(params)?))
}

/// Lossless typed JSON encoding of a parameter dict.
#[pyfunction]
fn encode(params: &Bound<'_, PyDict>) -> PyResult<String> {
    Ok(values::encode_params(&to_params(params)?))
}

#[pyfunction]
fn decode<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    from_params(py, &values::decode_params(text).map_err(value_err)?)
}

/// Parses `text` using `skeleton` for the expected types.
#[pyfunction]
fn parse_guided<'py>(py: Python<'py>, text: &str, skeleton: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyDict>> {
    let parsed = values::parse_params_guided(text, &to_params(skeleton)?).map_err(value_err)?;
    from_params(py, &parsed)
}

/// Distinct mutants of a failing input.
#[pyfunction]
#[pyo3(signature = (params, count = 1000, seed = 0))]
fn generate_candidates<'py>(
    py: Python<'py>,
    params: &Bound<'py, PyDict>,
    count: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = MutationConfig {
        candidate_count: count,
        rng_seed: seed,
        ..MutationConfig::default()
    };
    cfg.validate().map_err(value_err)?;
    let failing = TestCase::mutated("f", to_params(params)?);
    contrast_repair::mutation::generate_candidates(&failing, &cfg)
        .iter()
        .map(|c| from_params(py, &c.params))
        .collect()
}

/// `(failing index, passing index, similarity)` for every pair above
/// `theta`, best first.
#[pyfunction]
#[pyo3(signature = (failing, passing, theta = 0.5))]
fn pair_pool(
    failing: Vec<Bound<'_, PyDict>>,
    passing: Vec<Bound<'_, PyDict>>,
    theta: f64,
) -> PyResult<Vec<(usize, usize, f64)>> {
    let cases = |dicts: &[Bound<'_, PyDict>], tag: &str| -> PyResult<Vec<TestCase>> {
        dicts
            .iter()
            .enumerate()
            .map(|(i, d)| Ok(TestCase::mutated(format!("{tag}{i:08}"), to_params(d)?)))
            .collect()
    };
    let cfg = PairConfig { theta, k: 1 };
    cfg.validate().map_err(value_err)?;
    let pool = build_pool(&cases(&failing, "f")?, &cases(&passing, "p")?, &cfg);
    Ok(pool
        .pairs()
        .iter()
        .map(|p| (p.fail.id[1..].parse().unwrap(), p.pass.id[1..].parse().unwrap(), p.sim.value()))
        .collect())
}

/// The function source inside a model response.
#[pyfunction]
fn extract_patch(response: &str, buggy_name: &str) -> PyResult<String> {
    prompting::extract_patch(response, buggy_name).map_err(value_err)
}

#[pyclass(name = "BugSpec", frozen)]
struct PyBugSpec {
    inner: CoreBugSpec,
}

#[pymethods]
impl PyBugSpec {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyBugSpec {
            inner: load_bug_spec(path).map_err(value_err)?,
        })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn buggy_name(&self) -> &str {
        &self.inner.buggy_name
    }

    #[getter]
    fn buggy_source(&self) -> &str {
        &self.inner.buggy_source
    }

    #[getter]
    fn test_ids(&self) -> Vec<String> {
        self.inner.test_ids.clone()
    }

    fn __repr__(&self) -> String {
        format!("BugSpec(id={:?}, tests={})", self.inner.id, self.inner.test_ids.len())
    }
}

#[pyclass(frozen, get_all)]
struct RepairResult {
    /// "plausible" or "exhausted".
    status: String,
    patches: Vec<String>,
    query_count: u64,
    plausible_count: usize,
    wall_seconds: f64,
    /// Conversation log records as JSON strings.
    log: Vec<String>,
}

#[pymethods]
impl RepairResult {
    fn __repr__(&self) -> String {
        format!(
            "RepairResult(status={:?}, patches={}, query_count={})",
            self.status,
            self.patches.len(),
            self.query_count
        )
    }
}

/// Runs a repair session with a scripted model.
#[pyfunction]
#[pyo3(signature = (bug, script, m = 40, n = 3, k = 2, theta = 0.5, candidates = 1000, augment_budget = 40, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn repair(
    py: Python<'_>,
    bug: &PyBugSpec,
    script: &str,
    m: usize,
    n: usize,
    k: usize,
    theta: f64,
    candidates: usize,
    augment_budget: usize,
    seed: u64,
) -> PyResult<RepairResult> {
    let mut cfg = RepairConfig {
        budget: RepairBudget { m, n, augment_budget, k },
        theta,
        ..RepairConfig::default()
    };
    cfg.mutation.candidate_count = candidates;
    cfg.mutation.rng_seed = seed;
    cfg.validate().map_err(PyValueError::new_err)?;
    let provider = Provider::mock_from_script(script).map_err(value_err)?;
    let bug = &bug.inner;
    let run = py.detach(|| RepairSession::new(bug, &cfg, &provider).run());
    let (status, patches) = match run.result {
        Ok(RepairStatus::Plausible(p)) => ("plausible", p),
        Ok(RepairStatus::Exhausted) => ("exhausted", Vec::new()),
        Err(e) => return Err(PyRuntimeError::new_err(e.to_string())),
    };
    Ok(RepairResult {
        status: status.into(),
        patches,
        query_count: run.metrics.query_count,
        plausible_count: run.metrics.plausible_count,
        wall_seconds: run.metrics.wall_seconds,
        log: run
            .log
            .iter()
            .map(|r| serde_json::to_string(r).expect("log record serializes"))
            .collect(),
    })
}

#[pymodule]
#[pyo3(name = "contrast_repair")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dl_distance, m)?)?;
    m.add_function(wrap_pyfunction!(text_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(sim_text, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(parse_guided, m)?)?;
    m.add_function(wrap_pyfunction!(generate_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(pair_pool, m)?)?;
    m.add_function(wrap_pyfunction!(extract_patch, m)?)?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_class::<PyBugSpec>()?;
    m.add_class::<RepairResult>()?;
    Ok(())
}
