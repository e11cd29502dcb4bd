//! Python bindings: schemas, diffs, transformers, object files, project
//! migration and PER.

use std::collections::BTreeMap;
use std::path::PathBuf;

use escher::per::{parse_histories, render_decimal, report};
use escher::release::store;
use escher::runtime::InputMap;
use escher::{
    ClassSchema, ClassTransformation, ConverterRegistry, EvolutionHistory, ObjectGraph,
    ObjectTransformer, ObjectValue, Repository, RetrieveOptions,
};
use num_traits::ToPrimitive;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyTypeError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(escher_py, EscherError, PyException);

fn err(e: impl ToString) -> PyErr {
    EscherError::new_err(e.to_string())
}

fn value_to_py<'py>(py: Python<'py>, v: &ObjectValue) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        ObjectValue::Int(i) => i.into_pyobject(py)?.into_any(),
        ObjectValue::Real(r) => r.into_pyobject(py)?.into_any(),
        ObjectValue::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        ObjectValue::Str(s) => s.into_pyobject(py)?.into_any(),
        ObjectValue::Void => py.None().into_bound(py),
        ObjectValue::Ref(id) => {
            let d = PyDict::new(py);
            d.set_item("ref", id)?;
            d.into_any()
        }
    })
}

fn value_from_py(obj: &Bound<'_, PyAny>) -> PyResult<ObjectValue> {
    if obj.is_none() {
        return Ok(ObjectValue::Void);
    }
    if let Ok(b) = obj.cast::<pyo3::types::PyBool>() {
        return Ok(ObjectValue::Bool(b.is_true()));
    }
    if let Ok(i) = obj.extract::<i64>() {
        return Ok(ObjectValue::Int(i));
    }
    if let Ok(r) = obj.extract::<f64>() {
        return Ok(ObjectValue::Real(r));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(ObjectValue::Str(s));
    }
    Err(PyTypeError::new_err("expected None, bool, int, float or str"))
}

#[pyclass(name = "Schema", module = "escher_py", frozen)]
struct PySchema {
    inner: ClassSchema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        escher::parse_schema(text)
            .map(|inner| PySchema { inner })
            .map_err(err)
    }

    fn render(&self) -> String {
        escher::render_schema(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn version(&self) -> u32 {
        self.inner.version
    }

    /// `(name, type)` pairs in declaration order.
    #[getter]
    fn attributes(&self) -> Vec<(String, String)> {
        self.inner
            .attributes
            .iter()
            .map(|a| (a.name.clone(), a.ty.to_string()))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("<Schema {} version {}>", self.inner.name, self.inner.version)
    }
}

#[pyclass(name = "Transformation", module = "escher_py", frozen)]
struct PyTransformation {
    inner: ClassTransformation,
}

#[pymethods]
impl PyTransformation {
    #[getter]
    fn smos(&self) -> Vec<String> {
        self.inner.smos.iter().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.inner.notes.clone()
    }

    fn report(&self) -> String {
        self.inner.report()
    }
}

#[pyfunction]
fn diff(old: &PySchema, new: &PySchema) -> PyResult<PyTransformation> {
    escher::diff_schemas(&old.inner, &new.inner)
        .map(|inner| PyTransformation { inner })
        .map_err(err)
}

#[pyclass(name = "Transformer", module = "escher_py", frozen)]
struct PyTransformer {
    inner: ObjectTransformer,
}

#[pymethods]
impl PyTransformer {
    #[staticmethod]
    fn generate(old: &PySchema, new: &PySchema) -> PyResult<Self> {
        let t = escher::diff_schemas(&old.inner, &new.inner).map_err(err)?;
        Ok(PyTransformer {
            inner: escher::generate_transformer(&t, &ConverterRegistry::builtins()),
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        escher::parse_transformer(text, &ConverterRegistry::builtins())
            .map(|inner| PyTransformer { inner })
            .map_err(err)
    }

    fn render(&self) -> String {
        escher::render_transformer(&self.inner)
    }

    #[getter(from_version)]
    fn source_version(&self) -> u32 {
        self.inner.from_version
    }

    #[getter(to_version)]
    fn target_version(&self) -> u32 {
        self.inner.to_version
    }

    fn required_inputs(&self) -> Vec<String> {
        self.inner.required_inputs().into_iter().collect()
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings().map(str::to_string).collect()
    }
}

#[pyclass(name = "Objects", module = "escher_py", frozen)]
struct PyObjects {
    inner: ObjectGraph,
}

#[pymethods]
impl PyObjects {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        escher::deserialize(text)
            .map(|inner| PyObjects { inner })
            .map_err(err)
    }

    fn serialize(&self) -> String {
        escher::serialize(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    /// Records as dicts: `id`, `class`, `version` and `fields`
    /// (name to value; references appear as `{"ref": id}`).
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for r in &self.inner.records {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("class", &r.class_name)?;
            d.set_item("version", r.version)?;
            let fields = PyDict::new(py);
            for f in &r.fields {
                fields.set_item(&f.name, value_to_py(py, &f.value)?)?;
            }
            d.set_item("fields", fields)?;
            out.append(d)?;
        }
        Ok(out)
    }
}

#[pyclass(name = "Project", module = "escher_py", frozen)]
struct PyProject {
    repo: Repository,
}

#[pymethods]
impl PyProject {
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        let stored = store::load(&path, &ConverterRegistry::builtins()).map_err(err)?;
        Ok(PyProject { repo: stored.repo })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.repo.project_name
    }

    #[getter]
    fn releases(&self) -> Vec<u32> {
        self.repo.releases.iter().map(|r| r.number).collect()
    }

    /// Migrates `objects` to the versions in `targets` (class to version),
    /// defaulting to the latest release. `inputs` maps `"CLASS.attr"` to a
    /// value.
    #[pyo3(signature = (objects, targets=None, inputs=None, check_assertions=true, allow_composition=true))]
    fn migrate(
        &self,
        objects: &PyObjects,
        targets: Option<BTreeMap<String, u32>>,
        inputs: Option<&Bound<'_, PyDict>>,
        check_assertions: bool,
        allow_composition: bool,
    ) -> PyResult<PyObjects> {
        let targets = match targets {
            Some(t) => t,
            None => self
                .repo
                .latest_release()
                .map(|r| r.schemas.iter().map(|(c, s)| (c.clone(), s.version)).collect())
                .unwrap_or_default(),
        };
        let mut map = InputMap::new();
        if let Some(inputs) = inputs {
            for (k, v) in inputs.iter() {
                let key: String = k.extract()?;
                let (class, attr) = key
                    .split_once('.')
                    .ok_or_else(|| PyTypeError::new_err(format!("input key `{key}` is not CLASS.attr")))?;
                map.insert((class.to_string(), attr.to_string()), value_from_py(&v)?);
            }
        }
        let options = RetrieveOptions {
            check_assertions,
            allow_composition,
        };
        escher::retrieve(
            &objects.inner,
            &self.repo,
            &targets,
            &map,
            &ConverterRegistry::builtins(),
            options,
        )
        .map(|r| PyObjects { inner: r.graph })
        .map_err(err)
    }
}

fn history(name: &str, versions: u32, edges: Vec<(u32, u32)>) -> PyResult<EvolutionHistory> {
    EvolutionHistory::new(name, versions, edges).map_err(err)
}

/// Exact PER of one class as `(numerator, denominator)`.
#[pyfunction]
fn per_class_fraction(versions: u32, edges: Vec<(u32, u32)>) -> PyResult<(u64, u64)> {
    let p = escher::per_class(&history("C", versions, edges)?);
    Ok((
        p.numer().to_u64().unwrap_or(0),
        p.denom().to_u64().unwrap_or(1),
    ))
}

#[pyfunction]
fn per_class(versions: u32, edges: Vec<(u32, u32)>) -> PyResult<f64> {
    let (n, d) = per_class_fraction(versions, edges)?;
    Ok(n as f64 / d as f64)
}

/// Report for a history file's text: `per X = 0.xx` lines and the release
/// mean.
#[pyfunction]
fn per_report(hist_text: &str) -> PyResult<String> {
    let hs = parse_histories(hist_text).map_err(err)?;
    report(&hs).map_err(err)
}

#[pyfunction]
fn per_release(hist_text: &str) -> PyResult<String> {
    let hs = parse_histories(hist_text).map_err(err)?;
    escher::per_release(&hs).map(|r| render_decimal(&r)).map_err(err)
}

#[pymodule]
fn escher_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EscherError", m.py().get_type::<EscherError>())?;
    m.add_class::<PySchema>()?;
    m.add_class::<PyTransformation>()?;
    m.add_class::<PyTransformer>()?;
    m.add_class::<PyObjects>()?;
    m.add_class::<PyProject>()?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(per_class, m)?)?;
    m.add_function(wrap_pyfunction!(per_class_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(per_report, m)?)?;
    m.add_function(wrap_pyfunction!(per_release, m)?)?;
    Ok(())
}
