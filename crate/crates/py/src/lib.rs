//! Python bindings: intervals, boxes, models, tubes and the main operations.

use mixmono_core as core;

use core::expr::{infer_variables, parse_expr};
use core::inclusion::{enclose as core_enclose, error_bounds as core_error_bounds, subdivide_apply, DEFAULT_CELL_CAP};
use core::observer::Measurement;
use core::reach::{ReachOptions, DEFAULT_SUBSTEPS};
use core::{Error, InversionConfig, MethodId, VectorFunction};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(mixmono, MixmonoError, PyException, "Base class for library errors.");
create_exception!(mixmono, ValidationError, MixmonoError, "Invalid input.");
create_exception!(mixmono, ComputationError, MixmonoError, "A computation failed.");

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        ValidationError::new_err(e.to_string())
    } else {
        ComputationError::new_err(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> PyErr {
    ValidationError::new_err(msg.into())
}

// ------------------------------------------------------------------ Interval

#[pyclass(name = "Interval", module = "mixmono", frozen, skip_from_py_object, eq)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyInterval(core::Interval);

#[pymethods]
impl PyInterval {
    #[new]
    #[pyo3(signature = (lo, hi=None))]
    fn new(lo: f64, hi: Option<f64>) -> PyResult<Self> {
        core::Interval::new(lo, hi.unwrap_or(lo))
            .map(Self)
            .map_err(|e| invalid(e.to_string()))
    }

    #[getter]
    fn lo(&self) -> f64 {
        self.0.lo()
    }

    #[getter]
    fn hi(&self) -> f64 {
        self.0.hi()
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width()
    }

    #[getter]
    fn midpoint(&self) -> f64 {
        self.0.midpoint()
    }

    fn contains(&self, x: f64) -> bool {
        self.0.contains(x)
    }

    fn is_subset_of(&self, other: &PyInterval) -> bool {
        self.0.is_subset_of(&other.0)
    }

    fn hull(&self, other: &PyInterval) -> Self {
        Self(self.0.hull(&other.0))
    }

    fn intersect(&self, other: &PyInterval) -> Option<Self> {
        self.0.intersect(&other.0).map(Self)
    }

    fn __add__(&self, o: &PyInterval) -> Self {
        Self(self.0 + o.0)
    }

    fn __sub__(&self, o: &PyInterval) -> Self {
        Self(self.0 - o.0)
    }

    fn __mul__(&self, o: &PyInterval) -> Self {
        Self(self.0 * o.0)
    }

    fn __truediv__(&self, o: &PyInterval) -> PyResult<Self> {
        self.0.div(o.0).map(Self).map_err(|e| ComputationError::new_err(e.to_string()))
    }

    fn __neg__(&self) -> Self {
        Self(-self.0)
    }

    fn __contains__(&self, x: f64) -> bool {
        self.0.contains(x)
    }

    fn __iter__(slf: PyRef<'_, Self>) -> PyResult<Py<PyAny>> {
        let py = slf.py();
        let t = (slf.0.lo(), slf.0.hi()).into_pyobject(py)?;
        Ok(t.call_method0("__iter__")?.unbind())
    }

    fn __repr__(&self) -> String {
        format!("Interval({:?}, {:?})", self.0.lo(), self.0.hi())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

// ------------------------------------------------------------------ IntervalBox

#[pyclass(name = "IntervalBox", module = "mixmono", frozen, skip_from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyBox(core::IntervalBox);

/// Accepts an `IntervalBox`, a box string, or a sequence of `(lo, hi)` pairs.
fn to_box(obj: &Bound<'_, PyAny>) -> PyResult<core::IntervalBox> {
    if let Ok(b) = obj.cast::<PyBox>() {
        return Ok(b.get().0.clone());
    }
    if let Ok(s) = obj.extract::<String>() {
        return s.parse().map_err(|e: core::interval::IntervalError| invalid(e.to_string()));
    }
    let pairs: Vec<(f64, f64)> = obj
        .extract()
        .map_err(|_| invalid("expected an IntervalBox, a box string or a list of (lo, hi) pairs"))?;
    core::IntervalBox::from_bounds(&pairs).map_err(|e| invalid(e.to_string()))
}

#[pymethods]
impl PyBox {
    #[new]
    fn new(bounds: &Bound<'_, PyAny>) -> PyResult<Self> {
        to_box(bounds).map(Self)
    }

    /// Parses `"[a,b] x [c,d]"`, `"[a,b]^n"` or `"[[a,b],[c,d]]"`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse().map(Self).map_err(|e: core::interval::IntervalError| invalid(e.to_string()))
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.0.iter().map(|d| (d.lo(), d.hi())).collect()
    }

    fn lower(&self) -> Vec<f64> {
        self.0.lower()
    }

    fn upper(&self) -> Vec<f64> {
        self.0.upper()
    }

    fn widths(&self) -> Vec<f64> {
        self.0.widths()
    }

    fn midpoint(&self) -> Vec<f64> {
        self.0.midpoint()
    }

    fn contains_point(&self, x: Vec<f64>) -> PyResult<bool> {
        self.0.contains_point(&x).map_err(|e| invalid(e.to_string()))
    }

    fn is_subset_of(&self, other: &PyBox) -> PyResult<bool> {
        self.0.is_subset_of(&other.0).map_err(|e| invalid(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __getitem__(&self, i: isize) -> PyResult<PyInterval> {
        let n = self.0.len() as isize;
        let k = if i < 0 { i + n } else { i };
        if !(0..n).contains(&k) {
            return Err(PyIndexError::new_err("box index out of range"));
        }
        Ok(PyInterval(self.0[k as usize]))
    }

    fn __repr__(&self) -> String {
        format!("IntervalBox({:?})", self.bounds())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

// ------------------------------------------------------------------ models and tubes

#[pyclass(name = "Model", module = "mixmono", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel(core::SystemModel);

#[pymethods]
impl PyModel {
    /// Loads a model file, or a bundled model by name.
    #[staticmethod]
    fn load(path_or_name: &str) -> PyResult<Self> {
        core::SystemModel::load(path_or_name).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        core::SystemModel::parse(text).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn bundled_names() -> Vec<&'static str> {
        core::model::bundled_names()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }

    #[getter]
    fn continuous(&self) -> bool {
        self.0.semantics == core::TimeSemantics::Continuous
    }

    #[getter]
    fn state(&self) -> Vec<String> {
        self.0.state.clone()
    }

    #[getter]
    fn disturbance(&self) -> Vec<String> {
        self.0.disturbance.clone()
    }

    #[getter]
    fn init(&self) -> PyBox {
        PyBox(self.0.init.clone())
    }

    #[getter]
    fn disturbance_box(&self) -> PyBox {
        PyBox(self.0.disturbance_box.clone())
    }

    #[getter]
    fn has_observation(&self) -> bool {
        self.0.observation.is_some()
    }

    #[getter]
    fn has_constraints(&self) -> bool {
        !self.0.constraints.is_empty()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, states={:?}, dt={})", self.0.name, self.0.state, self.0.dt)
    }
}

#[pyclass(name = "ReachTube", module = "mixmono", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTube {
    tube: core::ReachTube,
    /// `(step, reason)` when the computation stopped early.
    stopped: Option<(usize, String)>,
}

#[pymethods]
impl PyTube {
    #[getter]
    fn method(&self) -> &str {
        &self.tube.method
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.tube.names.clone()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.tube.steps.iter().map(|s| s.t).collect()
    }

    /// `None` when the tube covers every requested step.
    #[getter]
    fn stopped(&self) -> Option<(usize, String)> {
        self.stopped.clone()
    }

    /// Propagated box per step.
    fn propagated(&self) -> Vec<PyBox> {
        self.tube.steps.iter().map(|s| PyBox(s.propagated.clone())).collect()
    }

    /// Measurement- or constraint-refined box per step (`None` where no update happened).
    fn updated(&self) -> Vec<Option<PyBox>> {
        self.tube.steps.iter().map(|s| s.updated.clone().map(PyBox)).collect()
    }

    /// The refined box where available, otherwise the propagated one.
    fn boxes(&self) -> Vec<PyBox> {
        self.tube.steps.iter().map(|s| PyBox(s.current().clone())).collect()
    }

    fn frames(&self, trajectory: Vec<Vec<f64>>, tol: f64) -> bool {
        self.tube.frames(&trajectory, tol)
    }

    fn to_csv(&self) -> String {
        core::model::tube_to_csv(&self.tube)
    }

    fn to_svg(&self) -> PyResult<String> {
        core::model::render_svg(std::slice::from_ref(&self.tube)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.tube.len()
    }

    fn __repr__(&self) -> String {
        format!("ReachTube(method={:?}, steps={})", self.tube.method, self.tube.len())
    }
}

fn tube_result(r: Result<core::ReachTube, Error>) -> PyResult<PyTube> {
    match r {
        Ok(tube) => Ok(PyTube { tube, stopped: None }),
        Err(Error::Reach { step, partial, source }) if !source.is_validation() => Ok(PyTube {
            tube: *partial,
            stopped: Some((step, source.to_string())),
        }),
        Err(Error::Reach { source, .. }) => Err(to_py(*source)),
        Err(e) => Err(to_py(e)),
    }
}

// ------------------------------------------------------------------ functions

fn method(name: &str) -> PyResult<MethodId> {
    name.parse().map_err(to_py)
}

/// Builds a map from one expression or a list of them.
fn function(exprs: &Bound<'_, PyAny>, vars: Option<Vec<String>>) -> PyResult<VectorFunction> {
    let texts: Vec<String> = match exprs.extract::<String>() {
        Ok(s) => vec![s],
        Err(_) => exprs.extract().map_err(|_| invalid("expected an expression or a list of expressions"))?,
    };
    let names = vars.unwrap_or_else(|| infer_variables(&texts.iter().map(String::as_str).collect::<Vec<_>>()));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let parsed = texts
        .iter()
        .map(|t| parse_expr(t, &refs).map_err(|e| invalid(format!("expression '{t}': {e}"))))
        .collect::<PyResult<Vec<_>>>()?;
    VectorFunction::new(parsed, names.len()).map_err(to_py)
}

/// Enclosure of `exprs` over `domain`; `subdivide > 1` returns the hull of per-cell results.
#[pyfunction]
#[pyo3(signature = (exprs, domain, method_name="remainder", vars=None, subdivide=1))]
fn enclose(
    py: Python<'_>,
    exprs: &Bound<'_, PyAny>,
    domain: &Bound<'_, PyAny>,
    method_name: &str,
    vars: Option<Vec<String>>,
    subdivide: usize,
) -> PyResult<PyBox> {
    let f = function(exprs, vars)?;
    let b = to_box(domain)?;
    let m = method(method_name)?;
    py.detach(|| {
        if subdivide <= 1 {
            core_enclose(&m, &f, &b)
        } else {
            subdivide_apply(&m, &f, &b, subdivide, DEFAULT_CELL_CAP).map(|s| s.hull)
        }
    })
    .map(PyBox)
    .map_err(to_py)
}

/// Sample-based range estimate (seeded).
#[pyfunction]
#[pyo3(signature = (exprs, domain, samples=100_000, seed=0, vars=None))]
fn sampled_range(
    exprs: &Bound<'_, PyAny>,
    domain: &Bound<'_, PyAny>,
    samples: usize,
    seed: u64,
    vars: Option<Vec<String>>,
) -> PyResult<PyBox> {
    let f = function(exprs, vars)?;
    let b = to_box(domain)?;
    core::inclusion::sampled_range(&f, &b, samples, seed).map(PyBox).map_err(to_py)
}

/// Remainder-form error bounds of a scalar expression: `q_upper`, `q_upper_hat` and,
/// with `samples > 0`, a sampled `q_lower_estimate`.
#[pyfunction]
#[pyo3(signature = (expr, domain, samples=100_000, seed=0, vars=None))]
fn error_bounds<'py>(
    py: Python<'py>,
    expr: &str,
    domain: &Bound<'py, PyAny>,
    samples: usize,
    seed: u64,
    vars: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = function(&expr.into_pyobject(py)?.into_any(), vars)?;
    let b = to_box(domain)?;
    let jac = f.jacobian(&b).map_err(to_py)?;
    let oracle = if samples > 0 {
        Some(core::inclusion::sampled_range(&f, &b, samples, seed).map_err(to_py)?[0])
    } else {
        None
    };
    let eb = core_error_bounds(&f.exprs()[0], jac.row(0), &b, oracle).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("q_upper", eb.q_upper)?;
    d.set_item("q_upper_hat", eb.q_upper_hat)?;
    d.set_item("q_lower_estimate", eb.q_lower_estimate)?;
    Ok(d)
}

/// Hausdorff tightness metric between two boxes.
#[pyfunction]
fn hausdorff_q(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<f64> {
    core::hausdorff_q(&to_box(a)?, &to_box(b)?).map_err(|e| invalid(e.to_string()))
}

/// Shrinks `prior` to the states whose image lies in `[y_lo, y_hi]`; `None` if empty.
#[pyfunction]
#[pyo3(signature = (exprs, prior, y_lo, y_hi, epsilon=1e-3, passes=1, method_name="remainder", vars=None, relative=false))]
#[allow(clippy::too_many_arguments)]
fn set_invert(
    py: Python<'_>,
    exprs: &Bound<'_, PyAny>,
    prior: &Bound<'_, PyAny>,
    y_lo: Vec<f64>,
    y_hi: Vec<f64>,
    epsilon: f64,
    passes: usize,
    method_name: &str,
    vars: Option<Vec<String>>,
    relative: bool,
) -> PyResult<Option<PyBox>> {
    let f = function(exprs, vars)?;
    let b = to_box(prior)?;
    let cfg = InversionConfig {
        epsilon,
        relative,
        passes,
        method: method(method_name)?,
        ..InversionConfig::default()
    };
    match py.detach(|| core::setinv::set_invert(&f, None, &b, &y_lo, &y_hi, &cfg)) {
        Ok(r) => Ok(Some(PyBox(r))),
        Err(Error::EmptySolution) => Ok(None),
        Err(e) => Err(to_py(e)),
    }
}

fn reach_options(substeps: usize, refine: Option<f64>) -> PyResult<ReachOptions> {
    if substeps == 0 {
        return Err(invalid("substeps must be at least 1"));
    }
    Ok(ReachOptions {
        substeps,
        refine: refine.map(InversionConfig::with_epsilon),
        ..ReachOptions::default()
    })
}

/// Reach tube; a tube that stops early is returned with `stopped` set.
///
/// `refine` is the set-inversion epsilon for per-step constraint refinement.
#[pyfunction]
#[pyo3(signature = (model, method_name="remainder", steps=50, refine=None, substeps=DEFAULT_SUBSTEPS))]
fn reach(
    py: Python<'_>,
    model: &PyModel,
    method_name: &str,
    steps: usize,
    refine: Option<f64>,
    substeps: usize,
) -> PyResult<PyTube> {
    let m = method(method_name)?;
    let opts = reach_options(substeps, refine)?;
    tube_result(py.detach(|| core::reach::reach_tube(&model.0, &m, steps, &opts)))
}

/// Interval observer over `measurements`, a list of `(t, [y...])` pairs.
#[pyfunction]
#[pyo3(signature = (model, measurements, method_name="remainder", epsilon=1e-3, steps=None, substeps=DEFAULT_SUBSTEPS))]
fn observe(
    py: Python<'_>,
    model: &PyModel,
    measurements: Vec<(f64, Vec<f64>)>,
    method_name: &str,
    epsilon: f64,
    steps: Option<usize>,
    substeps: usize,
) -> PyResult<PyTube> {
    let m = method(method_name)?;
    let ms: Vec<Measurement> = measurements.into_iter().map(|(t, y)| Measurement { t, y }).collect();
    let cfg = InversionConfig {
        method: m.clone(),
        ..InversionConfig::with_epsilon(epsilon)
    };
    let opts = reach_options(substeps, None)?;
    tube_result(py.detach(|| core::observer::observe(&model.0, &m, &ms, &cfg, &opts, steps)))
}

/// Seeded point trajectory (`steps + 1` states) and, for models with an observe block,
/// noisy measurements at every step after the first.
#[pyfunction]
#[pyo3(signature = (model, steps=50, seed=0, substeps=DEFAULT_SUBSTEPS))]
fn simulate(
    model: &PyModel,
    steps: usize,
    seed: u64,
    substeps: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<(f64, Vec<f64>)>)> {
    let f = model.0.dynamics_fn().map_err(to_py)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = core::reach::random_trajectory(&model.0, &f, steps, substeps.max(1), &mut rng).map_err(to_py)?;
    let mut ms = Vec::new();
    if model.0.observation.is_some() {
        for (k, x) in traj.iter().enumerate().skip(1) {
            let y = core::reach::random_measurement(&model.0, x, &mut rng).map_err(to_py)?;
            ms.push((k as f64 * model.0.dt, y));
        }
    }
    Ok((traj, ms))
}

/// Names accepted wherever a method is expected.
#[pyfunction]
fn methods() -> Vec<String> {
    MethodId::BASIC
        .iter()
        .cloned()
        .chain([MethodId::best()])
        .map(|m| m.to_string())
        .collect()
}

#[pymodule]
fn mixmono(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("MixmonoError", py.get_type::<MixmonoError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("ComputationError", py.get_type::<ComputationError>())?;
    m.add_class::<PyInterval>()?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTube>()?;
    m.add_function(wrap_pyfunction!(enclose, m)?)?;
    m.add_function(wrap_pyfunction!(sampled_range, m)?)?;
    m.add_function(wrap_pyfunction!(error_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff_q, m)?)?;
    m.add_function(wrap_pyfunction!(set_invert, m)?)?;
    m.add_function(wrap_pyfunction!(reach, m)?)?;
    m.add_function(wrap_pyfunction!(observe, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    Ok(())
}
