// SPDX-License-Identifier: MIT OR Apache-2.0

//! Python bindings: models, steering plans, scoring, datasets and
//! experiment runs. Errors surface as `tempsteer.TempsteerError` with the
//! error kind as a prefix.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tempsteer_core::datasets::{self, default_fewshot, PromptMode, SrotRecord};
use tempsteer_core::engine::{self, InjectionPlan, ModelBundle, TapRequest, Tensor, TokenId};
use tempsteer_core::evalkit;
use tempsteer_core::steering::{self, LayerMode, PromptStyle};
use tempsteer_core::sweep::{emit_report, Experiment, ExperimentConfig};
use tempsteer_core::synth::{ToyWorld, ToyWorldSpec};
use tempsteer_core::Error;

create_exception!(tempsteer, TempsteerError, PyException);

fn py_err(e: Error) -> PyErr {
    TempsteerError::new_err(format!("{}: {e}", e.kind()))
}

fn rows_of(t: &Tensor) -> Vec<Vec<f32>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_json(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<String> {
    py.import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn layer_mode(layer: Option<usize>, multi: Option<(usize, usize)>) -> PyResult<LayerMode> {
    match (layer, multi) {
        (Some(layer), None) => Ok(LayerMode::single(layer)),
        (None, Some((lo, hi))) => Ok(LayerMode::Multi { lo, hi }),
        _ => Err(PyValueError::new_err("pass exactly one of `layer` or `multi`")),
    }
}

/// Layer-indexed steering vectors to add at the front of a prompt.
#[pyclass(module = "tempsteer", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Plan {
    inner: InjectionPlan,
}

#[pymethods]
impl Plan {
    /// Plan from `{layer: [[f32; d_model]; mtl]}`.
    #[new]
    fn new(vectors: BTreeMap<usize, Vec<Vec<f32>>>) -> PyResult<Self> {
        let mut entries = Vec::with_capacity(vectors.len());
        for (layer, rows) in vectors {
            let cols = rows.first().map_or(0, Vec::len);
            let data: Vec<f32> = rows.iter().flatten().copied().collect();
            if data.len() != rows.len() * cols {
                return Err(PyValueError::new_err(format!("layer {layer}: ragged rows")));
            }
            let ae = Tensor::new(vec![rows.len(), cols], data).map_err(py_err)?;
            entries.push(engine::Injection { layer, ae });
        }
        Ok(Self {
            inner: InjectionPlan::new(entries).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("plan serializes")
    }

    #[getter]
    fn layers(&self) -> Vec<usize> {
        self.inner.layers().collect()
    }

    #[getter]
    fn mtl(&self) -> usize {
        self.inner.max_mtl()
    }

    fn vectors(&self) -> BTreeMap<usize, Vec<Vec<f32>>> {
        self.inner.entries().iter().map(|e| (e.layer, rows_of(&e.ae))).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Plan(layers={:?}, mtl={})", self.layers(), self.mtl())
    }
}

/// A loaded decoder model with its tokenizer.
#[pyclass(module = "tempsteer", frozen)]
struct Model {
    inner: ModelBundle,
}

#[pymethods]
impl Model {
    /// Loads a model directory or its weight container.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: engine::load_model(&path).map_err(py_err)?,
        })
    }

    /// Random-weight model over the synthetic toy world vocabulary.
    #[staticmethod]
    #[pyo3(signature = (n_layers = 8, d_model = 64, n_heads = 4, seed = 0))]
    fn toy(n_layers: usize, d_model: usize, n_heads: usize, seed: u64) -> PyResult<Self> {
        let world = ToyWorld::generate(&ToyWorldSpec::default());
        Ok(Self {
            inner: world.random_bundle(n_layers, d_model, n_heads, seed).map_err(py_err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(py_err)
    }

    #[getter]
    fn n_layers(&self) -> usize {
        self.inner.n_layers()
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.inner.d_model()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab().len()
    }

    #[pyo3(signature = (text, bos = true))]
    fn encode(&self, text: &str, bos: bool) -> Vec<TokenId> {
        if bos {
            self.inner.encode_prompt(text)
        } else {
            self.inner.encode(text)
        }
    }

    fn decode(&self, ids: Vec<TokenId>) -> String {
        self.inner.decode(&ids)
    }

    /// Next-token logits after `ids`.
    #[pyo3(signature = (ids, plan = None))]
    fn logits(&self, py: Python<'_>, ids: Vec<TokenId>, plan: Option<&Plan>) -> PyResult<Vec<f32>> {
        let plan = plan.map(|p| &p.inner);
        py.detach(|| self.inner.prefill(&ids, &TapRequest::none(), plan))
            .map(|p| p.logits.into_data())
            .map_err(py_err)
    }

    /// Residual stream entering each requested block, `[len, d_model]`.
    #[pyo3(signature = (ids, layers, plan = None))]
    fn tap(
        &self,
        py: Python<'_>,
        ids: Vec<TokenId>,
        layers: Vec<usize>,
        plan: Option<&Plan>,
    ) -> PyResult<BTreeMap<usize, Vec<Vec<f32>>>> {
        let plan = plan.map(|p| &p.inner);
        let out = py
            .detach(|| self.inner.prefill(&ids, &TapRequest::layers(layers), plan))
            .map_err(py_err)?;
        Ok(out.tapped.iter().map(|(l, t)| (*l, rows_of(t))).collect())
    }

    /// Greedy continuation token ids, stop token included.
    #[pyo3(signature = (ids, plan = None, max_new = 8))]
    fn generate(&self, py: Python<'_>, ids: Vec<TokenId>, plan: Option<&Plan>, max_new: usize) -> PyResult<Vec<TokenId>> {
        let plan = plan.map(|p| &p.inner);
        py.detach(|| self.inner.generate(&ids, plan, max_new)).map_err(py_err)
    }

    /// Greedy answer text, cut at the first stop token.
    #[pyo3(signature = (prompt, plan = None, max_new = 8))]
    fn ask(&self, py: Python<'_>, prompt: &str, plan: Option<&Plan>, max_new: usize) -> PyResult<String> {
        let plan = plan.map(|p| &p.inner);
        py.detach(|| datasets::ask(&self.inner, prompt, plan, max_new)).map_err(py_err)
    }

    /// Steering plan for a style and year at one layer or a `(lo, hi)` range.
    #[pyo3(signature = (style, year, layer = None, multi = None))]
    fn steering_plan(
        &self,
        py: Python<'_>,
        style: &str,
        year: i32,
        layer: Option<usize>,
        multi: Option<(usize, usize)>,
    ) -> PyResult<Plan> {
        let mode = layer_mode(layer, multi)?;
        let style: PromptStyle = style.parse().map_err(py_err)?;
        let spec = steering::temporal_prompt_set(style, year, mode).map_err(py_err)?;
        let inner = py.detach(|| steering::build_plan(&self.inner, &spec, mode)).map_err(py_err)?;
        Ok(Plan { inner })
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Model(n_layers={}, d_model={}, n_heads={}, vocab_size={})",
            c.n_layers, c.d_model, c.n_heads, c.vocab_size
        )
    }
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    evalkit::normalize_answer(text)
}

#[pyfunction]
fn token_f1(prediction: &str, gold: &str) -> f64 {
    evalkit::token_f1(prediction, gold)
}

#[pyfunction]
fn best_f1(prediction: &str, golds: Vec<String>) -> PyResult<f64> {
    evalkit::best_f1(prediction, &golds).map_err(py_err)
}

/// `[(text, coefficient), ...]` for a style and year.
#[pyfunction]
#[pyo3(signature = (style, year, multi = false))]
fn temporal_prompt_set(style: &str, year: i32, multi: bool) -> PyResult<Vec<(String, f32)>> {
    let style: PromptStyle = style.parse().map_err(py_err)?;
    let mode = if multi {
        LayerMode::multi_to(steering::DEFAULT_MULTI_START)
    } else {
        LayerMode::single(0)
    };
    let spec = steering::temporal_prompt_set(style, year, mode).map_err(py_err)?;
    Ok(spec.prompts().iter().map(|p| (p.text.clone(), p.coefficient)).collect())
}

/// Synthetic records as plain dicts.
#[pyfunction]
#[pyo3(signature = (n_entities = 20, seed = 7))]
fn toy_dataset(py: Python<'_>, n_entities: usize, seed: u64) -> PyResult<Bound<'_, PyAny>> {
    let spec = ToyWorldSpec {
        seed,
        n_entities,
        ..ToyWorldSpec::default()
    };
    let text = serde_json::to_string(&ToyWorld::generate(&spec).records).expect("records serialize");
    from_json(py, &text)
}

#[pyfunction]
fn load_dataset(py: Python<'_>, path: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    let records = datasets::load_srot(&path, datasets::DatasetSchema::Hog).map_err(py_err)?;
    from_json(py, &serde_json::to_string(&records).expect("records serialize"))
}

/// Few-shot prompt for a record dict; relative when `year` is None.
#[pyfunction]
#[pyo3(signature = (record, year = None))]
fn build_prompt(py: Python<'_>, record: &Bound<'_, PyDict>, year: Option<i32>) -> PyResult<String> {
    let record: SrotRecord =
        serde_json::from_str(&to_json(py, record.as_any())?).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mode = year.map_or(PromptMode::Relative, PromptMode::Explicit);
    datasets::build_prompt(&record, mode, &default_fewshot()).map_err(py_err)
}

/// Runs a benchmark or sweep from a JSON config; writes the report unless
/// `write_report` is false. Returns the rows as dicts.
#[pyfunction]
#[pyo3(signature = (config_json, write_report = true))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, write_report: bool) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let rows = py
        .detach(|| -> tempsteer_core::Result<_> {
            let experiment = Experiment::load(config)?;
            let rows = experiment.run()?;
            if write_report {
                emit_report(&rows, &experiment.config().out)?;
            }
            Ok(rows)
        })
        .map_err(py_err)?;
    from_json(py, &serde_json::to_string(&rows).expect("rows serialize"))
}

#[pymodule]
fn tempsteer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TempsteerError", m.py().get_type::<TempsteerError>())?;
    m.add_class::<Model>()?;
    m.add_class::<Plan>()?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(token_f1, m)?)?;
    m.add_function(wrap_pyfunction!(best_f1, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_prompt_set, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
