//! Python bindings: IR normalization, metrics, fixture generation and the
//! staged pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::irvuln::cli::{self, stages, PipelineConfig, Workspace};
use ::irvuln::corpus::{FixtureConfig, LabelMode};
use ::irvuln::evaluation::{self, Average, ClassificationReport};
use ::irvuln::ir::{self, MetadataOverrides};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: anyhow::Error) -> PyErr {
    let msg = format!("{e:#}");
    if cli::exit_code(&e) == cli::EXIT_USER {
        PyValueError::new_err(msg)
    } else {
        PyRuntimeError::new_err(msg)
    }
}

/// One standardized function.
#[pyclass(name = "TokenRecord", frozen, get_all)]
struct PyTokenRecord {
    id: String,
    function_name: String,
    cwe_id: Option<u32>,
    /// "good", "bad" or None.
    flaw_label: Option<String>,
    source_path: String,
    tokens: Vec<String>,
}

#[pymethods]
impl PyTokenRecord {
    fn __repr__(&self) -> String {
        format!("TokenRecord(id={:?}, tokens={})", self.id, self.tokens.len())
    }
}

/// Standardizes every defined function of one IR module. CWE and flaw label
/// come from a `<CWE>__<testcase>__<good|bad>.ll` file name when `source_path` has one.
#[pyfunction]
#[pyo3(signature = (text, source_path = "input.ll"))]
fn normalize_ir(text: &str, source_path: &str) -> PyResult<Vec<PyTokenRecord>> {
    let records = ir::normalize_text(text, source_path, &MetadataOverrides::default()).map_err(value_err)?;
    Ok(records
        .into_iter()
        .map(|r| PyTokenRecord {
            id: r.id,
            function_name: r.function_name,
            cwe_id: r.cwe_id,
            flaw_label: r.flaw_label.map(|l| l.as_str().to_string()),
            source_path: r.source_path,
            tokens: r.tokens,
        })
        .collect())
}

#[pyfunction]
fn split_numeric_literal(lexeme: &str) -> PyResult<Vec<String>> {
    if !ir::is_numeric_literal(lexeme) {
        return Err(PyValueError::new_err(format!("not a numeric literal: {lexeme:?}")));
    }
    Ok(ir::split_numeric_literal(lexeme))
}

/// Accuracy of always predicting the largest class.
#[pyfunction]
fn baseline_accuracy(supports: Vec<u64>) -> PyResult<f64> {
    evaluation::baseline_accuracy(&supports).map_err(value_err)
}

#[pyclass(name = "Report", frozen)]
struct PyReport(ClassificationReport);

fn average(a: &Average) -> (f64, f64, f64, u64) {
    (a.precision, a.recall, a.f1, a.support)
}

#[pymethods]
impl PyReport {
    #[getter]
    fn accuracy(&self) -> f64 {
        self.0.accuracy
    }

    /// (name, precision, recall, f1, support) per class.
    #[getter]
    fn classes(&self) -> Vec<(String, f64, f64, f64, u64)> {
        self.0.classes.iter().map(|c| (c.name.clone(), c.precision, c.recall, c.f1, c.support)).collect()
    }

    /// (precision, recall, f1, support)
    #[getter]
    fn micro(&self) -> (f64, f64, f64, u64) {
        average(&self.0.micro)
    }

    #[getter]
    fn macro_avg(&self) -> (f64, f64, f64, u64) {
        average(&self.0.macro_avg)
    }

    #[getter]
    fn weighted(&self) -> (f64, f64, f64, u64) {
        average(&self.0.weighted)
    }

    #[getter]
    fn confusion(&self) -> Vec<Vec<u64>> {
        self.0.confusion.counts.clone()
    }

    fn render(&self) -> String {
        self.0.render()
    }

    fn __str__(&self) -> String {
        self.0.render()
    }
}

/// Per-class precision, recall and F1 with micro, macro and weighted averages.
#[pyfunction]
#[pyo3(signature = (y_true, y_pred, class_names = None))]
fn classification_report(y_true: Vec<usize>, y_pred: Vec<usize>, class_names: Option<Vec<String>>) -> PyResult<PyReport> {
    let k = match &class_names {
        Some(names) => names.len(),
        None => y_true.iter().chain(&y_pred).max().map_or(0, |m| m + 1).max(2),
    };
    let names = class_names.unwrap_or_else(|| (0..k).map(|c| c.to_string()).collect());
    let cm = evaluation::confusion(&y_true, &y_pred, k).map_err(value_err)?;
    evaluation::report(&cm, &names).map(PyReport).map_err(value_err)
}

/// Writes a synthetic IR corpus with one planted motif per flawed class.
#[pyfunction]
#[pyo3(signature = (out, classes = 2, per_class = 100, seed = 1, motif_strength = 1.0))]
fn write_fixture(out: PathBuf, classes: usize, per_class: usize, seed: u64, motif_strength: f64) -> PyResult<String> {
    stages::write_fixture(&FixtureConfig::new(seed, classes, per_class, motif_strength), &out).map_err(pipeline_err)
}

/// The staged pipeline over one workspace directory. Stage methods return
/// the same summaries the command line prints.
#[pyclass(name = "Pipeline")]
struct PyPipeline {
    config: PipelineConfig,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (config = None, workspace = None, seed = None, mode = None, max_epochs = None))]
    fn new(
        config: Option<PathBuf>,
        workspace: Option<PathBuf>,
        seed: Option<u64>,
        mode: Option<&str>,
        max_epochs: Option<usize>,
    ) -> PyResult<Self> {
        let mut c = match config {
            Some(path) => PipelineConfig::load(&path).map_err(value_err)?,
            None => PipelineConfig::default(),
        };
        if let Some(ws) = workspace {
            c.workspace = ws;
        }
        if let Some(seed) = seed {
            c.seed = seed;
        }
        if let Some(mode) = mode {
            c.mode = mode.parse::<LabelMode>().map_err(value_err)?;
        }
        if max_epochs.is_some() {
            c.max_epochs = max_epochs;
        }
        c.validate().map_err(value_err)?;
        Ok(PyPipeline { config: c })
    }

    #[getter]
    fn workspace(&self) -> PathBuf {
        self.config.workspace.clone()
    }

    /// Config as a JSON string.
    fn config_json(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    fn normalize(&mut self, input_dir: PathBuf) -> PyResult<String> {
        self.config.input_dir = Some(input_dir);
        self.stage(stages::normalize)
    }

    fn select(&self) -> PyResult<String> {
        self.stage(stages::select)
    }

    fn embed(&self) -> PyResult<String> {
        self.stage(stages::embed)
    }

    fn encode(&self) -> PyResult<String> {
        self.stage(stages::encode)
    }

    fn train(&self) -> PyResult<String> {
        self.stage(stages::train)
    }

    fn evaluate(&self) -> PyResult<String> {
        self.stage(stages::evaluate)
    }

    fn run_all(&mut self, input_dir: PathBuf) -> PyResult<String> {
        self.config.input_dir = Some(input_dir);
        self.stage(stages::run_all)
    }

    /// One `(id, function_name, predicted class, probabilities)` tuple per
    /// function of the given IR files or directories.
    fn predict(&self, inputs: Vec<PathBuf>) -> PyResult<Vec<(String, String, usize, Vec<f64>)>> {
        let ws = Workspace::new(&self.config.workspace);
        let (predictions, _) = cli::predict_records(&self.config, &ws, &inputs).map_err(pipeline_err)?;
        Ok(predictions.into_iter().map(|p| (p.id, p.function_name, p.predicted, p.probabilities)).collect())
    }
}

impl PyPipeline {
    fn stage(&self, f: fn(&PipelineConfig, &Workspace) -> anyhow::Result<String>) -> PyResult<String> {
        f(&self.config, &Workspace::new(&self.config.workspace)).map_err(pipeline_err)
    }
}

/// Runs the command line with `args` (without the program name) and returns its exit code.
#[pyfunction]
fn main(args: Vec<String>) -> i32 {
    cli::main_with_args(std::iter::once("irvuln".to_string()).chain(args))
}

#[pymodule]
fn irvuln(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTokenRecord>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(normalize_ir, m)?)?;
    m.add_function(wrap_pyfunction!(split_numeric_literal, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(write_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
