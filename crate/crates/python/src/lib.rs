//! Python bindings: parse plans, build and execute vote trees, score traces,
//! and run configured suites.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use vtplan_core::eval::{self, RunConfig};
use vtplan_core::executor::{parse_trace_jsonl, run_episode, Correction, ExecutionMode, DEFAULT_STEP_LIMIT};
use vtplan_core::plan::{self, Command, Plan, PlanOrigin};
use vtplan_core::tree::{self, SelectionStrategy};
use vtplan_core::world::{self, Predicate};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hands structured results to Python as plain dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn commands(raw: &[String]) -> PyResult<Vec<Command>> {
    raw.iter().map(|c| c.parse::<Command>().map_err(err)).collect()
}

fn plans(raw: &[Vec<String>]) -> PyResult<Vec<Plan>> {
    raw.iter().enumerate().map(|(k, p)| Ok(Plan::generated(commands(p)?, k))).collect()
}

fn canonical(cmds: &[Command]) -> Vec<String> {
    cmds.iter().map(|c| c.canonical_form().to_string()).collect()
}

fn predicates(raw: &[String]) -> PyResult<BTreeSet<Predicate>> {
    raw.iter().map(|p| p.parse::<Predicate>().map_err(|e| err(format!("{p}: {e}")))).collect()
}

/// Extracts canonical commands from program-style plan text. Returns
/// `(commands, diagnostics)`.
#[pyfunction]
fn parse_plan(text: &str) -> (Vec<String>, Vec<String>) {
    let parsed = plan::parse_plan_text(text, PlanOrigin::generated(0));
    (canonical(&parsed.plan.commands), parsed.diagnostics.into_iter().map(|d| d.message).collect())
}

/// Splits a `--- sample k ---` corpus and parses every sample.
#[pyfunction]
fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    plan::parse_corpus(text)
        .into_iter()
        .map(|(k, s)| canonical(&plan::parse_plan_text(&s, PlanOrigin::generated(k)).plan.commands))
        .collect()
}

/// Deduplicated commands across plans, in first-seen order.
#[pyfunction]
fn extract_unique_commands(plans_in: Vec<Vec<String>>) -> PyResult<Vec<String>> {
    let set = plan::extract_unique_commands(&plans(&plans_in)?).map_err(err)?;
    Ok(set.iter().map(|c| c.canonical_form().to_string()).collect())
}

#[pyclass(module = "vtplan", frozen)]
struct VoteTree {
    inner: tree::VoteTree,
}

#[pymethods]
impl VoteTree {
    #[new]
    fn new(plans_in: Vec<Vec<String>>) -> PyResult<Self> {
        Ok(VoteTree { inner: tree::VoteTree::build(&plans(&plans_in)?).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(VoteTree { inner: tree::VoteTree::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn outline(&self) -> String {
        self.inner.outline()
    }

    /// Vote of the node reached by `path` from the root, or 0 if absent.
    fn vote(&self, path: Vec<String>) -> PyResult<u32> {
        let mut node = self.inner.root();
        for command in commands(&path)? {
            match self.inner.child_by_command(node, command.canonical_form()) {
                Some(child) => node = child,
                None => return Ok(0),
            }
        }
        Ok(self.inner.node(node).vote())
    }

    /// Commands along the highest-voted branch.
    fn greedy_path(&self) -> Vec<String> {
        self.inner
            .greedy_path()
            .into_iter()
            .filter_map(|id| self.inner.node(id).command().map(|c| c.canonical_form().to_string()))
            .collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }

    fn __repr__(&self) -> String {
        let stats = self.inner.stats();
        format!("VoteTree(nodes={}, depth={})", stats.node_count, stats.max_depth)
    }
}

#[pyclass(module = "vtplan", frozen)]
struct Dataset {
    inner: world::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset { inner: world::Dataset::load(path).map_err(err)? })
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.inner.tasks.iter().map(|t| t.name.clone()).collect()
    }

    #[getter]
    fn scenes(&self) -> Vec<String> {
        self.inner.scenes.keys().cloned().collect()
    }

    fn goal_conditions(&self, task: &str) -> PyResult<Vec<String>> {
        let task = self.inner.task(task).ok_or_else(|| err(format!("unknown task {task:?}")))?;
        Ok(task.goal.goal_conditions.iter().map(|p| p.to_string()).collect())
    }

    /// Runs `tree` on `task`'s scene. Returns a dict with `trace` (records),
    /// `termination`, `gcr`, `exec` and `success`.
    #[pyo3(signature = (tree, task, correction = true, random_seed = None, step_limit = DEFAULT_STEP_LIMIT))]
    fn execute<'py>(
        &self,
        py: Python<'py>,
        tree: &VoteTree,
        task: &str,
        correction: bool,
        random_seed: Option<u64>,
        step_limit: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let task = self.inner.task(task).ok_or_else(|| err(format!("unknown task {task:?}")))?;
        let env = self.inner.environment(&task.scene_id).ok_or_else(|| err("task scene missing"))?;
        let mode = ExecutionMode {
            correction: if correction { Correction::WithCorrection } else { Correction::NoCorrection },
            selection: random_seed.map_or(SelectionStrategy::MaxVote, |seed| SelectionStrategy::Random { seed }),
            ..ExecutionMode::default()
        };
        let initial = &self.inner.scenes[&task.scene_id].initial;
        let episode =
            run_episode(&task.name, &task.goal.goal_conditions, &env, initial, &tree.inner, &mode, step_limit)
                .map_err(err)?;
        let gcr = eval::compute_gcr(&episode.achieved, &episode.goal).map_err(err)?;
        #[derive(Serialize)]
        struct Out {
            trace: Vec<vtplan_core::executor::TraceRecord>,
            termination: vtplan_core::executor::TraceEnd,
            gcr: f64,
            exec: f64,
            success: bool,
        }
        let out = Out {
            trace: episode.trace.records(),
            termination: episode.trace.termination,
            gcr,
            exec: eval::compute_exec(&episode.trace).value,
            success: gcr == 1.0,
        };
        to_py(py, &out)
    }
}

#[pyfunction]
fn compute_gcr(achieved: Vec<String>, target: Vec<String>) -> PyResult<f64> {
    eval::compute_gcr(&predicates(&achieved)?, &predicates(&target)?).map_err(err)
}

#[pyfunction]
fn compute_sr(gcrs: Vec<f64>) -> PyResult<f64> {
    eval::compute_sr(&gcrs).map_err(err)
}

/// Executability of a JSONL trace; an empty trace scores 0.
#[pyfunction]
fn compute_exec(trace_jsonl: &str) -> PyResult<f64> {
    Ok(eval::exec_from_records(&parse_trace_jsonl(trace_jsonl).map_err(err)?).value)
}

/// Side-by-side redundancy report of two JSONL traces.
#[pyfunction]
#[pyo3(signature = (trace_a, trace_b, label_a = "a", label_b = "b"))]
fn plan_diff<'py>(
    py: Python<'py>,
    trace_a: &str,
    trace_b: &str,
    label_a: &str,
    label_b: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let a = parse_trace_jsonl(trace_a).map_err(err)?;
    let b = parse_trace_jsonl(trace_b).map_err(err)?;
    to_py(py, &eval::plan_diff_report(&a, &b, (label_a, label_b)))
}

/// Runs the suite described by a TOML config file and returns the metrics row.
#[pyfunction]
#[pyo3(signature = (config_path, master_seed = None, output_dir = None))]
fn run_suite<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    master_seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = RunConfig::load(&config_path).map_err(err)?;
    if master_seed.is_some() {
        config.master_seed = master_seed;
    }
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    let report = py.detach(|| eval::run_suite(&config)).map_err(err)?;
    to_py(py, &report.row)
}

#[pymodule]
fn vtplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<VoteTree>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(parse_plan, m)?)?;
    m.add_function(wrap_pyfunction!(parse_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(extract_unique_commands, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gcr, m)?)?;
    m.add_function(wrap_pyfunction!(compute_sr, m)?)?;
    m.add_function(wrap_pyfunction!(compute_exec, m)?)?;
    m.add_function(wrap_pyfunction!(plan_diff, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
