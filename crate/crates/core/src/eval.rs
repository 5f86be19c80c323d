//! Suite orchestration, SR/GCR/Exec metrics, persisted artifacts, and
//! side-by-side plan-diff reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::executor::{
    run_episode, Correction, ExecutionMode, ExecutionTrace, ExecutorError, TerminationRule, TraceEnd, TraceRecord,
    DEFAULT_STEP_LIMIT,
};
use crate::plan::{extract_unique_commands, parse_plan_text, Command, Plan, PlanError, PlanOrigin};
use crate::prompt::{
    format_prog_prompt, format_reorder_prompt, function_name, generate, ActionSignature, ExamplePlan, NoiseModel,
    PlanGenerator, ProviderError, RemoteConfig, RemoteProvider, ReorderDemo, ReplayProvider, SamplingConfig,
    SyntheticProvider, SyntheticTask,
};
use crate::seed::derive_seed;
use crate::tree::{SelectionStrategy, VoteTree};
use crate::world::{Dataset, Predicate, Task, WorldError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("goal condition set is empty")]
    EmptyGoal,
    #[error("cannot aggregate an empty list")]
    EmptyList,
    #[error(transparent)]
    Dataset(#[from] WorldError),
    #[error("task {task:?}: {source}")]
    Provider {
        task: String,
        #[source]
        source: ProviderError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o at {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error("every repetition aborted; first error: {0}")]
    AllAborted(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------- metrics

/// `1 - |g \ g'| / |g|`.
pub fn compute_gcr(achieved: &BTreeSet<Predicate>, target: &BTreeSet<Predicate>) -> Result<f64, EvalError> {
    if target.is_empty() {
        return Err(EvalError::EmptyGoal);
    }
    Ok(gcr_from_counts(target.len(), target.difference(achieved).count()))
}

fn gcr_from_counts(total: usize, missed: usize) -> f64 {
    1.0 - missed as f64 / total as f64
}

/// Fraction of episodes whose GCR is exactly 1.
pub fn compute_sr(gcrs: &[f64]) -> Result<f64, EvalError> {
    if gcrs.is_empty() {
        return Err(EvalError::EmptyList);
    }
    Ok(gcrs.iter().filter(|&&g| g == 1.0).count() as f64 / gcrs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecScore {
    pub value: f64,
    /// Set when nothing was attempted.
    pub diagnostic: Option<String>,
}

/// Successful steps over attempted steps; an empty trace scores 0.
pub fn compute_exec(trace: &ExecutionTrace) -> ExecScore {
    exec_from_records(&trace.records())
}

pub fn exec_from_records(records: &[TraceRecord]) -> ExecScore {
    let successes = records.iter().filter(|r| r.succeeded()).count();
    exec_from_counts(successes, records.len())
}

fn exec_from_counts(successes: usize, attempts: usize) -> ExecScore {
    if attempts == 0 {
        return ExecScore { value: 0.0, diagnostic: Some("no commands were attempted".into()) };
    }
    ExecScore { value: successes as f64 / attempts as f64, diagnostic: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<MeanStd, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptyList);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: String,
    pub sr: f64,
    pub gcr: f64,
    pub exec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method_label: String,
    pub sr: MeanStd,
    pub gcr: MeanStd,
    pub exec: MeanStd,
    pub runs: usize,
    pub per_task: Vec<TaskMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Executed,
    /// No generated sample yielded a command.
    EmptyCommandPool,
    /// Every reordered sample was empty.
    NoReorderedPlans,
}

/// Integer counts of one episode; every metric is recomputable from these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub rep: usize,
    pub task: String,
    pub status: EpisodeStatus,
    pub goal_total: usize,
    pub goal_missed: usize,
    pub steps: usize,
    pub successes: usize,
    pub termination: Option<TraceEnd>,
    pub unique_commands: usize,
    pub reordered_plans: usize,
    pub tree_nodes: usize,
    pub diagnostics: Vec<String>,
}

impl EpisodeRecord {
    pub fn gcr(&self) -> f64 {
        gcr_from_counts(self.goal_total, self.goal_missed)
    }

    pub fn success(&self) -> bool {
        self.goal_missed == 0
    }

    pub fn exec(&self) -> f64 {
        exec_from_counts(self.successes, self.steps).value
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Per repetition: SR over tasks, mean GCR and Exec over tasks; then mean
/// and population std across repetitions.
pub fn aggregate(method_label: &str, episodes: &[EpisodeRecord]) -> Result<MetricsRow, EvalError> {
    let mut by_rep: BTreeMap<usize, Vec<&EpisodeRecord>> = BTreeMap::new();
    let mut task_order: Vec<&str> = Vec::new();
    for e in episodes {
        by_rep.entry(e.rep).or_default().push(e);
        if !task_order.contains(&e.task.as_str()) {
            task_order.push(&e.task);
        }
    }
    if by_rep.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let (mut sr, mut gcr, mut exec) = (Vec::new(), Vec::new(), Vec::new());
    for eps in by_rep.values() {
        sr.push(mean(eps.iter().map(|e| if e.success() { 1.0 } else { 0.0 })));
        gcr.push(mean(eps.iter().map(|e| e.gcr())));
        exec.push(mean(eps.iter().map(|e| e.exec())));
    }
    let per_task = task_order
        .iter()
        .map(|&task| {
            let eps = || episodes.iter().filter(move |e| e.task == task);
            TaskMetrics {
                task: task.to_string(),
                sr: mean(eps().map(|e| if e.success() { 1.0 } else { 0.0 })),
                gcr: mean(eps().map(EpisodeRecord::gcr)),
                exec: mean(eps().map(EpisodeRecord::exec)),
            }
        })
        .collect();
    Ok(MetricsRow {
        method_label: method_label.to_string(),
        sr: MeanStd::of(&sr)?,
        gcr: MeanStd::of(&gcr)?,
        exec: MeanStd::of(&exec)?,
        runs: by_rep.len(),
        per_task,
    })
}

// ---------------------------------------------------------------- configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Synthetic {
        #[serde(default)]
        noise: NoiseModel,
    },
    Replay {
        fixtures: PathBuf,
    },
    Remote(RemoteConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Synthetic { noise: NoiseModel::zero() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    #[default]
    MaxVote,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    pub correction: Correction,
    pub selection: SelectionKind,
    pub termination: TerminationRule,
    pub step_limit: usize,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            correction: Correction::WithCorrection,
            selection: SelectionKind::MaxVote,
            termination: TerminationRule::ChildlessSuccess,
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

impl ExecutionConfig {
    pub fn mode(&self, selection_seed: u64) -> ExecutionMode {
        let selection = match self.selection {
            SelectionKind::MaxVote => SelectionStrategy::MaxVote,
            SelectionKind::Random => SelectionStrategy::Random { seed: selection_seed },
        };
        ExecutionMode { correction: self.correction, selection, termination: self.termination }
    }
}

/// Everything a suite run depends on besides fixtures and caches. Every
/// field has a default; `master_seed` must be set to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: Option<u64>,
    pub method_label: String,
    pub dataset: PathBuf,
    /// Restrict to these task names; empty means all evaluation tasks.
    pub tasks: Vec<String>,
    /// Restrict to these scene ids; empty means all scenes.
    pub scenes: Vec<String>,
    /// Also evaluate the in-context example tasks.
    pub include_examples: bool,
    /// Reorder demonstrations; defaults to `reorder_demos.json` next to the dataset manifest.
    pub reorder_demos: Option<PathBuf>,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    /// Write per-episode traces and trees.
    pub write_episodes: bool,
    pub parallel: bool,
    pub provider: ProviderConfig,
    #[serde(deserialize_with = "prog_sampling")]
    pub prog: SamplingConfig,
    #[serde(deserialize_with = "reorder_sampling")]
    pub reorder: SamplingConfig,
    pub execution: ExecutionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: None,
            method_label: "vote-tree-planner".into(),
            dataset: PathBuf::from("data/dataset"),
            tasks: Vec::new(),
            scenes: Vec::new(),
            include_examples: false,
            reorder_demos: None,
            repetitions: 10,
            output_dir: PathBuf::from("results"),
            write_episodes: true,
            parallel: false,
            provider: ProviderConfig::default(),
            prog: SamplingConfig::prog_default(),
            reorder: SamplingConfig::reorder_default(),
            execution: ExecutionConfig::default(),
        }
    }
}

/// Partial sampling tables override the stage's own defaults field by field.
fn merged_sampling<'de, D: Deserializer<'de>>(d: D, base: SamplingConfig) -> Result<SamplingConfig, D::Error> {
    let overrides = serde_json::Value::deserialize(d)?;
    let serde_json::Value::Object(overrides) = overrides else {
        return Err(D::Error::custom("sampling settings must be a table"));
    };
    let mut value = serde_json::to_value(base).map_err(D::Error::custom)?;
    let fields = value.as_object_mut().expect("struct serializes to an object");
    for (key, v) in overrides {
        if !fields.contains_key(&key) {
            return Err(D::Error::custom(format!("unknown sampling field `{key}`")));
        }
        fields.insert(key, v);
    }
    serde_json::from_value(value).map_err(D::Error::custom)
}

fn prog_sampling<'de, D: Deserializer<'de>>(d: D) -> Result<SamplingConfig, D::Error> {
    merged_sampling(d, SamplingConfig::prog_default())
}

fn reorder_sampling<'de, D: Deserializer<'de>>(d: D) -> Result<SamplingConfig, D::Error> {
    merged_sampling(d, SamplingConfig::reorder_default())
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads a TOML file; relative paths inside are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let config = RunConfig::from_toml(&text)?;
        Ok(config.rebased(path.parent().unwrap_or(Path::new("."))))
    }

    pub fn rebased(mut self, base: &Path) -> RunConfig {
        self.dataset = resolve(base, &self.dataset);
        self.output_dir = resolve(base, &self.output_dir);
        self.reorder_demos = self.reorder_demos.map(|p| resolve(base, &p));
        match &mut self.provider {
            ProviderConfig::Replay { fixtures } => *fixtures = resolve(base, fixtures),
            ProviderConfig::Remote(remote) => remote.cache_dir = resolve(base, &remote.cache_dir),
            ProviderConfig::Synthetic { .. } => {}
        }
        self
    }

    fn validate(&self) -> Result<u64, EvalError> {
        let seed = self.master_seed.ok_or_else(|| EvalError::Config("master_seed is required to run".into()))?;
        if self.repetitions == 0 {
            return Err(EvalError::Config("repetitions must be positive".into()));
        }
        if self.execution.step_limit == 0 {
            return Err(EvalError::Config("step_limit must be positive".into()));
        }
        if self.prog.num_samples == 0 || self.reorder.num_samples == 0 {
            return Err(EvalError::Config("num_samples must be positive".into()));
        }
        if let ProviderConfig::Synthetic { noise } = &self.provider {
            noise.validate().map_err(EvalError::Config)?;
        }
        Ok(seed)
    }
}

/// Per-repetition seeds, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub prog: u64,
    pub reorder: u64,
    pub selection: u64,
}

impl StageSeeds {
    pub fn for_repetition(master_seed: u64, rep: usize) -> StageSeeds {
        let rep = rep as u64;
        StageSeeds {
            prog: derive_seed(master_seed, "prog", rep),
            reorder: derive_seed(master_seed, "reorder", rep),
            selection: derive_seed(master_seed, "selection", rep),
        }
    }
}

// ---------------------------------------------------------------- suite

/// Synthetic seed plans for every task of a dataset.
pub fn synthetic_provider(dataset: &Dataset, noise: NoiseModel) -> SyntheticProvider {
    let mut provider = SyntheticProvider::new(noise);
    for task in &dataset.tasks {
        provider.tasks.insert(
            task.name.clone(),
            SyntheticTask { seed_plan: task.goal_plan.clone(), distractors: task.distractors.clone() },
        );
    }
    provider
}

pub fn build_provider(config: &RunConfig, dataset: &Dataset) -> Result<Box<dyn PlanGenerator>, EvalError> {
    Ok(match &config.provider {
        ProviderConfig::Synthetic { noise } => Box::new(synthetic_provider(dataset, *noise)),
        ProviderConfig::Replay { fixtures } => Box::new(ReplayProvider::new(fixtures.clone())),
        ProviderConfig::Remote(remote) => {
            Box::new(RemoteProvider::from_env(remote.clone()).map_err(|e| EvalError::Config(e.to_string()))?)
        }
    })
}

pub fn load_reorder_demos(path: &Path) -> Result<Vec<ReorderDemo>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

/// Fixed inputs shared by all episodes of a suite.
#[derive(Debug, Clone)]
pub struct SuiteContext<'a> {
    pub dataset: &'a Dataset,
    pub actions: Vec<ActionSignature>,
    pub examples: Vec<ExamplePlan>,
    pub demos: Vec<ReorderDemo>,
    pub prog: SamplingConfig,
    pub reorder: SamplingConfig,
    pub execution: ExecutionConfig,
}

impl<'a> SuiteContext<'a> {
    pub fn new(config: &RunConfig, dataset: &'a Dataset) -> Result<SuiteContext<'a>, EvalError> {
        let demos_path = config.reorder_demos.clone().unwrap_or_else(|| dataset.root.join("reorder_demos.json"));
        let demos = if config.reorder_demos.is_some() || demos_path.exists() {
            load_reorder_demos(&demos_path)?
        } else {
            Vec::new()
        };
        Ok(SuiteContext {
            dataset,
            actions: ActionSignature::from_catalog(&dataset.catalog),
            examples: dataset
                .example_tasks()
                .iter()
                .map(|t| ExamplePlan { instruction: t.name.clone(), commands: t.goal_plan.commands.clone() })
                .collect(),
            demos,
            prog: config.prog,
            reorder: config.reorder,
            execution: config.execution,
        })
    }
}

/// One task's pipeline output.
#[derive(Debug, Clone)]
pub struct EpisodeArtifacts {
    pub record: EpisodeRecord,
    pub trace: Option<ExecutionTrace>,
    pub tree: Option<VoteTree>,
}

/// Prog prompt -> samples -> command pool -> reorder prompt -> samples ->
/// vote tree -> execution. Only provider failures are errors; an empty pool
/// or an empty reordering is a failed episode.
pub fn run_task_episode(
    ctx: &SuiteContext,
    task: &Task,
    rep: usize,
    seeds: StageSeeds,
    provider: &dyn PlanGenerator,
) -> Result<EpisodeArtifacts, EvalError> {
    let provider_error = |source| EvalError::Provider { task: task.name.clone(), source };
    let scene = &ctx.dataset.scenes[&task.scene_id];
    let env = ctx.dataset.environment(&task.scene_id).expect("task scene is loaded");
    let goal = &task.goal.goal_conditions;
    let mut record = EpisodeRecord {
        rep,
        task: task.name.clone(),
        status: EpisodeStatus::Executed,
        goal_total: goal.len(),
        goal_missed: goal.len(),
        steps: 0,
        successes: 0,
        termination: None,
        unique_commands: 0,
        reordered_plans: 0,
        tree_nodes: 0,
        diagnostics: Vec::new(),
    };

    let objects: Vec<String> = scene.objects.ids().map(str::to_string).collect();
    let prog_prompt = format_prog_prompt(&task.name, &ctx.actions, &objects, &ctx.examples)
        .map_err(|e| EvalError::Config(format!("task {:?}: {e}", task.name)))?;
    let prog_texts = generate(provider, &prog_prompt, &ctx.prog.with_seed(seeds.prog)).map_err(provider_error)?;
    let mut plans = Vec::with_capacity(prog_texts.len());
    for (k, text) in prog_texts.iter().enumerate() {
        let parsed = parse_plan_text(text, PlanOrigin::generated(k));
        record.diagnostics.extend(parsed.diagnostics.iter().map(|d| format!("prog sample {k}: {}", d.message)));
        plans.push(parsed.plan);
    }
    let unique = match extract_unique_commands(&plans) {
        Ok(unique) => unique,
        Err(PlanError::EmptyCommandPool) => {
            record.status = EpisodeStatus::EmptyCommandPool;
            record.diagnostics.push(PlanError::EmptyCommandPool.to_string());
            return Ok(EpisodeArtifacts { record, trace: None, tree: None });
        }
        Err(e) => unreachable!("generated plans are tagged as generated: {e}"),
    };
    record.unique_commands = unique.len();

    let reorder_prompt = format_reorder_prompt(&unique, &task.name, &ctx.demos).expect("pool is non-empty");
    let reorder_texts =
        generate(provider, &reorder_prompt, &ctx.reorder.with_seed(seeds.reorder)).map_err(provider_error)?;
    let mut reordered = Vec::with_capacity(reorder_texts.len());
    for (k, text) in reorder_texts.iter().enumerate() {
        let parsed = parse_plan_text(text, PlanOrigin::reordered(k));
        record.diagnostics.extend(parsed.diagnostics.iter().map(|d| format!("reorder sample {k}: {}", d.message)));
        match Plan::new(parsed.plan.commands, PlanOrigin::reordered(k)) {
            Ok(plan) => reordered.push(plan),
            Err(e) => record.diagnostics.push(format!("skipped: {e}")),
        }
    }
    record.reordered_plans = reordered.len();
    let Ok(tree) = VoteTree::build(&reordered) else {
        record.status = EpisodeStatus::NoReorderedPlans;
        return Ok(EpisodeArtifacts { record, trace: None, tree: None });
    };
    record.tree_nodes = tree.stats().node_count;

    let mode = ctx.execution.mode(derive_seed(seeds.selection, &task.name, 0));
    let episode = run_episode(&task.name, goal, &env, &scene.initial, &tree, &mode, ctx.execution.step_limit)?;
    record.goal_missed = episode.goals_missed();
    record.steps = episode.trace.steps.len();
    record.successes = episode.trace.steps.iter().filter(|s| s.succeeded()).count();
    record.termination = Some(episode.trace.termination);
    if let Some(d) = compute_exec(&episode.trace).diagnostic {
        record.diagnostics.push(d);
    }
    Ok(EpisodeArtifacts { record, trace: Some(episode.trace), tree: Some(tree) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortedRun {
    pub rep: usize,
    pub error: String,
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsLine {
    Episode(EpisodeRecord),
    Aborted(AbortedRun),
    Summary(MetricsRow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub row: MetricsRow,
    pub episodes: Vec<EpisodeRecord>,
    pub aborted: Vec<AbortedRun>,
    pub summary: String,
}

pub fn select_tasks<'d>(config: &RunConfig, dataset: &'d Dataset) -> Result<Vec<&'d Task>, EvalError> {
    for name in &config.tasks {
        if dataset.task(name).is_none() {
            return Err(EvalError::Config(format!("unknown task {name:?}")));
        }
    }
    for scene in &config.scenes {
        if !dataset.scenes.contains_key(scene) {
            return Err(EvalError::Config(format!("unknown scene {scene:?}")));
        }
    }
    let pool = if config.include_examples { dataset.tasks.iter().collect() } else { dataset.evaluation_tasks() };
    let tasks: Vec<&Task> = pool
        .into_iter()
        .filter(|t| config.tasks.is_empty() || config.tasks.contains(&t.name))
        .filter(|t| config.scenes.is_empty() || config.scenes.contains(&t.scene_id))
        .collect();
    if tasks.is_empty() {
        return Err(EvalError::Config("task selection is empty".into()));
    }
    Ok(tasks)
}

/// Loads the dataset, builds the configured provider, and runs the suite.
pub fn run_suite(config: &RunConfig) -> Result<SuiteReport, EvalError> {
    let dataset = Dataset::load(&config.dataset)?;
    let provider = build_provider(config, &dataset)?;
    run_suite_with(config, &dataset, provider.as_ref())
}

/// Runs every repetition and writes `summary.txt`, `metrics.jsonl`, and
/// (optionally) `episodes/<task>/<rep>/{trace.jsonl,tree.json}` under the
/// output directory. A provider failure aborts its repetition.
pub fn run_suite_with(
    config: &RunConfig,
    dataset: &Dataset,
    provider: &dyn PlanGenerator,
) -> Result<SuiteReport, EvalError> {
    let master_seed = config.validate()?;
    let tasks = select_tasks(config, dataset)?;
    let ctx = SuiteContext::new(config, dataset)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(io_error(out))?;

    let mut episodes = Vec::new();
    let mut aborted = Vec::new();
    for rep in 0..config.repetitions {
        let seeds = StageSeeds::for_repetition(master_seed, rep);
        let run = |task: &&Task| run_task_episode(&ctx, task, rep, seeds, provider);
        let results: Vec<Result<EpisodeArtifacts, EvalError>> =
            if config.parallel { tasks.par_iter().map(run).collect() } else { tasks.iter().map(run).collect() };
        let results: Result<Vec<EpisodeArtifacts>, EvalError> = results.into_iter().collect();
        match results {
            Ok(artifacts) => {
                for a in artifacts {
                    if config.write_episodes {
                        write_episode(out, &a)?;
                    }
                    episodes.push(a.record);
                }
            }
            Err(e @ EvalError::Provider { .. }) => aborted.push(AbortedRun { rep, error: e.to_string() }),
            Err(e) => return Err(e),
        }
    }

    if episodes.is_empty() {
        let first = aborted.first().map(|a| a.error.clone()).unwrap_or_default();
        return Err(EvalError::AllAborted(first));
    }
    let row = aggregate(&config.method_label, &episodes)?;
    let summary = render_summary(&row, &aborted);

    let mut jsonl = String::new();
    let lines = episodes
        .iter()
        .cloned()
        .map(MetricsLine::Episode)
        .chain(aborted.iter().cloned().map(MetricsLine::Aborted))
        .chain(std::iter::once(MetricsLine::Summary(row.clone())));
    for line in lines {
        jsonl.push_str(&serde_json::to_string(&line).expect("metrics line serializes"));
        jsonl.push('\n');
    }
    write_file(&out.join("metrics.jsonl"), &jsonl)?;
    write_file(&out.join("summary.txt"), &summary)?;
    Ok(SuiteReport { row, episodes, aborted, summary })
}

fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    fs::write(path, contents).map_err(io_error(path))
}

fn write_episode(out: &Path, artifacts: &EpisodeArtifacts) -> Result<(), EvalError> {
    let record = &artifacts.record;
    let dir = out.join("episodes").join(function_name(&record.task)).join(record.rep.to_string());
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let trace = artifacts.trace.as_ref().map(ExecutionTrace::to_jsonl).unwrap_or_default();
    write_file(&dir.join("trace.jsonl"), &trace)?;
    if let Some(tree) = &artifacts.tree {
        write_file(&dir.join("tree.json"), &tree.to_json())?;
    }
    Ok(())
}

/// Plain-text results table.
pub fn render_summary(row: &MetricsRow, aborted: &[AbortedRun]) -> String {
    let cell = |m: &MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
    let width = row.method_label.chars().count().max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<17}  {:<17}  {:<17}  runs", "method", "SR", "GCR", "Exec");
    let _ = writeln!(
        out,
        "{:<width$}  {:<17}  {:<17}  {:<17}  {}",
        row.method_label,
        cell(&row.sr),
        cell(&row.gcr),
        cell(&row.exec),
        row.runs
    );
    let task_width = row.per_task.iter().map(|t| t.task.chars().count()).max().unwrap_or(4).max(4);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<task_width$}  {:<6}  {:<6}  {:<6}", "task", "SR", "GCR", "Exec");
    for t in &row.per_task {
        let _ = writeln!(out, "{:<task_width$}  {:.4}  {:.4}  {:.4}", t.task, t.sr, t.gcr, t.exec);
    }
    if !aborted.is_empty() {
        let _ = writeln!(out);
        for a in aborted {
            let _ = writeln!(out, "aborted repetition {}: {}", a.rep, a.error);
        }
    }
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

/// Reads `metrics.jsonl` from an output directory and recomputes the
/// metrics row from the per-episode counts.
pub fn recompute_metrics(dir: impl AsRef<Path>) -> Result<MetricsRow, EvalError> {
    let path = dir.as_ref().join("metrics.jsonl");
    let text = fs::read_to_string(&path).map_err(io_error(&path))?;
    let mut episodes = Vec::new();
    let mut label = None;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: MetricsLine = serde_json::from_str(line)
            .map_err(|e| EvalError::Artifact { path: path.clone(), message: format!("line {}: {e}", n + 1) })?;
        match parsed {
            MetricsLine::Episode(e) => episodes.push(e),
            MetricsLine::Summary(row) => label = Some(row.method_label),
            MetricsLine::Aborted(_) => {}
        }
    }
    aggregate(label.as_deref().unwrap_or("unknown"), &episodes)
}

// ---------------------------------------------------------------- plan diff

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    /// Succeeded, not redundant, and present in the other trace.
    SharedNecessary,
    /// Succeeded, not redundant, and absent from the other trace.
    Unique,
    /// Succeeded but changed nothing the task needs.
    Redundant,
    /// Failed to execute.
    Erroneous,
}

impl LineClass {
    pub fn is_flagged(self) -> bool {
        matches!(self, LineClass::Redundant | LineClass::Erroneous)
    }

    fn marker(self) -> &'static str {
        match self {
            LineClass::SharedNecessary => "",
            LineClass::Unique => " [unique]",
            LineClass::Redundant => " [redundant]",
            LineClass::Erroneous => " [erroneous]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSide {
    pub label: String,
    pub length: usize,
    /// Steps whose command already appeared earlier in the same trace.
    pub duplicates: usize,
    pub redundant: usize,
    pub erroneous: usize,
    pub classes: Vec<LineClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub a: Option<usize>,
    pub b: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDiffReport {
    pub a: DiffSide,
    pub b: DiffSide,
    pub rows: Vec<DiffRow>,
    /// Label of the strictly shorter trace, if any.
    pub shorter: Option<String>,
    pub text: String,
}

impl PlanDiffReport {
    pub fn flagged(&self) -> usize {
        self.a.classes.iter().chain(&self.b.classes).filter(|c| c.is_flagged()).count()
    }
}

/// Forward actions whose inverse, applied right after with nothing touching
/// the object in between, undoes them.
const INVERSE_PAIRS: [(&str, &str); 4] =
    [("open", "close"), ("switchon", "switchoff"), ("grab", "release"), ("sit", "standup")];

fn touches(other: &Command, command: &Command) -> bool {
    other.action() == command.action() || command.args().iter().any(|a| other.mentions(a))
}

/// Intrinsic flags of one trace: failed steps are erroneous; a successful
/// step is redundant if it repeats an earlier successful identical command
/// with no successful step in between touching it, or if it is half of a
/// forward/inverse pair on the same object with nothing in between
/// mentioning the object.
fn intrinsic_flags(records: &[TraceRecord]) -> Vec<Option<LineClass>> {
    let mut flags: Vec<Option<LineClass>> =
        records.iter().map(|r| (!r.succeeded()).then_some(LineClass::Erroneous)).collect();
    let ok: Vec<usize> = (0..records.len()).filter(|&i| records[i].succeeded()).collect();
    for (pos, &i) in ok.iter().enumerate() {
        let cmd = &records[i].command;
        for &j in ok[..pos].iter().rev() {
            if records[j].command == *cmd {
                flags[i] = Some(LineClass::Redundant);
                break;
            }
            if touches(&records[j].command, cmd) {
                break;
            }
        }
        let Some((_, inverse)) = INVERSE_PAIRS.iter().find(|(fwd, _)| *fwd == cmd.action()) else { continue };
        for &m in &ok[pos + 1..] {
            let next = &records[m].command;
            if next.action() == *inverse && next.args() == cmd.args() {
                flags[i] = Some(LineClass::Redundant);
                flags[m] = Some(LineClass::Redundant);
                break;
            }
            if cmd.args().iter().any(|a| next.mentions(a)) {
                break;
            }
        }
    }
    flags
}

fn lcs_rows(a: &[TraceRecord], b: &[TraceRecord]) -> Vec<DiffRow> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if a[i].command == b[j].command { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut rows = Vec::new();
    while i < n || j < m {
        if i < n && j < m && a[i].command == b[j].command {
            rows.push(DiffRow { a: Some(i), b: Some(j) });
            i += 1;
            j += 1;
        } else if j == m || (i < n && dp[i + 1][j] >= dp[i][j + 1]) {
            rows.push(DiffRow { a: Some(i), b: None });
            i += 1;
        } else {
            rows.push(DiffRow { a: None, b: Some(j) });
            j += 1;
        }
    }
    rows
}

fn side(label: &str, records: &[TraceRecord], matched: &BTreeSet<usize>) -> DiffSide {
    let classes: Vec<LineClass> = intrinsic_flags(records)
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.unwrap_or(if matched.contains(&i) { LineClass::SharedNecessary } else { LineClass::Unique }))
        .collect();
    let mut seen = BTreeSet::new();
    let duplicates = records.iter().filter(|r| !seen.insert(r.command.canonical_form())).count();
    DiffSide {
        label: label.to_string(),
        length: records.len(),
        duplicates,
        redundant: classes.iter().filter(|&&c| c == LineClass::Redundant).count(),
        erroneous: classes.iter().filter(|&&c| c == LineClass::Erroneous).count(),
        classes,
    }
}

/// Aligns two traces of the same task by longest common subsequence and
/// classifies every step.
pub fn plan_diff_report(a: &[TraceRecord], b: &[TraceRecord], labels: (&str, &str)) -> PlanDiffReport {
    let rows = lcs_rows(a, b);
    let matched_a: BTreeSet<usize> = rows.iter().filter(|r| r.b.is_some()).filter_map(|r| r.a).collect();
    let matched_b: BTreeSet<usize> = rows.iter().filter(|r| r.a.is_some()).filter_map(|r| r.b).collect();
    let side_a = side(labels.0, a, &matched_a);
    let side_b = side(labels.1, b, &matched_b);
    let shorter = match side_a.length.cmp(&side_b.length) {
        std::cmp::Ordering::Less => Some(side_a.label.clone()),
        std::cmp::Ordering::Greater => Some(side_b.label.clone()),
        std::cmp::Ordering::Equal => None,
    };

    let cell = |records: &[TraceRecord], s: &DiffSide, idx: Option<usize>| match idx {
        Some(i) => format!("{}{}", records[i].command, s.classes[i].marker()),
        None => String::new(),
    };
    let left: Vec<String> = rows.iter().map(|r| cell(a, &side_a, r.a)).collect();
    let width = left.iter().map(|s| s.chars().count()).chain([side_a.label.chars().count()]).max().unwrap_or(0);
    let mut text = String::new();
    for s in [&side_a, &side_b] {
        let _ = writeln!(
            text,
            "{}: {} steps, {} duplicate(s), {} redundant, {} erroneous",
            s.label, s.length, s.duplicates, s.redundant, s.erroneous
        );
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "{:<width$} | {}", side_a.label, side_b.label);
    for (row, l) in rows.iter().zip(&left) {
        let _ = writeln!(text, "{:<width$} | {}", l, cell(b, &side_b, row.b).trim_end());
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "shorter: {}", shorter.as_deref().unwrap_or("neither"));

    PlanDiffReport { a: side_a, b: side_b, rows, shorter, text }
}
