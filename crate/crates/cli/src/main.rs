use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vtplan_core::eval::{
    build_provider, compute_exec, compute_gcr, plan_diff_report, recompute_metrics, render_summary, run_suite_with,
    RunConfig,
};
use vtplan_core::executor::{parse_trace_jsonl, run_episode, Correction, ExecutionMode, DEFAULT_STEP_LIMIT};
use vtplan_core::plan::{parse_corpus, parse_plan_text, PlanOrigin};
use vtplan_core::prompt::RecordingProvider;
use vtplan_core::tree::{SelectionStrategy, VoteTree};
use vtplan_core::world::Dataset;

#[derive(Parser)]
#[command(name = "vtplan", version, about = "Vote-tree planning over a symbolic household world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full suite described by a RunConfig file.
    Run {
        config: PathBuf,
        /// Overrides `master_seed` from the file.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Overrides `output_dir` from the file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Aggregate a corpus of plan samples into a serialized vote tree.
    BuildTree {
        corpus: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Print an indented outline instead of JSON.
        #[arg(long)]
        outline: bool,
    },
    /// Execute a serialized tree in a scene and print the trace.
    Execute {
        tree: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Task whose scene and goal are used.
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = Mode::WithCorrection)]
        mode: Mode,
        /// Seed for random child selection; max-vote selection when omitted.
        #[arg(long)]
        random_seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: usize,
    },
    /// Recompute the metrics table from a run's output directory.
    Metrics { dir: PathBuf },
    /// Side-by-side report of two traces of the same task.
    Diff {
        trace_a: PathBuf,
        trace_b: PathBuf,
        #[arg(long, default_value = "a")]
        label_a: String,
        #[arg(long, default_value = "b")]
        label_b: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the configured provider over the suite and store every response as a replay fixture.
    Record {
        config: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        master_seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    WithCorrection,
    NoCorrection,
}

fn load_config(path: &Path, master_seed: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if master_seed.is_some() {
        config.master_seed = master_seed;
    }
    Ok(config)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, master_seed, output } => {
            let mut config = load_config(&config, master_seed)?;
            if let Some(output) = output {
                config.output_dir = output;
            }
            let dataset = Dataset::load(&config.dataset)?;
            let provider = build_provider(&config, &dataset)?;
            let report = run_suite_with(&config, &dataset, provider.as_ref())?;
            print!("{}", report.summary);
        }
        Command::BuildTree { corpus, output, outline } => {
            let text = read(&corpus)?;
            let mut plans = Vec::new();
            for (k, sample) in parse_corpus(&text) {
                let parsed = parse_plan_text(&sample, PlanOrigin::generated(k));
                for d in &parsed.diagnostics {
                    eprintln!("sample {k}: {}", d.message);
                }
                plans.push(parsed.plan);
            }
            let tree = VoteTree::build(&plans)?;
            let rendered = if outline { tree.outline() } else { tree.to_json() };
            match output {
                Some(path) => fs::write(&path, rendered).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{rendered}"),
            }
        }
        Command::Execute { tree, dataset, task, mode, random_seed, step_limit } => {
            let tree = VoteTree::from_json(&read(&tree)?)?;
            let dataset = Dataset::load(&dataset)?;
            let Some(task) = dataset.task(&task) else { bail!("unknown task {task:?}") };
            let env = dataset.environment(&task.scene_id).context("task scene")?;
            let mode = ExecutionMode {
                correction: match mode {
                    Mode::WithCorrection => Correction::WithCorrection,
                    Mode::NoCorrection => Correction::NoCorrection,
                },
                selection: random_seed.map_or(SelectionStrategy::MaxVote, |seed| SelectionStrategy::Random { seed }),
                ..ExecutionMode::default()
            };
            let initial = &dataset.scenes[&task.scene_id].initial;
            let episode = run_episode(&task.name, &task.goal.goal_conditions, &env, initial, &tree, &mode, step_limit)?;
            print!("{}", episode.trace.to_jsonl());
            let gcr = compute_gcr(&episode.achieved, &episode.goal)?;
            eprintln!(
                "termination={:?} gcr={gcr:.4} exec={:.4} success={}",
                episode.trace.termination,
                compute_exec(&episode.trace).value,
                gcr == 1.0
            );
        }
        Command::Metrics { dir } => {
            let row = recompute_metrics(&dir)?;
            print!("{}", render_summary(&row, &[]));
        }
        Command::Diff { trace_a, trace_b, label_a, label_b, json } => {
            let a = parse_trace_jsonl(&read(&trace_a)?).context("parsing first trace")?;
            let b = parse_trace_jsonl(&read(&trace_b)?).context("parsing second trace")?;
            let report = plan_diff_report(&a, &b, (&label_a, &label_b));
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.text);
            }
        }
        Command::Record { config, fixtures, master_seed } => {
            let config = load_config(&config, master_seed)?;
            let dataset = Dataset::load(&config.dataset)?;
            let recorder = RecordingProvider::new(build_provider(&config, &dataset)?, &fixtures);
            let report = run_suite_with(&config, &dataset, &recorder)?;
            print!("{}", report.summary);
            eprintln!("fixtures written to {}", fixtures.display());
        }
    }
    Ok(())
}
