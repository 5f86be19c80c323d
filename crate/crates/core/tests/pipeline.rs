use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use vtplan_core::eval::{run_suite, EvalError, ProviderConfig, RunConfig};
use vtplan_core::executor::Correction;
use vtplan_core::plan::{parse_corpus, parse_plan_text, Plan, PlanOrigin};
use vtplan_core::prompt::NoiseModel;
use vtplan_core::tree::{NodeId, VoteTree};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Line scan: every `name(...)` call outside `def` lines and `assert(...)`,
/// quotes and spaces dropped, lowercased.
fn scan_calls(sample: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in sample.lines() {
        let line = line.split('#').next().unwrap().trim();
        if line.starts_with("def ") {
            continue;
        }
        let mut rest = line;
        while let Some(open) = rest.find('(') {
            let name_start = rest[..open].rfind(|c: char| !(c.is_alphanumeric() || c == '_')).map_or(0, |i| i + 1);
            let name = rest[..open][name_start..].to_lowercase();
            let close = open + rest[open..].find(')').unwrap();
            if name != "assert" && !name.is_empty() {
                let args: Vec<String> = rest[open + 1..close]
                    .split(',')
                    .map(|a| a.trim().trim_matches('\'').trim_matches('"').trim().to_lowercase().replace(' ', "_"))
                    .collect();
                out.push(format!("{name}({})", args.join(",")));
            }
            rest = &rest[close + 1..];
        }
    }
    out
}

fn corpus() -> Vec<(usize, String)> {
    parse_corpus(&fs::read_to_string(data_dir().join("corpus/microwave_salmon_30.txt")).unwrap())
}

#[test]
fn corpus_parses_like_a_line_scan() {
    let samples = corpus();
    assert_eq!(samples.len(), 30);
    for (k, text) in &samples {
        let parsed = parse_plan_text(text, PlanOrigin::generated(*k));
        let got: Vec<String> = parsed.plan.commands.iter().map(|c| c.canonical_form().to_string()).collect();
        assert_eq!(got, scan_calls(text), "sample {k}");
    }
}

#[test]
fn corpus_tree_votes_match_prefix_scan() {
    let plans: Vec<Plan> =
        corpus().iter().map(|(k, text)| parse_plan_text(text, PlanOrigin::generated(*k)).plan).collect();
    let seqs: Vec<Vec<String>> = corpus().iter().map(|(_, t)| scan_calls(t)).collect();
    let tree = VoteTree::build(&plans).unwrap();
    assert_eq!(tree.node(tree.root()).vote(), 30);

    let mut prefixes: BTreeMap<Vec<String>, u32> = BTreeMap::new();
    for seq in &seqs {
        for len in 1..=seq.len() {
            *prefixes.entry(seq[..len].to_vec()).or_default() += 1;
        }
    }
    let mut stack: Vec<NodeId> = tree.children(tree.root()).collect();
    let mut visited = 0;
    while let Some(id) = stack.pop() {
        let path: Vec<String> = tree.path(id).iter().map(|c| c.canonical_form().to_string()).collect();
        assert_eq!(tree.node(id).vote(), prefixes[&path], "{path:?}");
        visited += 1;
        stack.extend(tree.children(id));
    }
    assert_eq!(visited, prefixes.len());

    // The greedy path follows the majority at every fork.
    let greedy = tree.greedy_path();
    for pair in greedy.windows(2) {
        let best = tree.children(pair[0]).map(|c| tree.node(c).vote()).max().unwrap();
        assert_eq!(tree.node(pair[1]).vote(), best);
    }
}

fn synthetic(drop_prob: f64, out: &std::path::Path) -> RunConfig {
    let mut config = RunConfig {
        master_seed: Some(11),
        dataset: data_dir().join("dataset"),
        output_dir: out.to_path_buf(),
        write_episodes: false,
        provider: ProviderConfig::Synthetic { noise: NoiseModel { drop_prob, swap_prob: 0.1, insert_prob: 0.0 } },
        ..RunConfig::default()
    };
    config.prog.num_samples = 20;
    config.reorder.num_samples = 20;
    config
}

#[test]
fn success_rate_falls_as_drop_probability_rises() {
    let dir = tempfile::tempdir().unwrap();
    let srs: Vec<f64> =
        [0.0, 0.1, 0.2, 0.3].iter().map(|&d| run_suite(&synthetic(d, dir.path())).unwrap().row.sr.mean).collect();
    assert_eq!(srs[0], 1.0);
    for w in srs.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "{srs:?}");
    }
    assert!(srs[3] < srs[0], "{srs:?}");
}

#[test]
fn parallel_and_serial_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = synthetic(0.2, dir.path());
    config.repetitions = 3;
    config.execution.correction = Correction::NoCorrection;
    let serial = run_suite(&config).unwrap();
    config.parallel = true;
    let parallel = run_suite(&config).unwrap();
    assert_eq!(serial.summary, parallel.summary);
    assert_eq!(serial.episodes, parallel.episodes);
}

#[test]
fn episode_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = synthetic(0.0, dir.path());
    config.repetitions = 2;
    config.write_episodes = true;
    config.tasks = vec!["microwave salmon".into()];
    run_suite(&config).unwrap();
    for rep in ["0", "1"] {
        let ep = dir.path().join("episodes/microwave_salmon").join(rep);
        assert!(!fs::read_to_string(ep.join("trace.jsonl")).unwrap().is_empty());
        VoteTree::from_json(&fs::read_to_string(ep.join("tree.json")).unwrap()).unwrap();
    }
    let recomputed = vtplan_core::eval::recompute_metrics(dir.path()).unwrap();
    assert_eq!(recomputed.sr.mean, 1.0);
}

#[test]
fn replay_without_fixtures_aborts_every_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = synthetic(0.0, dir.path());
    config.repetitions = 2;
    config.provider = ProviderConfig::Replay { fixtures: dir.path().join("no-fixtures") };
    match run_suite(&config) {
        Err(EvalError::AllAborted(msg)) => assert!(msg.contains("fixture"), "{msg}"),
        other => panic!("expected every repetition to abort, got {other:?}"),
    }
}

#[test]
fn missing_master_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = synthetic(0.0, dir.path());
    config.master_seed = None;
    assert!(matches!(run_suite(&config), Err(EvalError::Config(_))));
}
