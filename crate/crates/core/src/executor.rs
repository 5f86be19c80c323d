//! Executes a vote tree against an environment.
//!
//! With correction, the executor follows the highest-voted child; a failed
//! child is removed so the next-best sibling is tried, and a node whose
//! children are all exhausted is itself removed from its parent, one level at
//! a time, until an ancestor with untried children (or the root) is reached.
//! World effects of commands that already ran are kept when backtracking.
//!
//! Without correction, the executor walks the selected path from the root to
//! a leaf and runs every command on it whatever the outcome.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::Command;
use crate::tree::{ChildSelector, NodeId, SelectionStrategy, VoteTree};
use crate::world::{state_diff, Environment, ExecFailure, FailureReason, Predicate, WorldState};

pub const DEFAULT_STEP_LIMIT: usize = 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("step limit must be positive")]
    InvalidStepLimit,
    #[error("executor removed a node that was not attached: {0}")]
    Tree(#[from] crate::tree::TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    NoCorrection,
    #[default]
    WithCorrection,
}

/// When a successful descent ends the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationRule {
    /// Only on reaching a node without children.
    #[default]
    ChildlessSuccess,
    /// Also on reaching a node where some aggregated plan ended.
    EndMarkerOrChildless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionMode {
    pub correction: Correction,
    pub selection: SelectionStrategy,
    pub termination: TerminationRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEnd {
    Completed,
    Exhausted,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub idx: usize,
    pub command: Command,
    /// `None` on success.
    pub failure: Option<ExecFailure>,
    /// Canonical commands from the root down to the attempted node.
    pub node_path: Vec<String>,
}

impl TraceStep {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    pub final_state: WorldState,
    pub termination: TraceEnd,
}

/// One line of a serialized trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub idx: usize,
    pub command: Command,
    pub outcome: StepOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailureReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Success,
    Failure,
}

impl TraceRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == StepOutcome::Success
    }
}

impl From<&TraceStep> for TraceRecord {
    fn from(step: &TraceStep) -> Self {
        TraceRecord {
            idx: step.idx,
            command: step.command.clone(),
            outcome: if step.succeeded() { StepOutcome::Success } else { StepOutcome::Failure },
            reason: step.failure.as_ref().map(|f| f.reason),
        }
    }
}

impl ExecutionTrace {
    pub fn records(&self) -> Vec<TraceRecord> {
        self.steps.iter().map(TraceRecord::from).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        records_to_jsonl(&self.records())
    }
}

pub fn records_to_jsonl(records: &[TraceRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n").collect()
}

pub fn parse_trace_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Something that can attempt commands, e.g. a simulated world or a test script.
pub trait Actuator {
    fn attempt(&mut self, command: &Command) -> Result<(), ExecFailure>;
}

/// Runs commands against an [`Environment`], threading the world state.
#[derive(Debug, Clone)]
pub struct WorldActuator<'a> {
    env: &'a Environment,
    state: WorldState,
}

impl<'a> WorldActuator<'a> {
    pub fn new(env: &'a Environment, initial: WorldState) -> Self {
        WorldActuator { env, state: initial }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn into_state(self) -> WorldState {
        self.state
    }
}

impl Actuator for WorldActuator<'_> {
    fn attempt(&mut self, command: &Command) -> Result<(), ExecFailure> {
        self.state = self.env.execute(&self.state, command)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub steps: Vec<TraceStep>,
    pub termination: TraceEnd,
}

struct Run<'t, A> {
    tree: &'t mut VoteTree,
    actuator: A,
    selector: ChildSelector,
    steps: Vec<TraceStep>,
}

impl<A: Actuator> Run<'_, A> {
    fn attempt(&mut self, child: NodeId) -> bool {
        let command = self.tree.node(child).command().expect("non-root node").clone();
        let failure = self.actuator.attempt(&command).err();
        let ok = failure.is_none();
        self.steps.push(TraceStep {
            idx: self.steps.len(),
            node_path: self.tree.path(child).iter().map(|c| c.canonical_form().to_string()).collect(),
            command,
            failure,
        });
        ok
    }
}

/// Drives `tree` with `actuator`. In correction mode the tree is pruned as
/// children fail, so pass a copy if the original is needed afterwards.
pub fn drive<A: Actuator>(
    tree: &mut VoteTree,
    actuator: A,
    mode: &ExecutionMode,
    step_limit: usize,
) -> Result<RunOutcome, ExecutorError> {
    if step_limit == 0 {
        return Err(ExecutorError::InvalidStepLimit);
    }
    let mut run = Run { selector: ChildSelector::new(mode.selection), tree, actuator, steps: Vec::new() };
    let root = run.tree.root();
    let stops_here = |tree: &VoteTree, node: NodeId| {
        mode.termination == TerminationRule::EndMarkerOrChildless && node != root && tree.node(node).end_marker()
    };
    let mut node = root;
    let termination = loop {
        let Some(child) = run.tree.select_child(node, &mut run.selector) else {
            break if node == root { TraceEnd::Exhausted } else { TraceEnd::Completed };
        };
        if run.steps.len() >= step_limit {
            break TraceEnd::StepLimit;
        }
        let ok = run.attempt(child);
        match mode.correction {
            Correction::NoCorrection => node = child,
            Correction::WithCorrection if ok => node = child,
            Correction::WithCorrection => {
                run.tree.remove_child(node, child)?;
                while node != root && run.tree.node(node).is_leaf() {
                    let exhausted = node;
                    node = run.tree.node(node).parent().expect("non-root node has a parent");
                    run.tree.remove_child(node, exhausted)?;
                }
                continue;
            }
        }
        if stops_here(run.tree, node) {
            break TraceEnd::Completed;
        }
    };
    Ok(RunOutcome { steps: run.steps, termination })
}

/// Executes an episode-local copy of `tree` from `initial`.
pub fn execute_tree(
    tree: &VoteTree,
    env: &Environment,
    initial: &WorldState,
    mode: &ExecutionMode,
    step_limit: usize,
) -> Result<ExecutionTrace, ExecutorError> {
    let mut local = tree.clone();
    let mut actuator = WorldActuator::new(env, initial.clone());
    let outcome = drive(&mut local, &mut actuator, mode, step_limit)?;
    Ok(ExecutionTrace { steps: outcome.steps, final_state: actuator.into_state(), termination: outcome.termination })
}

impl<A: Actuator + ?Sized> Actuator for &mut A {
    fn attempt(&mut self, command: &Command) -> Result<(), ExecFailure> {
        (**self).attempt(command)
    }
}

/// Everything an evaluation needs from one task run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_name: String,
    pub trace: ExecutionTrace,
    /// Achieved conditions: the diff between the initial and final states.
    pub achieved: BTreeSet<Predicate>,
    /// Ground-truth goal conditions.
    pub goal: BTreeSet<Predicate>,
}

impl EpisodeResult {
    /// Per-command executability in attempt order.
    pub fn command_outcomes(&self) -> Vec<(&Command, bool)> {
        self.trace.steps.iter().map(|s| (&s.command, s.succeeded())).collect()
    }

    pub fn goals_missed(&self) -> usize {
        self.goal.difference(&self.achieved).count()
    }
}

pub fn run_episode(
    task_name: &str,
    goal: &BTreeSet<Predicate>,
    env: &Environment,
    initial: &WorldState,
    tree: &VoteTree,
    mode: &ExecutionMode,
    step_limit: usize,
) -> Result<EpisodeResult, ExecutorError> {
    let trace = execute_tree(tree, env, initial, mode, step_limit)?;
    let achieved = state_diff(initial, &trace.final_state);
    Ok(EpisodeResult { task_name: task_name.to_string(), trace, achieved, goal: goal.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Plan;
    use std::collections::BTreeMap;

    struct Script(BTreeMap<String, bool>);

    impl Actuator for Script {
        fn attempt(&mut self, command: &Command) -> Result<(), ExecFailure> {
            if self.0.get(command.canonical_form()).copied().unwrap_or(true) {
                Ok(())
            } else {
                Err(ExecFailure { reason: FailureReason::PreconditionUnsatisfied, detail: "scripted".into() })
            }
        }
    }

    fn tree(seqs: &[&[&str]]) -> VoteTree {
        let plans: Vec<Plan> = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| Plan::generated(s.iter().map(|c| c.parse().unwrap()).collect(), i))
            .collect();
        VoteTree::build(&plans).unwrap()
    }

    fn run(t: &VoteTree, script: &[(&str, bool)], mode: ExecutionMode) -> (Vec<String>, TraceEnd) {
        let mut local = t.clone();
        let script = Script(script.iter().map(|(c, ok)| (c.to_string(), *ok)).collect());
        let out = drive(&mut local, script, &mode, DEFAULT_STEP_LIMIT).unwrap();
        let steps = out
            .steps
            .iter()
            .map(|s| if s.succeeded() { s.command.to_string() } else { format!("{}!", s.command) })
            .collect();
        (steps, out.termination)
    }

    fn worked() -> VoteTree {
        tree(&[&["do(a)", "do(b)"], &["do(a)", "do(c)"], &["do(a)", "do(b)"]])
    }

    #[test]
    fn all_succeed_follows_max_vote() {
        assert_eq!(
            run(&worked(), &[], ExecutionMode::default()),
            (vec!["do(a)".into(), "do(b)".into()], TraceEnd::Completed)
        );
    }

    #[test]
    fn sibling_fallback() {
        assert_eq!(
            run(&worked(), &[("do(b)", false)], ExecutionMode::default()),
            (vec!["do(a)".into(), "do(b)!".into(), "do(c)".into()], TraceEnd::Completed)
        );
    }

    #[test]
    fn immediate_exhaustion() {
        let t = tree(&[&["do(x)", "do(y)"]]);
        assert_eq!(
            run(&t, &[("do(x)", false)], ExecutionMode::default()),
            (vec!["do(x)!".into()], TraceEnd::Exhausted)
        );
    }

    #[test]
    fn backtracks_to_ancestor_with_untried_children() {
        // root -> a(3) -> {b(2) -> {d(2)}, c(1)}; d fails, so b is exhausted and c is tried.
        let t = tree(&[&["do(a)", "do(b)", "do(d)"], &["do(a)", "do(b)", "do(d)"], &["do(a)", "do(c)"]]);
        assert_eq!(
            run(&t, &[("do(d)", false)], ExecutionMode::default()),
            (vec!["do(a)".into(), "do(b)".into(), "do(d)!".into(), "do(c)".into()], TraceEnd::Completed)
        );
    }

    #[test]
    fn multi_level_unwind_reaches_root_siblings() {
        // root -> {a(2) -> b(2) -> d(2), e(1)}; d fails: b then a are exhausted, e is next.
        let t = tree(&[&["do(a)", "do(b)", "do(d)"], &["do(a)", "do(b)", "do(d)"], &["do(e)"]]);
        assert_eq!(
            run(&t, &[("do(d)", false)], ExecutionMode::default()),
            (vec!["do(a)".into(), "do(b)".into(), "do(d)!".into(), "do(e)".into()], TraceEnd::Completed)
        );
    }

    #[test]
    fn no_correction_runs_the_whole_path() {
        let mode = ExecutionMode { correction: Correction::NoCorrection, ..Default::default() };
        assert_eq!(
            run(&worked(), &[("do(a)", false), ("do(b)", false)], mode),
            (vec!["do(a)!".into(), "do(b)!".into()], TraceEnd::Completed)
        );
    }

    #[test]
    fn end_marker_termination_is_opt_in() {
        let t = tree(&[&["do(a)"], &["do(a)"], &["do(a)", "do(b)"]]);
        assert_eq!(run(&t, &[], ExecutionMode::default()).0, vec!["do(a)", "do(b)"]);
        let mode = ExecutionMode { termination: TerminationRule::EndMarkerOrChildless, ..Default::default() };
        assert_eq!(run(&t, &[], mode), (vec!["do(a)".into()], TraceEnd::Completed));
    }

    #[test]
    fn step_limit_is_enforced_and_validated() {
        let t = tree(&[&["do(a)", "do(b)", "do(c)"]]);
        let mut local = t.clone();
        let out = drive(&mut local, Script(BTreeMap::new()), &ExecutionMode::default(), 2).unwrap();
        assert_eq!(out.steps.len(), 2);
        assert_eq!(out.termination, TraceEnd::StepLimit);
        let mut local = t.clone();
        assert_eq!(
            drive(&mut local, Script(BTreeMap::new()), &ExecutionMode::default(), 0),
            Err(ExecutorError::InvalidStepLimit)
        );
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let t = worked();
        let mut local = t.clone();
        let script = Script([("do(b)".to_string(), false)].into());
        let out = drive(&mut local, script, &ExecutionMode::default(), 10).unwrap();
        let trace =
            ExecutionTrace { steps: out.steps, final_state: WorldState::default(), termination: out.termination };
        let text = trace.to_jsonl();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            r#"{"idx":1,"command":"do(b)","outcome":"failure","reason":"precondition_unsatisfied"}"#
        );
        assert_eq!(parse_trace_jsonl(&text).unwrap(), trace.records());
    }
}
