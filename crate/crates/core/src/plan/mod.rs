//! Commands, plans, and the program-style plan parser.

mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{parse_corpus, parse_plan_text, render_plan, Diagnostic, DiagnosticKind, ParsedPlan};

/// Canonical action names understood by the household action catalog.
pub const KNOWN_ACTIONS: [&str; 28] = [
    "find",
    "grab",
    "open",
    "close",
    "switchon",
    "switchoff",
    "putin",
    "putback",
    "wash",
    "scrub",
    "rinse",
    "wipe",
    "squeeze",
    "drink",
    "eat",
    "cut",
    "pour",
    "sit",
    "standup",
    "lookat",
    "touch",
    "push",
    "pull",
    "turnto",
    "pointat",
    "type",
    "watch",
    "release",
];

/// Alternative spellings mapped onto canonical action names.
pub const ACTION_ALIASES: [(&str, &str); 6] = [
    ("walk", "find"),
    ("walkto", "find"),
    ("put", "putback"),
    ("putobjback", "putback"),
    ("switch_on", "switchon"),
    ("switch_off", "switchoff"),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("empty_command_pool: no sampled plan contained a command")]
    EmptyCommandPool,
    #[error("plan #{0} is not a generated sample")]
    NotGenerated(usize),
    #[error("reordered plan #{0} is empty")]
    EmptyReordered(usize),
    #[error("cannot parse command `{text}`: {reason}")]
    BadCommand { text: String, reason: String },
}

/// One action applied to one or two objects, e.g. `putin(salmon,microwave)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Command {
    action: String,
    args: Vec<String>,
    canonical: String,
}

impl Command {
    /// Builds a command from already-normalized tokens.
    fn from_parts(action: String, args: Vec<String>) -> Command {
        let canonical = format!("{}({})", action, args.join(","));
        Command { action, args, canonical }
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    pub fn canonical_form(&self) -> &str {
        &self.canonical
    }

    pub fn is_known_action(&self) -> bool {
        KNOWN_ACTIONS.contains(&self.action.as_str())
    }

    pub fn mentions(&self, object: &str) -> bool {
        self.args.iter().any(|a| a == object)
    }
}

impl PartialOrd for Command {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Command {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical.cmp(&other.canonical)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl FromStr for Command {
    type Err = PlanError;

    /// Parses a single call such as `find(salmon)` or `putin('salmon', 'fridge')`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| PlanError::BadCommand { text: s.to_string(), reason: reason.to_string() };
        let calls = parser::parse_calls(s.trim()).ok_or_else(|| bad("not an action call"))?;
        let [(action, args)] = calls.as_slice() else {
            return Err(bad("expected exactly one call"));
        };
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        normalize_command(action, &args).map(|n| n.command).map_err(|d| bad(&d.message))
    }
}

impl Serialize for Command {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical)
    }
}

impl<'de> Deserialize<'de> for Command {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedCommand {
    pub command: Command,
    /// The action is not in [`KNOWN_ACTIONS`]; execution will decide its fate.
    pub unknown_action: bool,
}

fn normalize_token(raw: &str) -> String {
    let trimmed = raw.trim_matches(|c: char| c.is_whitespace() || matches!(c, '\'' | '"' | '`'));
    let lowered = trimmed.to_lowercase();
    lowered.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Lowercases, trims, unquotes, and de-aliases an action call.
pub fn normalize_command(action: &str, args: &[&str]) -> Result<NormalizedCommand, Diagnostic> {
    let mut action = normalize_token(action);
    if action.is_empty() {
        return Err(Diagnostic::new(DiagnosticKind::EmptyAction, "empty action token"));
    }
    if let Some((_, canonical)) = ACTION_ALIASES.iter().find(|(alias, _)| *alias == action) {
        action = canonical.to_string();
    }
    let args: Vec<String> = args.iter().map(|a| normalize_token(a)).collect();
    if !(1..=2).contains(&args.len()) {
        return Err(Diagnostic::new(
            DiagnosticKind::BadArity,
            format!("`{action}` has {} arguments; commands take one or two objects", args.len()),
        ));
    }
    if args.iter().any(String::is_empty) {
        return Err(Diagnostic::new(DiagnosticKind::EmptyArgument, format!("`{action}` has an empty argument")));
    }
    let unknown_action = !KNOWN_ACTIONS.contains(&action.as_str());
    Ok(NormalizedCommand { command: Command::from_parts(action, args), unknown_action })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated,
    Reordered,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOrigin {
    pub sample_index: usize,
    pub provenance: Provenance,
}

impl PlanOrigin {
    pub fn generated(sample_index: usize) -> Self {
        PlanOrigin { sample_index, provenance: Provenance::Generated }
    }

    pub fn reordered(sample_index: usize) -> Self {
        PlanOrigin { sample_index, provenance: Provenance::Reordered }
    }

    pub fn goal() -> Self {
        PlanOrigin { sample_index: 0, provenance: Provenance::Goal }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub commands: Vec<Command>,
    pub origin: PlanOrigin,
}

impl Plan {
    /// Builds a plan; reordered plans must contain at least one command.
    pub fn new(commands: Vec<Command>, origin: PlanOrigin) -> Result<Plan, PlanError> {
        if origin.provenance == Provenance::Reordered && commands.is_empty() {
            return Err(PlanError::EmptyReordered(origin.sample_index));
        }
        Ok(Plan { commands, origin })
    }

    pub fn goal(commands: Vec<Command>) -> Plan {
        Plan { commands, origin: PlanOrigin::goal() }
    }

    pub fn generated(commands: Vec<Command>, sample_index: usize) -> Plan {
        Plan { commands, origin: PlanOrigin::generated(sample_index) }
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

/// Distinct commands pooled from a batch of generated plans.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueCommandSet {
    commands: BTreeMap<String, Command>,
    /// Number of plans in which each command appears at least once.
    pub source_count: BTreeMap<String, usize>,
}

impl UniqueCommandSet {
    pub fn from_commands(commands: impl IntoIterator<Item = Command>) -> Self {
        let mut set = UniqueCommandSet::default();
        for c in commands {
            *set.source_count.entry(c.canonical_form().to_string()).or_default() += 1;
            set.commands.insert(c.canonical_form().to_string(), c);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn contains(&self, command: &Command) -> bool {
        self.commands.contains_key(command.canonical_form())
    }

    /// Members in canonical-form order.
    pub fn iter(&self) -> impl Iterator<Item = &Command> {
        self.commands.values()
    }
}

/// Pools the distinct commands of generated plans, counting in how many plans each occurs.
pub fn extract_unique_commands(plans: &[Plan]) -> Result<UniqueCommandSet, PlanError> {
    let mut set = UniqueCommandSet::default();
    for (idx, plan) in plans.iter().enumerate() {
        if plan.origin.provenance != Provenance::Generated {
            return Err(PlanError::NotGenerated(idx));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &plan.commands {
            if seen.insert(c.canonical_form()) {
                *set.source_count.entry(c.canonical_form().to_string()).or_default() += 1;
                set.commands.entry(c.canonical_form().to_string()).or_insert_with(|| c.clone());
            }
        }
    }
    if set.is_empty() {
        return Err(PlanError::EmptyCommandPool);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(s: &str) -> Command {
        s.parse().unwrap()
    }

    fn gen(cmds: &[&str], idx: usize) -> Plan {
        Plan::generated(cmds.iter().map(|s| c(s)).collect(), idx)
    }

    #[test]
    fn normalizes_case_quotes_and_space() {
        let n = normalize_command("Grab", &[" 'Salmon' "]).unwrap();
        assert_eq!(n.command.canonical_form(), "grab(salmon)");
        assert!(!n.unknown_action);
    }

    #[test]
    fn maps_aliases() {
        assert_eq!(normalize_command("walk", &["kitchen"]).unwrap().command.canonical_form(), "find(kitchen)");
        assert_eq!(normalize_command("put", &["cup", "table"]).unwrap().command.canonical_form(), "putback(cup,table)");
    }

    #[test]
    fn unknown_action_passes_through_flagged() {
        let n = normalize_command("flomp", &["cup"]).unwrap();
        assert_eq!(n.command.canonical_form(), "flomp(cup)");
        assert!(n.unknown_action);
    }

    #[test]
    fn empty_action_is_a_diagnostic() {
        let d = normalize_command("  ", &["cup"]).unwrap_err();
        assert_eq!(d.kind, DiagnosticKind::EmptyAction);
        assert_eq!(normalize_command("find", &[]).unwrap_err().kind, DiagnosticKind::BadArity);
        assert_eq!(normalize_command("find", &["a", "b", "c"]).unwrap_err().kind, DiagnosticKind::BadArity);
    }

    #[test]
    fn multiword_objects_collapse_to_one_token() {
        assert_eq!(c("find('wine glass')").canonical_form(), "find(wine_glass)");
    }

    #[test]
    fn union_with_source_counts() {
        let set = extract_unique_commands(&[gen(&["find(a)", "grab(b)"], 0), gen(&["grab(b)", "open(c)"], 1)]).unwrap();
        let members: Vec<&str> = set.iter().map(Command::canonical_form).collect();
        assert_eq!(members, vec!["find(a)", "grab(b)", "open(c)"]);
        assert_eq!(set.source_count["find(a)"], 1);
        assert_eq!(set.source_count["grab(b)"], 2);
        assert_eq!(set.source_count["open(c)"], 1);
    }

    #[test]
    fn identical_plans_give_that_plans_commands() {
        let plans: Vec<Plan> = (0..30).map(|i| gen(&["find(a)", "grab(a)", "find(a)"], i)).collect();
        let set = extract_unique_commands(&plans).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.source_count["find(a)"], 30);
    }

    #[test]
    fn empty_pool_and_wrong_origin() {
        assert_eq!(extract_unique_commands(&[gen(&[], 0), gen(&[], 1)]), Err(PlanError::EmptyCommandPool));
        assert_eq!(extract_unique_commands(&[]), Err(PlanError::EmptyCommandPool));
        let goal = Plan::goal(vec![c("find(a)")]);
        assert_eq!(extract_unique_commands(&[goal]), Err(PlanError::NotGenerated(0)));
    }

    #[test]
    fn reordered_plans_must_be_non_empty() {
        assert_eq!(Plan::new(vec![], PlanOrigin::reordered(3)), Err(PlanError::EmptyReordered(3)));
        assert!(Plan::new(vec![], PlanOrigin::generated(3)).is_ok());
    }

    fn arb_command() -> impl Strategy<Value = Command> {
        let action = prop::sample::select(KNOWN_ACTIONS.to_vec());
        let obj = prop::sample::select(vec!["salmon", "fridge", "mug", "wine_glass", "tv"]);
        (action, obj.clone(), prop::option::of(obj)).prop_map(|(a, o1, o2)| {
            let args: Vec<&str> = std::iter::once(o1).chain(o2).collect();
            normalize_command(a, &args).unwrap().command
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(action in "[ A-Za-z_']{0,8}", arg in "[ A-Za-z_'\"]{0,8}") {
            if let Ok(once) = normalize_command(&action, &[&arg]) {
                let again = normalize_command(once.command.action(), &[&once.command.args()[0]]).unwrap();
                prop_assert_eq!(once, again);
            }
        }

        #[test]
        fn render_then_parse_round_trips(cmds in prop::collection::vec(arb_command(), 0..12)) {
            let text = render_plan(&cmds);
            let parsed = parse_plan_text(&text, PlanOrigin::generated(0));
            prop_assert_eq!(parsed.plan.commands, cmds);
        }

        #[test]
        fn extraction_is_sound_and_order_independent(
            plans in prop::collection::vec(prop::collection::vec(arb_command(), 1..6), 1..8),
            rotate in 0usize..8,
        ) {
            let plans: Vec<Plan> = plans.into_iter().enumerate().map(|(i, p)| Plan::generated(p, i)).collect();
            let set = extract_unique_commands(&plans).unwrap();
            let total: usize = plans.iter().map(Plan::len).sum();
            prop_assert!(set.len() <= total);
            for member in set.iter() {
                prop_assert!(plans.iter().any(|p| p.commands.contains(member)));
            }
            let mut shuffled = plans.clone();
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(extract_unique_commands(&shuffled).unwrap(), set);
        }
    }
}
