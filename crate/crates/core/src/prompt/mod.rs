//! Prompt formatting for both planning stages and the plan generators that consume them.

mod noise;
mod provider;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Command, UniqueCommandSet};
use crate::seed::content_hash;
use crate::world::ActionCatalog;

pub use noise::{perturb, synthesize_noisy_plans, NoiseModel};
pub use provider::{
    generate, FixtureManifest, FixtureStore, PlanGenerator, ProviderError, RecordingProvider, RemoteConfig,
    RemoteProvider, ReplayProvider, SyntheticProvider, SyntheticTask,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs at least one action")]
    NoActions,
    #[error("prompt needs at least one object")]
    NoObjects,
    #[error("empty_command_pool: reorder prompt needs at least one command")]
    EmptyCommandPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Prog,
    Reorder,
}

impl PromptKind {
    /// Directory name of the stage in fixture layouts.
    pub fn stage(self) -> &'static str {
        match self {
            PromptKind::Prog => "prog",
            PromptKind::Reorder => "reorder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSignature {
    pub name: String,
    pub arity: usize,
}

impl ActionSignature {
    pub fn from_catalog(catalog: &ActionCatalog) -> Vec<ActionSignature> {
        catalog.iter().map(|s| ActionSignature { name: s.name.clone(), arity: s.arity }).collect()
    }
}

/// A solved task shown to the model as an in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePlan {
    pub instruction: String,
    pub commands: Vec<Command>,
}

/// A reordering demonstration: a command pool and a plan drawn from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderDemo {
    pub instruction: String,
    pub available: Vec<Command>,
    pub plan: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptContext {
    Prog { actions: Vec<ActionSignature>, objects: Vec<String>, examples: Vec<ExamplePlan> },
    Reorder { unique: UniqueCommandSet, demonstrations: Vec<ReorderDemo> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDocument {
    pub kind: PromptKind,
    pub instruction: String,
    pub text: String,
    pub context: PromptContext,
}

impl PromptDocument {
    /// Identity of the prompt for fixtures and caches: a digest of stage and text.
    pub fn content_hash(&self) -> String {
        content_hash(&format!("{}\n{}", self.kind.stage(), self.text))
    }

    pub fn unique_commands(&self) -> Option<&UniqueCommandSet> {
        match &self.context {
            PromptContext::Reorder { unique, .. } => Some(unique),
            PromptContext::Prog { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub num_samples: usize,
    /// Upper bound on tokens per response (remote) or commands per sample (synthetic).
    pub max_length: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn prog_default() -> Self {
        SamplingConfig { temperature: 0.1, num_samples: 30, max_length: 512, seed: 0 }
    }

    pub fn reorder_default() -> Self {
        SamplingConfig { temperature: 0.65, num_samples: 20, max_length: 512, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SamplingConfig { seed, ..self }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig::prog_default()
    }
}

/// `"Put the wine glass in the kitchen cabinet"` -> `put_the_wine_glass_in_the_kitchen_cabinet`.
pub fn function_name(instruction: &str) -> String {
    let mut out = String::new();
    for ch in instruction.trim().chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_alphanumeric() {
            out.push(ch);
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

pub(crate) fn program_call(command: &Command) -> String {
    let args: Vec<String> = command.args().iter().map(|a| format!("'{a}'")).collect();
    format!("{}({})", command.action(), args.join(", "))
}

/// Program-style function body for one plan, as used in prompts and synthetic samples.
pub fn render_program(instruction: &str, commands: &[Command]) -> String {
    let mut out = format!("def {}():\n", function_name(instruction));
    for command in commands {
        let _ = writeln!(out, "    {}", program_call(command));
    }
    out
}

/// Program-style planning prompt: an import line listing the actions, the
/// scene's object list, example task functions, and an open header for the
/// instruction.
pub fn format_prog_prompt(
    instruction: &str,
    actions: &[ActionSignature],
    objects: &[String],
    examples: &[ExamplePlan],
) -> Result<PromptDocument, PromptError> {
    let actions: Vec<ActionSignature> = actions.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let objects: Vec<String> = objects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if actions.is_empty() {
        return Err(PromptError::NoActions);
    }
    if objects.is_empty() {
        return Err(PromptError::NoObjects);
    }

    let imports: Vec<String> = actions.iter().map(|a| format!("{}{}", a.name, " <obj>".repeat(a.arity))).collect();
    let quoted: Vec<String> = objects.iter().map(|o| format!("'{o}'")).collect();

    let mut text = String::new();
    let _ = writeln!(text, "from actions import {}", imports.join(", "));
    let _ = writeln!(text);
    let _ = writeln!(text, "objects = [{}]", quoted.join(", "));
    for example in examples {
        let _ = writeln!(text);
        text.push_str(&render_program(&example.instruction, &example.commands));
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "def {}():", function_name(instruction));

    Ok(PromptDocument {
        kind: PromptKind::Prog,
        instruction: instruction.to_string(),
        text,
        context: PromptContext::Prog { actions, objects, examples: examples.to_vec() },
    })
}

const REORDER_PREAMBLE: &str = "\
# Reorder the available commands into a plan that completes the task.
# Write one command per line as action(object) or action(object1,object2).
# Use only the available commands; a command may be used more than once.
";

fn write_reorder_block(text: &mut String, instruction: &str, available: &[&Command], plan: Option<&[Command]>) {
    let _ = writeln!(text);
    let _ = writeln!(text, "# Task: {instruction}");
    let _ = writeln!(text, "# Available commands:");
    for c in available {
        let _ = writeln!(text, "{c}");
    }
    let _ = writeln!(text, "# Plan:");
    for c in plan.unwrap_or_default() {
        let _ = writeln!(text, "{c}");
    }
}

/// Reordering prompt: demonstrations, then the pooled commands in canonical
/// order and the instruction, asking for one canonical command per line.
pub fn format_reorder_prompt(
    unique: &UniqueCommandSet,
    instruction: &str,
    demonstrations: &[ReorderDemo],
) -> Result<PromptDocument, PromptError> {
    if unique.is_empty() {
        return Err(PromptError::EmptyCommandPool);
    }
    let mut text = REORDER_PREAMBLE.to_string();
    for demo in demonstrations {
        let available: BTreeSet<&Command> = demo.available.iter().collect();
        let available: Vec<&Command> = available.into_iter().collect();
        write_reorder_block(&mut text, &demo.instruction, &available, Some(&demo.plan));
    }
    let members: Vec<&Command> = unique.iter().collect();
    write_reorder_block(&mut text, instruction, &members, None);

    Ok(PromptDocument {
        kind: PromptKind::Reorder,
        instruction: instruction.to_string(),
        text,
        context: PromptContext::Reorder { unique: unique.clone(), demonstrations: demonstrations.to_vec() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmds(list: &[&str]) -> Vec<Command> {
        list.iter().map(|c| c.parse().unwrap()).collect()
    }

    fn sigs() -> Vec<ActionSignature> {
        vec![
            ActionSignature { name: "grab".into(), arity: 1 },
            ActionSignature { name: "find".into(), arity: 1 },
            ActionSignature { name: "putin".into(), arity: 2 },
        ]
    }

    #[test]
    fn function_names() {
        assert_eq!(function_name("Microwave Salmon"), "microwave_salmon");
        assert_eq!(
            function_name("put the wine glass in the kitchen cabinet"),
            "put_the_wine_glass_in_the_kitchen_cabinet"
        );
        assert_eq!(function_name("  Turn on TV!  "), "turn_on_tv");
    }

    #[test]
    fn prog_prompt_lists_inventories_once() {
        let objects = vec!["salmon".to_string(), "microwave".into(), "salmon".into()];
        let doc = format_prog_prompt("microwave salmon", &sigs(), &objects, &[]).unwrap();
        assert!(doc.text.starts_with("from actions import find <obj>, grab <obj>, putin <obj> <obj>\n"));
        assert!(doc.text.contains("objects = ['microwave', 'salmon']\n"));
        assert!(doc.text.ends_with("def microwave_salmon():\n"));
        assert_eq!(doc.text.matches("'salmon'").count(), 1);
    }

    #[test]
    fn prog_prompt_embeds_examples_and_is_deterministic() {
        let examples =
            vec![ExamplePlan { instruction: "wash mug".into(), commands: cmds(&["find(mug)", "grab(mug)"]) }];
        let objects = vec!["mug".to_string()];
        let a = format_prog_prompt("microwave salmon", &sigs(), &objects, &examples).unwrap();
        let b = format_prog_prompt("microwave salmon", &sigs(), &objects, &examples).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.content_hash(), b.content_hash());
        assert!(a.text.contains("def wash_mug():\n    find('mug')\n    grab('mug')\n"));
    }

    #[test]
    fn prog_prompt_rejects_empty_inventories() {
        assert_eq!(format_prog_prompt("x", &[], &["a".into()], &[]).unwrap_err(), PromptError::NoActions);
        assert_eq!(format_prog_prompt("x", &sigs(), &[], &[]).unwrap_err(), PromptError::NoObjects);
    }

    #[test]
    fn reorder_prompt_sorts_pool() {
        let unique = UniqueCommandSet::from_commands(cmds(&["grab(salmon)", "find(salmon)"]));
        let doc = format_reorder_prompt(&unique, "microwave salmon", &[]).unwrap();
        let tail = doc.text.split("# Task: microwave salmon\n").nth(1).unwrap();
        assert_eq!(tail, "# Available commands:\nfind(salmon)\ngrab(salmon)\n# Plan:\n");
        assert_eq!(doc.text, format_reorder_prompt(&unique, "microwave salmon", &[]).unwrap().text);
    }

    #[test]
    fn reorder_prompt_rejects_empty_pool() {
        assert_eq!(
            format_reorder_prompt(&UniqueCommandSet::default(), "x", &[]).unwrap_err(),
            PromptError::EmptyCommandPool
        );
    }

    #[test]
    fn hash_depends_on_stage_and_text() {
        let unique = UniqueCommandSet::from_commands(cmds(&["find(a)"]));
        let a = format_reorder_prompt(&unique, "x", &[]).unwrap();
        let b = format_reorder_prompt(&unique, "y", &[]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn sampling_defaults() {
        let prog = SamplingConfig::prog_default();
        assert_eq!((prog.temperature, prog.num_samples), (0.1, 30));
        let reorder = SamplingConfig::reorder_default();
        assert_eq!((reorder.temperature, reorder.num_samples), (0.65, 20));
    }
}
