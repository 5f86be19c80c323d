//! Symbolic household world: objects, predicate states, and an action model
//! with preconditions and effects.

mod catalog;
mod dataset;
mod predicate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Command, Plan};

pub use catalog::{
    ActionCatalog, ActionSchema, ActionSchemaDoc, Condition, DerivedCheck, PredicateTemplate, TemplateArg,
};
pub use dataset::{Dataset, DatasetManifest, Task, TaskDoc};
pub use predicate::{Predicate, PredicateKind, Relation, AGENT};

/// Number of objects the agent can hold at once.
pub const HAND_CAPACITY: usize = 2;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("parse error in {entry}: {message}")]
    Parse { entry: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dataset error in task `{task}`: {message}")]
    Dataset { task: String, message: String },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub class_name: String,
    #[serde(default)]
    pub properties: BTreeSet<String>,
}

impl ObjectInstance {
    pub fn has(&self, property: &str) -> bool {
        self.properties.contains(property)
    }
}

/// The objects of one scene, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectCatalog {
    objects: BTreeMap<String, ObjectInstance>,
}

impl ObjectCatalog {
    pub fn get(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.get(id)
    }

    /// Maps a command argument to an object id: exact id first, then the
    /// lexicographically first object of that class.
    pub fn resolve(&self, token: &str) -> Option<&ObjectInstance> {
        self.objects.get(token).or_else(|| self.objects.values().find(|o| o.class_name == token))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// A world state is a set of ground predicates; agent position and held
/// objects are read off the `CLOSE_TO(agent, _)` and `HELD_BY_AGENT(_)` facts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub predicates: BTreeSet<Predicate>,
}

impl WorldState {
    pub fn new(predicates: impl IntoIterator<Item = Predicate>) -> Self {
        WorldState { predicates: predicates.into_iter().collect() }
    }

    pub fn holds(&self, p: &Predicate) -> bool {
        self.predicates.contains(p)
    }

    pub fn agent_location(&self) -> Option<&str> {
        self.predicates
            .iter()
            .find(|p| p.relation == Relation::CloseTo && p.subject == AGENT)
            .and_then(|p| p.object.as_deref())
    }

    pub fn held(&self) -> BTreeSet<&str> {
        self.predicates.iter().filter(|p| p.relation == Relation::HeldByAgent).map(|p| p.subject.as_str()).collect()
    }

    /// Checks the exclusivity and hand invariants.
    pub fn validate(&self) -> Result<(), WorldError> {
        for p in &self.predicates {
            if let Some(other) = p.relation.exclusive_with() {
                let clash = Predicate::unary(other, p.subject.clone());
                if self.predicates.contains(&clash) {
                    return Err(WorldError::Validation(format!("{p} conflicts with {clash}")));
                }
            }
        }
        let held = self.held();
        if held.len() > HAND_CAPACITY {
            return Err(WorldError::Validation(format!("agent holds {} objects", held.len())));
        }
        if let Some(p) = self.predicates.iter().find(|p| p.relation.is_location() && held.contains(p.subject.as_str()))
        {
            return Err(WorldError::Validation(format!("held object keeps location {p}")));
        }
        Ok(())
    }
}

/// Predicates present in `final_state` but not in `initial`.
pub fn state_diff(initial: &WorldState, final_state: &WorldState) -> BTreeSet<Predicate> {
    final_state.predicates.difference(&initial.predicates).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    UnknownAction,
    UnknownObject,
    ArityMismatch,
    MissingProperty,
    PreconditionUnsatisfied,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::UnknownAction => "unknown_action",
            FailureReason::UnknownObject => "unknown_object",
            FailureReason::ArityMismatch => "arity_mismatch",
            FailureReason::MissingProperty => "missing_property",
            FailureReason::PreconditionUnsatisfied => "precondition_unsatisfied",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecFailure {
    pub reason: FailureReason,
    pub detail: String,
}

impl ExecFailure {
    fn new(reason: FailureReason, detail: impl Into<String>) -> Self {
        ExecFailure { reason, detail: detail.into() }
    }
}

impl fmt::Display for ExecFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

/// Serialized scene: objects plus initial predicate strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDoc {
    pub scene_id: String,
    pub objects: Vec<ObjectInstance>,
    #[serde(default)]
    pub predicates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub objects: ObjectCatalog,
    pub initial: WorldState,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parses and validates a scene document into its object catalog and initial state.
///
/// Openable objects with no `OPEN`/`CLOSED` fact start `CLOSED`; switchable
/// objects with no `ON`/`OFF` fact start `OFF`.
pub fn load_scene(doc: &SceneDoc) -> Result<Scene, WorldError> {
    let mut objects = BTreeMap::new();
    for obj in &doc.objects {
        if !is_token(&obj.id) || obj.id == AGENT {
            return Err(WorldError::Parse {
                entry: format!("object `{}`", obj.id),
                message: "id must be a lowercase token other than `agent`".into(),
            });
        }
        if !is_token(&obj.class_name) {
            return Err(WorldError::Parse {
                entry: format!("object `{}`", obj.id),
                message: format!("class_name `{}` is not a lowercase token", obj.class_name),
            });
        }
        if objects.insert(obj.id.clone(), obj.clone()).is_some() {
            return Err(WorldError::Validation(format!(
                "duplicate object id `{}` in scene `{}`",
                obj.id, doc.scene_id
            )));
        }
    }
    let objects = ObjectCatalog { objects };

    let mut state = WorldState::default();
    for (idx, text) in doc.predicates.iter().enumerate() {
        let p: Predicate = text.parse().map_err(|e| match e {
            WorldError::Parse { message, .. } => {
                WorldError::Parse { entry: format!("scene `{}` predicate #{idx} `{text}`", doc.scene_id), message }
            }
            other => other,
        })?;
        for arg in [Some(&p.subject), p.object.as_ref()].into_iter().flatten() {
            if arg != AGENT && objects.get(arg).is_none() {
                return Err(WorldError::Validation(format!("predicate `{text}` references unknown object `{arg}`")));
            }
        }
        state.predicates.insert(p);
    }

    for obj in objects.iter() {
        let has = |r: Relation| state.holds(&Predicate::unary(r, obj.id.clone()));
        let mut defaults = Vec::new();
        if obj.has("CAN_OPEN") && !has(Relation::Open) && !has(Relation::Closed) {
            defaults.push(Predicate::unary(Relation::Closed, obj.id.clone()));
        }
        if obj.has("HAS_SWITCH") && !has(Relation::On) && !has(Relation::Off) {
            defaults.push(Predicate::unary(Relation::Off, obj.id.clone()));
        }
        state.predicates.extend(defaults);
    }
    state.validate()?;
    Ok(Scene { id: doc.scene_id.clone(), objects, initial: state })
}

/// A scene's objects together with the action catalog; executes commands.
#[derive(Debug, Clone)]
pub struct Environment {
    pub catalog: ActionCatalog,
    pub objects: ObjectCatalog,
}

impl Environment {
    pub fn new(catalog: ActionCatalog, objects: ObjectCatalog) -> Self {
        Environment { catalog, objects }
    }

    /// Applies `command` to `state`. On failure the input state is untouched
    /// and the reason says which gate rejected the command.
    pub fn execute(&self, state: &WorldState, command: &Command) -> Result<WorldState, ExecFailure> {
        let schema = self.catalog.get(command.action()).ok_or_else(|| {
            ExecFailure::new(FailureReason::UnknownAction, format!("no action `{}`", command.action()))
        })?;
        if command.args().len() != schema.arity {
            return Err(ExecFailure::new(
                FailureReason::ArityMismatch,
                format!("`{}` takes {} argument(s), got {}", schema.name, schema.arity, command.args().len()),
            ));
        }
        let mut ids = Vec::with_capacity(command.args().len());
        for (arg, required) in command.args().iter().zip(&schema.required_properties) {
            let obj = self
                .objects
                .resolve(arg)
                .ok_or_else(|| ExecFailure::new(FailureReason::UnknownObject, format!("no object `{arg}`")))?;
            if let Some(missing) = required.iter().find(|p| !obj.has(p)) {
                return Err(ExecFailure::new(FailureReason::MissingProperty, format!("`{}` lacks {missing}", obj.id)));
            }
            ids.push(obj.id.clone());
        }

        for condition in &schema.preconditions {
            if !self.condition_holds(state, condition, &ids) {
                return Err(ExecFailure::new(
                    FailureReason::PreconditionUnsatisfied,
                    format!("{} requires {}", command, describe_condition(condition, &ids)),
                ));
            }
        }

        let mut next = state.clone();
        for template in &schema.del_effects {
            next.predicates.retain(|p| !template_matches(template, p, &ids));
        }
        for template in &schema.add_effects {
            next.predicates.insert(instantiate(template, &ids));
        }
        debug_assert!(next.validate().is_ok(), "catalog produced an invalid state for {command}");
        Ok(next)
    }

    fn condition_holds(&self, state: &WorldState, condition: &Condition, ids: &[String]) -> bool {
        match condition {
            Condition::Holds(t) => state.holds(&instantiate(t, ids)),
            Condition::NotHolds(t) => !state.holds(&instantiate(t, ids)),
            Condition::Derived(DerivedCheck::HandFree, _) => state.held().len() < HAND_CAPACITY,
            Condition::Derived(DerivedCheck::Reachable, arg) => {
                let Some(id) = arg.resolve(ids) else { return true };
                !state.predicates.iter().any(|p| {
                    p.relation == Relation::Inside
                        && p.subject == id
                        && p.object
                            .as_ref()
                            .is_some_and(|c| state.holds(&Predicate::unary(Relation::Closed, c.clone())))
                })
            }
        }
    }
}

fn instantiate(t: &PredicateTemplate, ids: &[String]) -> Predicate {
    let subject = t.subject.resolve(ids).expect("validated template").to_string();
    Predicate {
        relation: t.relation,
        subject,
        object: t.object.map(|o| o.resolve(ids).expect("validated template").to_string()),
    }
}

fn template_matches(t: &PredicateTemplate, p: &Predicate, ids: &[String]) -> bool {
    let arg_matches = |arg: &TemplateArg, value: &str| match arg.resolve(ids) {
        Some(expected) => expected == value,
        None => true,
    };
    t.relation == p.relation
        && arg_matches(&t.subject, &p.subject)
        && match (&t.object, &p.object) {
            (Some(a), Some(v)) => arg_matches(a, v),
            (None, None) => true,
            _ => false,
        }
}

fn describe_condition(condition: &Condition, ids: &[String]) -> String {
    match condition {
        Condition::Holds(t) => instantiate(t, ids).to_string(),
        Condition::NotHolds(t) => format!("not {}", instantiate(t, ids)),
        Condition::Derived(DerivedCheck::HandFree, _) => "a free hand".into(),
        Condition::Derived(DerivedCheck::Reachable, arg) => {
            format!("{} outside closed containers", arg.resolve(ids).unwrap_or("?"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSource {
    Explicit,
    DerivedFromGoalPlan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub task_name: String,
    pub goal_conditions: BTreeSet<Predicate>,
    pub source: GoalSource,
}

/// Simulates `goal_plan` from `initial` and takes the resulting state diff as
/// the goal conditions. Agent pose facts (`CLOSE_TO(agent,_)`,
/// `FACING(agent,_)`) are left out: they record where the agent happened to
/// stop, not what the task asks for.
pub fn derive_goal_conditions(
    env: &Environment,
    initial: &WorldState,
    task_name: &str,
    goal_plan: &Plan,
) -> Result<GoalSpec, WorldError> {
    let dataset_error = |message: String| WorldError::Dataset { task: task_name.to_string(), message };
    let mut state = initial.clone();
    for (idx, command) in goal_plan.commands.iter().enumerate() {
        state = env
            .execute(&state, command)
            .map_err(|f| dataset_error(format!("goal plan command #{idx} `{command}` failed: {f}")))?;
    }
    let goal_conditions: BTreeSet<Predicate> =
        state_diff(initial, &state).into_iter().filter(|p| !p.is_agent_pose()).collect();
    if goal_conditions.is_empty() {
        return Err(dataset_error("goal plan produces no goal conditions".into()));
    }
    Ok(GoalSpec { task_name: task_name.to_string(), goal_conditions, source: GoalSource::DerivedFromGoalPlan })
}
