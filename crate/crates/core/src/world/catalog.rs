//! Action schemas with STRIPS-style preconditions and effects.
//!
//! Schemas are read from a JSON catalog. Templates name parameters as `?1` and
//! `?2`, the acting agent as `agent`, and (in delete effects only) any object
//! as `*`. Preconditions may be negated with a leading `!` and may use two
//! derived checks that are computed from the state rather than stored in it:
//! `HAND_FREE(agent)` and `REACHABLE(?k)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::predicate::{split_call, PredicateKind, Relation, AGENT};
use super::WorldError;

const BUILTIN_CATALOG: &str = include_str!("../../../../data/dataset/actions.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateArg {
    /// 1-based parameter index.
    Param(usize),
    Agent,
    Any,
}

impl TemplateArg {
    fn parse(token: &str) -> Option<TemplateArg> {
        match token {
            AGENT => Some(TemplateArg::Agent),
            "*" => Some(TemplateArg::Any),
            _ => token.strip_prefix('?')?.parse().ok().map(TemplateArg::Param),
        }
    }

    pub(crate) fn resolve<'a>(&self, args: &'a [String]) -> Option<&'a str> {
        match self {
            TemplateArg::Param(k) => args.get(k - 1).map(String::as_str),
            TemplateArg::Agent => Some(AGENT),
            TemplateArg::Any => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateTemplate {
    pub relation: Relation,
    pub subject: TemplateArg,
    pub object: Option<TemplateArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivedCheck {
    /// The agent holds fewer objects than it has hands.
    HandFree,
    /// The object is not inside a closed container.
    Reachable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Holds(PredicateTemplate),
    NotHolds(PredicateTemplate),
    Derived(DerivedCheck, TemplateArg),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub arity: usize,
    /// Property tokens each parameter's object must carry, indexed by parameter.
    pub required_properties: Vec<BTreeSet<String>>,
    pub preconditions: Vec<Condition>,
    pub add_effects: Vec<PredicateTemplate>,
    pub del_effects: Vec<PredicateTemplate>,
}

/// Serialized form of one catalog entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionSchemaDoc {
    pub name: String,
    pub arity: usize,
    #[serde(default)]
    pub required_properties: Vec<Vec<String>>,
    #[serde(default)]
    pub preconditions: Vec<String>,
    #[serde(default)]
    pub add: Vec<String>,
    #[serde(default)]
    pub del: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ActionCatalog {
    schemas: BTreeMap<String, ActionSchema>,
}

impl ActionCatalog {
    /// The shipped 28-action household catalog.
    pub fn builtin() -> ActionCatalog {
        ActionCatalog::from_json(BUILTIN_CATALOG).expect("builtin action catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<ActionCatalog, WorldError> {
        let docs: Vec<ActionSchemaDoc> = serde_json::from_str(text)
            .map_err(|e| WorldError::Parse { entry: "action catalog".into(), message: e.to_string() })?;
        ActionCatalog::from_docs(docs)
    }

    pub fn from_docs(docs: Vec<ActionSchemaDoc>) -> Result<ActionCatalog, WorldError> {
        let mut schemas = BTreeMap::new();
        for doc in docs {
            let schema = parse_schema(&doc)?;
            if schemas.insert(schema.name.clone(), schema).is_some() {
                return Err(WorldError::Validation(format!("duplicate action schema `{}`", doc.name)));
            }
        }
        Ok(ActionCatalog { schemas })
    }

    pub fn get(&self, name: &str) -> Option<&ActionSchema> {
        self.schemas.get(name)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionSchema> {
        self.schemas.values()
    }
}

fn parse_template(entry: &str, allow_any: bool) -> Result<PredicateTemplate, String> {
    let (name, args) = split_call(entry).ok_or("expected PRED(arg) or PRED(arg, arg)")?;
    let relation = Relation::from_token(name).ok_or_else(|| format!("unknown predicate `{name}`"))?;
    let mut parsed = Vec::with_capacity(args.len());
    for arg in args {
        let arg = TemplateArg::parse(arg).ok_or_else(|| format!("bad template argument `{arg}`"))?;
        if arg == TemplateArg::Any && !allow_any {
            return Err("wildcard `*` is only allowed in delete effects".into());
        }
        parsed.push(arg);
    }
    match (relation.kind(), parsed.as_slice()) {
        (PredicateKind::Unary, [s]) => Ok(PredicateTemplate { relation, subject: *s, object: None }),
        (PredicateKind::Binary, [s, o]) => Ok(PredicateTemplate { relation, subject: *s, object: Some(*o) }),
        _ => Err(format!("wrong argument count for {name}")),
    }
}

fn parse_condition(entry: &str) -> Result<Condition, String> {
    let entry = entry.trim();
    if let Some(rest) = entry.strip_prefix('!') {
        return parse_template(rest, false).map(Condition::NotHolds);
    }
    if let Some((name, args)) = split_call(entry) {
        let derived = match name {
            "HAND_FREE" => Some(DerivedCheck::HandFree),
            "REACHABLE" => Some(DerivedCheck::Reachable),
            _ => None,
        };
        if let Some(check) = derived {
            let [arg] = args.as_slice() else {
                return Err(format!("{name} takes one argument"));
            };
            let arg = TemplateArg::parse(arg).filter(|a| *a != TemplateArg::Any);
            return arg.map(|a| Condition::Derived(check, a)).ok_or_else(|| format!("bad argument for {name}"));
        }
    }
    parse_template(entry, false).map(Condition::Holds)
}

fn template_params(t: &PredicateTemplate) -> impl Iterator<Item = usize> {
    [Some(t.subject), t.object].into_iter().flatten().filter_map(|a| {
        if let TemplateArg::Param(k) = a {
            Some(k)
        } else {
            None
        }
    })
}

fn parse_schema(doc: &ActionSchemaDoc) -> Result<ActionSchema, WorldError> {
    let invalid = |message: String| WorldError::Parse { entry: format!("action `{}`", doc.name), message };
    if doc.name.is_empty() || doc.name != doc.name.to_ascii_lowercase() {
        return Err(invalid("action name must be a non-empty lowercase token".into()));
    }
    if !(1..=2).contains(&doc.arity) {
        return Err(invalid(format!("arity must be 1 or 2, got {}", doc.arity)));
    }
    if doc.required_properties.len() > doc.arity {
        return Err(invalid("more property lists than parameters".into()));
    }
    let mut required_properties: Vec<BTreeSet<String>> =
        doc.required_properties.iter().map(|ps| ps.iter().cloned().collect()).collect();
    required_properties.resize(doc.arity, BTreeSet::new());

    let preconditions =
        doc.preconditions.iter().map(|c| parse_condition(c)).collect::<Result<Vec<_>, _>>().map_err(invalid)?;
    let add_effects =
        doc.add.iter().map(|e| parse_template(e, false)).collect::<Result<Vec<_>, _>>().map_err(invalid)?;
    let del_effects =
        doc.del.iter().map(|e| parse_template(e, true)).collect::<Result<Vec<_>, _>>().map_err(invalid)?;

    let mut referenced = Vec::new();
    for c in &preconditions {
        match c {
            Condition::Holds(t) | Condition::NotHolds(t) => referenced.extend(template_params(t)),
            Condition::Derived(_, TemplateArg::Param(k)) => referenced.push(*k),
            Condition::Derived(..) => {}
        }
    }
    for t in add_effects.iter().chain(&del_effects) {
        referenced.extend(template_params(t));
    }
    if let Some(k) = referenced.into_iter().find(|k| *k == 0 || *k > doc.arity) {
        return Err(invalid(format!("template references undeclared parameter ?{k}")));
    }

    // Adding one side of an exclusive pair must delete the other side.
    for add in &add_effects {
        if let Some(other) = add.relation.exclusive_with() {
            let paired = del_effects.iter().any(|d| d.relation == other && d.subject == add.subject);
            if !paired {
                return Err(invalid(format!("adds {} without deleting {}", add.relation.token(), other.token())));
            }
        }
    }

    Ok(ActionSchema {
        name: doc.name.clone(),
        arity: doc.arity,
        required_properties,
        preconditions,
        add_effects,
        del_effects,
    })
}
