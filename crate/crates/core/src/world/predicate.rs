use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorldError;

/// Reserved subject token for the acting agent.
pub const AGENT: &str = "agent";

/// Relation tokens a [`Predicate`] can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Open,
    Closed,
    On,
    Off,
    Clean,
    Dirty,
    HeldByAgent,
    Sitting,
    Inside,
    OnTop,
    CloseTo,
    Facing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredicateKind {
    Unary,
    Binary,
}

impl Relation {
    pub const ALL: [Relation; 12] = [
        Relation::Open,
        Relation::Closed,
        Relation::On,
        Relation::Off,
        Relation::Clean,
        Relation::Dirty,
        Relation::HeldByAgent,
        Relation::Sitting,
        Relation::Inside,
        Relation::OnTop,
        Relation::CloseTo,
        Relation::Facing,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Relation::Open => "OPEN",
            Relation::Closed => "CLOSED",
            Relation::On => "ON",
            Relation::Off => "OFF",
            Relation::Clean => "CLEAN",
            Relation::Dirty => "DIRTY",
            Relation::HeldByAgent => "HELD_BY_AGENT",
            Relation::Sitting => "SITTING",
            Relation::Inside => "INSIDE",
            Relation::OnTop => "ON_TOP",
            Relation::CloseTo => "CLOSE_TO",
            Relation::Facing => "FACING",
        }
    }

    pub fn from_token(token: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.token() == token)
    }

    pub fn kind(self) -> PredicateKind {
        match self {
            Relation::Inside | Relation::OnTop | Relation::CloseTo | Relation::Facing => PredicateKind::Binary,
            _ => PredicateKind::Unary,
        }
    }

    /// The relation that may never hold on the same subject at the same time.
    pub fn exclusive_with(self) -> Option<Relation> {
        match self {
            Relation::Open => Some(Relation::Closed),
            Relation::Closed => Some(Relation::Open),
            Relation::On => Some(Relation::Off),
            Relation::Off => Some(Relation::On),
            _ => None,
        }
    }

    /// Relations that place an object somewhere; dropped while it is held.
    pub fn is_location(self) -> bool {
        matches!(self, Relation::Inside | Relation::OnTop)
    }
}

/// One ground fact about the world, e.g. `OPEN(fridge)` or `INSIDE(salmon,microwave)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Predicate {
    pub relation: Relation,
    pub subject: String,
    pub object: Option<String>,
}

impl Predicate {
    pub fn unary(relation: Relation, subject: impl Into<String>) -> Self {
        debug_assert_eq!(relation.kind(), PredicateKind::Unary);
        Predicate { relation, subject: subject.into(), object: None }
    }

    pub fn binary(relation: Relation, subject: impl Into<String>, object: impl Into<String>) -> Self {
        debug_assert_eq!(relation.kind(), PredicateKind::Binary);
        Predicate { relation, subject: subject.into(), object: Some(object.into()) }
    }

    pub fn kind(&self) -> PredicateKind {
        self.relation.kind()
    }

    /// Agent pose facts (where the agent stands or looks) rather than task state.
    pub fn is_agent_pose(&self) -> bool {
        self.subject == AGENT && matches!(self.relation, Relation::CloseTo | Relation::Facing)
    }

    pub fn mentions(&self, id: &str) -> bool {
        self.subject == id || self.object.as_deref() == Some(id)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.object {
            Some(obj) => write!(f, "{}({},{})", self.relation.token(), self.subject, obj),
            None => write!(f, "{}({})", self.relation.token(), self.subject),
        }
    }
}

/// Splits `NAME(a, b)` into the name and its trimmed argument list.
pub(crate) fn split_call(text: &str) -> Option<(&str, Vec<&str>)> {
    let text = text.trim();
    let open = text.find('(')?;
    let inner = text.strip_suffix(')')?.get(open + 1..)?;
    let name = text[..open].trim();
    if name.is_empty() || inner.contains('(') || inner.contains(')') {
        return None;
    }
    let args = inner.split(',').map(str::trim).collect::<Vec<_>>();
    if args.iter().any(|a| a.is_empty()) {
        return None;
    }
    Some((name, args))
}

impl FromStr for Predicate {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| WorldError::Parse { entry: s.to_string(), message: why.to_string() };
        let (name, args) = split_call(s).ok_or_else(|| bad("expected PRED(subject) or PRED(subject, object)"))?;
        let relation = Relation::from_token(&name.to_ascii_uppercase()).ok_or_else(|| bad("unknown predicate"))?;
        match (relation.kind(), args.as_slice()) {
            (PredicateKind::Unary, [subject]) => Ok(Predicate::unary(relation, subject.to_ascii_lowercase())),
            (PredicateKind::Binary, [subject, object]) => {
                Ok(Predicate::binary(relation, subject.to_ascii_lowercase(), object.to_ascii_lowercase()))
            }
            (PredicateKind::Unary, _) => Err(bad("unary predicate takes exactly one argument")),
            (PredicateKind::Binary, _) => Err(bad("binary predicate takes exactly two arguments")),
        }
    }
}

impl Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_unary_and_binary() {
        let p: Predicate = "CLOSED(fridge)".parse().unwrap();
        assert_eq!(p, Predicate::unary(Relation::Closed, "fridge"));
        let p: Predicate = "INSIDE( salmon , microwave )".parse().unwrap();
        assert_eq!(p, Predicate::binary(Relation::Inside, "salmon", "microwave"));
        assert_eq!(p.to_string(), "INSIDE(salmon,microwave)");
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!("OPEN(fridge, door)".parse::<Predicate>().is_err());
        assert!("INSIDE(salmon)".parse::<Predicate>().is_err());
        assert!("LEVITATING(cup)".parse::<Predicate>().is_err());
        assert!("OPEN fridge".parse::<Predicate>().is_err());
    }

    #[test]
    fn display_round_trips_for_every_relation() {
        for relation in Relation::ALL {
            let p = match relation.kind() {
                PredicateKind::Unary => Predicate::unary(relation, "cup"),
                PredicateKind::Binary => Predicate::binary(relation, "cup", "table"),
            };
            assert_eq!(p.to_string().parse::<Predicate>().unwrap(), p);
        }
    }
}
