//! Vote-weighted prefix tree over reordered plans.
//!
//! Every node except the root carries a command and a vote: the number of
//! aggregated plans whose command sequence passes through it. Plans sharing a
//! prefix share a branch. A node is end-marked when at least one plan ends
//! exactly there.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{Command, Plan};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("no_plans: cannot build a vote tree from an empty plan list")]
    NoPlans,
    #[error("node {child} is not a child of node {parent}")]
    NotAChild { parent: usize, child: usize },
    #[error("malformed tree document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTreeNode {
    command: Option<Command>,
    vote: u32,
    end_marker: bool,
    children: BTreeMap<String, NodeId>,
    parent: Option<NodeId>,
}

impl VoteTreeNode {
    fn new(command: Option<Command>, parent: Option<NodeId>) -> Self {
        VoteTreeNode { command, vote: 0, end_marker: false, children: BTreeMap::new(), parent }
    }

    /// `None` only for the root.
    pub fn command(&self) -> Option<&Command> {
        self.command.as_ref()
    }

    pub fn vote(&self) -> u32 {
        self.vote
    }

    pub fn end_marker(&self) -> bool {
        self.end_marker
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

/// How the executor picks among a node's remaining children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Highest vote; ties go to the lexicographically smallest command.
    #[default]
    MaxVote,
    /// Uniform over the remaining children, from a seeded stream.
    Random { seed: u64 },
}

/// Stateful child picker; the random variant owns its RNG stream.
#[derive(Debug, Clone)]
pub struct ChildSelector {
    strategy: SelectionStrategy,
    rng: Option<ChaCha8Rng>,
}

impl ChildSelector {
    pub fn new(strategy: SelectionStrategy) -> Self {
        let rng = match strategy {
            SelectionStrategy::MaxVote => None,
            SelectionStrategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        ChildSelector { strategy, rng }
    }

    pub fn strategy(&self) -> SelectionStrategy {
        self.strategy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub max_depth: usize,
    pub leaf_count: usize,
    pub distinct_plans_represented: usize,
}

/// Serialized node: `{command, vote, end_marker, children[]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub command: Option<Command>,
    pub vote: u32,
    pub end_marker: bool,
    pub children: Vec<TreeDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTree {
    nodes: Vec<VoteTreeNode>,
}

const ROOT: NodeId = NodeId(0);

impl VoteTree {
    /// Aggregates plans into a vote tree. The root's vote is the number of
    /// plans; each other node counts the plans passing through it.
    pub fn build(plans: &[Plan]) -> Result<VoteTree, TreeError> {
        VoteTree::from_sequences(plans.iter().map(|p| p.commands.as_slice()))
    }

    pub fn from_sequences<'a>(plans: impl IntoIterator<Item = &'a [Command]>) -> Result<VoteTree, TreeError> {
        let mut tree = VoteTree { nodes: vec![VoteTreeNode::new(None, None)] };
        let mut count = 0u32;
        for plan in plans {
            count += 1;
            let mut current = ROOT;
            for command in plan {
                let key = command.canonical_form();
                current = match tree.nodes[current.0].children.get(key) {
                    Some(&child) => child,
                    None => {
                        let child = NodeId(tree.nodes.len());
                        tree.nodes.push(VoteTreeNode::new(Some(command.clone()), Some(current)));
                        tree.nodes[current.0].children.insert(key.to_string(), child);
                        child
                    }
                };
                tree.nodes[current.0].vote += 1;
            }
            tree.nodes[current.0].end_marker = true;
        }
        if count == 0 {
            return Err(TreeError::NoPlans);
        }
        tree.nodes[ROOT.0].vote = count;
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        ROOT
    }

    pub fn node(&self, id: NodeId) -> &VoteTreeNode {
        &self.nodes[id.0]
    }

    /// Current children in canonical-form order.
    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id.0].children.values().copied()
    }

    pub fn child_by_command(&self, id: NodeId, canonical: &str) -> Option<NodeId> {
        self.nodes[id.0].children.get(canonical).copied()
    }

    /// Commands from the root down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<&Command> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(n) = cursor {
            let node = &self.nodes[n.0];
            path.extend(node.command.as_ref());
            cursor = node.parent;
        }
        path.reverse();
        path
    }

    pub fn select_child(&self, id: NodeId, selector: &mut ChildSelector) -> Option<NodeId> {
        let children = &self.nodes[id.0].children;
        if children.is_empty() {
            return None;
        }
        match &mut selector.rng {
            None => {
                // BTreeMap iterates in canonical order, so the first maximum wins ties.
                let mut best: Option<NodeId> = None;
                for &child in children.values() {
                    if best.is_none_or(|b| self.nodes[child.0].vote > self.nodes[b.0].vote) {
                        best = Some(child);
                    }
                }
                best
            }
            Some(rng) => {
                let k = rng.random_range(0..children.len());
                children.values().nth(k).copied()
            }
        }
    }

    /// Detaches `child` and its subtree from `parent`. Votes are not recomputed.
    pub fn remove_child(&mut self, parent: NodeId, child: NodeId) -> Result<(), TreeError> {
        let not_a_child = TreeError::NotAChild { parent: parent.0, child: child.0 };
        let key = self.nodes[child.0].command.as_ref().ok_or(not_a_child.clone())?.canonical_form().to_string();
        match self.nodes[parent.0].children.get(&key) {
            Some(&c) if c == child => {
                self.nodes[parent.0].children.remove(&key);
                Ok(())
            }
            _ => Err(not_a_child),
        }
    }

    /// Nodes on the max-vote path from the root to a leaf (root excluded).
    pub fn greedy_path(&self) -> Vec<NodeId> {
        let mut selector = ChildSelector::new(SelectionStrategy::MaxVote);
        let mut path = Vec::new();
        let mut node = ROOT;
        while let Some(child) = self.select_child(node, &mut selector) {
            path.push(child);
            node = child;
        }
        path
    }

    /// Nodes reachable from the root, depth-first in canonical order, with depths.
    fn walk(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(ROOT, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            out.push((id, depth));
            for child in self.nodes[id.0].children.values().rev() {
                stack.push((*child, depth + 1));
            }
        }
        out
    }

    pub fn stats(&self) -> TreeStats {
        let reachable = self.walk();
        TreeStats {
            node_count: reachable.len(),
            max_depth: reachable.iter().map(|(_, d)| *d).max().unwrap_or(0),
            leaf_count: reachable.iter().filter(|(id, _)| *id != ROOT && self.nodes[id.0].is_leaf()).count(),
            distinct_plans_represented: reachable.iter().filter(|(id, _)| self.nodes[id.0].end_marker).count(),
        }
    }

    pub fn to_doc(&self) -> TreeDoc {
        self.doc_at(ROOT)
    }

    fn doc_at(&self, id: NodeId) -> TreeDoc {
        let node = &self.nodes[id.0];
        TreeDoc {
            command: node.command.clone(),
            vote: node.vote,
            end_marker: node.end_marker,
            children: node.children.values().map(|c| self.doc_at(*c)).collect(),
        }
    }

    pub fn from_doc(doc: &TreeDoc) -> Result<VoteTree, TreeError> {
        if doc.command.is_some() {
            return Err(TreeError::Malformed("root must not carry a command".into()));
        }
        let mut tree = VoteTree { nodes: vec![VoteTreeNode::new(None, None)] };
        tree.nodes[0].vote = doc.vote;
        tree.nodes[0].end_marker = doc.end_marker;
        let mut stack = vec![(ROOT, doc)];
        while let Some((id, d)) = stack.pop() {
            let child_votes: u64 = d.children.iter().map(|c| u64::from(c.vote)).sum();
            if child_votes > u64::from(d.vote) {
                return Err(TreeError::Malformed(format!(
                    "children outvote their parent ({child_votes} > {})",
                    d.vote
                )));
            }
            for child in &d.children {
                let command = child
                    .command
                    .clone()
                    .ok_or_else(|| TreeError::Malformed("non-root node without a command".into()))?;
                if child.vote == 0 {
                    return Err(TreeError::Malformed(format!("node {command} has zero votes")));
                }
                let key = command.canonical_form().to_string();
                let cid = NodeId(tree.nodes.len());
                if tree.nodes[id.0].children.insert(key.clone(), cid).is_some() {
                    return Err(TreeError::Malformed(format!("duplicate sibling {key}")));
                }
                let mut node = VoteTreeNode::new(Some(command), Some(id));
                node.vote = child.vote;
                node.end_marker = child.end_marker;
                tree.nodes.push(node);
                stack.push((cid, child));
            }
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("tree documents serialize")
    }

    pub fn from_json(text: &str) -> Result<VoteTree, TreeError> {
        let doc: TreeDoc = serde_json::from_str(text).map_err(|e| TreeError::Malformed(e.to_string()))?;
        VoteTree::from_doc(&doc)
    }

    /// Indented text outline; `*` marks nodes where a plan ends.
    pub fn outline(&self) -> String {
        let mut out = String::new();
        for (id, depth) in self.walk() {
            let node = &self.nodes[id.0];
            let label = node.command.as_ref().map_or("(root)".to_string(), |c| c.to_string());
            let marker = if node.end_marker { " *" } else { "" };
            let _ = writeln!(out, "{}{} [{}]{}", "  ".repeat(depth), label, node.vote, marker);
        }
        out
    }
}
