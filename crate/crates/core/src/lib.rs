//! Vote-tree planning over a symbolic household world.
//!
//! Sampled plans are parsed into commands, pooled, reordered, merged into a
//! vote-weighted prefix tree, and executed with backtracking on failure.

pub mod eval;
pub mod executor;
pub mod plan;
pub mod prompt;
pub mod seed;
pub mod tree;
pub mod world;
