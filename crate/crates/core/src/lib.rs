//! Trace-driven model of vertical memory partitioning.
//!
//! Physical-address bits that select LLC sets and DRAM banks are exposed as
//! page colors. A policy chooses which color bits the OS controls; the
//! allocator hands each application frames from its color quota; the
//! hierarchy replays traces through private caches, a shared LLC and
//! open-row DRAM banks and counts the interference that leaks between
//! applications. On top of that sits an online classifier (hot pages and
//! weighted page distribution from access-bit sampling) and a decision tree
//! that picks a policy and coalesces quotas for a workload mix.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod advisor;
pub mod allocator;
pub mod classifier;
pub mod experiment;
pub mod hierarchy;
pub mod mapping;
pub mod policies;
pub mod workloads;

/// Dense application index. Names live in the trace's name table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AppId(pub u16);

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
