//! Expected-timeline alignment and I/O contention interval analysis.
//!
//! Alignment lays every leaf's four periods on a shared clock assuming
//! colocated, zero-overhead composites: sequences and fallbacks run
//! serially, parallel children share their composite's start, decorator
//! spans stretch by the expected iteration count, and each leaf's periods
//! scale with its effective execution probability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BtNode, WorkflowDef};
use crate::ids::{LeafId, NodeId};
use crate::trace::profile::{compute_effective_probs, FunctionProfile, LoopProfile};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("no profile for leaf `{0}`")]
    MissingProfile(LeafId),
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(LeafId),
}

/// Half-open interval in expected seconds from workflow start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub start: f64,
    pub end: f64,
}

impl Period {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &Period) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// Expected schedule of one leaf's four periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafTimeline {
    pub leaf_id: LeafId,
    pub init: Period,
    pub input: Period,
    pub exec: Period,
    pub output: Period,
}

impl LeafTimeline {
    pub fn io_periods(&self) -> [Period; 2] {
        [self.input, self.output]
    }

    pub fn end(&self) -> f64 {
        self.output.end
    }
}

/// Expected alignment of all leaves of one workflow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTimeline {
    pub leaves: BTreeMap<LeafId, LeafTimeline>,
}

impl ExpectedTimeline {
    pub fn get(&self, leaf: &LeafId) -> Option<&LeafTimeline> {
        self.leaves.get(leaf)
    }

    /// Expected makespan: latest period end over all leaves.
    pub fn span(&self) -> f64 {
        self.leaves.values().map(|l| l.end()).fold(0.0, f64::max)
    }
}

/// Aligns a tree using effective probabilities derived from the profiles
/// on this same tree.
pub fn align(
    tree: &WorkflowDef,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    loops: &BTreeMap<NodeId, LoopProfile>,
) -> Result<ExpectedTimeline, AlignError> {
    let effective = compute_effective_probs(tree, profiles);
    align_with(tree, profiles, loops, &effective)
}

/// Aligns a tree with externally fixed effective leaf probabilities.
/// Partitioning passes probabilities computed once on the original tree
/// so residual-phase timelines keep the real reach semantics.
pub fn align_with(
    tree: &WorkflowDef,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    loops: &BTreeMap<NodeId, LoopProfile>,
    effective_probs: &BTreeMap<LeafId, f64>,
) -> Result<ExpectedTimeline, AlignError> {
    for leaf in tree.leaf_ids() {
        if !profiles.contains_key(leaf) {
            return Err(AlignError::MissingProfile(leaf.clone()));
        }
    }
    let mut timeline = ExpectedTimeline::default();
    layout(&tree.root, profiles, loops, effective_probs, 0.0, 1.0, &mut timeline);
    Ok(timeline)
}

/// Recursive layout; returns the subtree's expected end time.
fn layout(
    node: &BtNode,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    loops: &BTreeMap<NodeId, LoopProfile>,
    effective: &BTreeMap<LeafId, f64>,
    t0: f64,
    iter_scale: f64,
    out: &mut ExpectedTimeline,
) -> f64 {
    match node {
        BtNode::Leaf { leaf_id, .. } => {
            let profile = &profiles[leaf_id];
            let p = effective.get(leaf_id).copied().unwrap_or(profile.exec_prob);
            let scale = p * iter_scale;
            let mut t = t0;
            let mut period = |len: f64| {
                let start = t;
                t += len * scale;
                Period { start, end: t }
            };
            let entry = LeafTimeline {
                leaf_id: leaf_id.clone(),
                init: period(profile.init_delay_s),
                input: period(profile.input_delay_s),
                exec: period(profile.exec_delay_s),
                output: period(profile.output_delay_s),
            };
            out.leaves.insert(leaf_id.clone(), entry);
            t
        }
        BtNode::Sequence { children, .. } | BtNode::Fallback { children, .. } => {
            let mut t = t0;
            for child in children {
                t = layout(child, profiles, loops, effective, t, iter_scale, out);
            }
            t
        }
        BtNode::Parallel { children, .. } => {
            let mut end = t0;
            for child in children {
                let child_end =
                    layout(child, profiles, loops, effective, t0, iter_scale, out);
                end = end.max(child_end);
            }
            end
        }
        BtNode::Decorator { id, child, .. } => {
            let iterations =
                loops.get(id).map(|l| l.expected_iterations).unwrap_or(1.0).max(1.0);
            layout(child, profiles, loops, effective, t0, iter_scale * iterations, out)
        }
    }
}

/// One maximal interval covered by a fixed number of I/O periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoInterval {
    pub start: f64,
    pub end: f64,
    pub degree: u32,
}

impl IoInterval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Sweep over the input and output periods of a leaf subset: maximal
/// intervals annotated with the number of covering periods. Degree-zero
/// gaps are omitted.
pub fn io_intervals(
    timeline: &ExpectedTimeline,
    leaf_subset: &[LeafId],
) -> Result<Vec<IoInterval>, AlignError> {
    let mut periods = Vec::new();
    for leaf in leaf_subset {
        let entry = timeline.get(leaf).ok_or_else(|| AlignError::UnknownLeaf(leaf.clone()))?;
        for p in entry.io_periods() {
            if !p.is_empty() {
                periods.push(p);
            }
        }
    }
    if periods.is_empty() {
        return Ok(Vec::new());
    }
    let mut bounds: Vec<f64> = periods.iter().flat_map(|p| [p.start, p.end]).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut out: Vec<IoInterval> = Vec::new();
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let degree =
            periods.iter().filter(|p| p.start <= start && end <= p.end).count() as u32;
        if degree == 0 {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.end == start && last.degree == degree => last.end = end,
            _ => out.push(IoInterval { start, end, degree }),
        }
    }
    Ok(out)
}
