//! Iterative-removal partitioning of a behavior tree into subpaths.
//!
//! Each phase aligns the residual tree, enumerates candidate paths,
//! scores them, selects one subpath and removes its leaves; ordering
//! among functions is transitive and invariant to removals, so every
//! emitted subpath is valid on the original tree.
//!
//! The I/O-contention-aware policy anchors each phase on a leaf covering
//! the earliest maximum-contention-degree interval (subpaths contributing
//! to the maximum degree are pruned first) and then promotes the anchored
//! candidate with the most expected I/O.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BtNode, FunctionSpec, WorkflowDef};
use crate::ids::{FunctionId, LeafId, NodeId};
use crate::path::{expand_paths_weighted, Path, Subpath, DEFAULT_EXPANSION_CAP};
use crate::trace::{
    align_with, compute_effective_probs, io_intervals, EstimateOutput, ExpectedTimeline,
    FunctionProfile, LoopProfile,
};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("tree has no schedulable leaves")]
    EmptyTree,
    #[error("partition policy `{0}` is not registered")]
    PolicyNotRegistered(String),
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(LeafId),
    #[error("alignment failed: {0}")]
    Align(#[from] crate::trace::AlignError),
    #[error("path analysis failed: {0}")]
    Path(#[from] crate::path::PathError),
}

/// Subpath promotion policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionPolicy {
    IoContentionAware,
    LongestPath,
    Named { name: String },
}

/// Inputs a scorer sees for one candidate.
pub struct ScoreContext<'a> {
    pub timeline: &'a ExpectedTimeline,
    /// Expected I/O bytes per leaf (probability- and iteration-weighted).
    pub io_bytes: &'a BTreeMap<LeafId, f64>,
    /// Leaves still unassigned in this phase.
    pub residual_leaves: &'a [LeafId],
}

/// Lexicographic score; larger wins. The trailing leaf list gives the
/// comparison a total order.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub components: Vec<f64>,
    pub leaves: Vec<LeafId>,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        for (a, b) in self.components.iter().zip(other.components.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Greater => return true,
                std::cmp::Ordering::Less => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
        match self.components.len().cmp(&other.components.len()) {
            std::cmp::Ordering::Greater => return true,
            std::cmp::Ordering::Less => return false,
            std::cmp::Ordering::Equal => {}
        }
        // Smaller smallest-leaf first, then lexicographically smaller list.
        match (self.leaves.iter().min(), other.leaves.iter().min()) {
            (Some(a), Some(b)) if a != b => return a < b,
            _ => {}
        }
        self.leaves < other.leaves
    }
}

type PolicyFn = dyn Fn(&Path, &ScoreContext<'_>) -> Vec<f64> + Send + Sync;

/// Registry of named promotion policies.
#[derive(Default, Clone)]
pub struct PolicyRegistry {
    policies: BTreeMap<String, Arc<PolicyFn>>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        PolicyRegistry::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        f: impl Fn(&Path, &ScoreContext<'_>) -> Vec<f64> + Send + Sync + 'static,
    ) {
        self.policies.insert(name.to_string(), Arc::new(f));
    }
}

/// Scores one candidate under a policy.
///
/// I/O-contention-aware: (peak contention contribution, expected I/O
/// bytes, path length, smallest-leaf and leaf-list tie breaks), where the
/// peak contribution is the summed overlap of the candidate's I/O periods
/// with the maximum-degree intervals over the residual leaves.
pub fn score_candidate(
    candidate: &Path,
    ctx: &ScoreContext<'_>,
    policy: &PartitionPolicy,
    registry: &PolicyRegistry,
) -> Result<Score, PartitionError> {
    for leaf in &candidate.leaves {
        if ctx.timeline.get(leaf).is_none() {
            return Err(PartitionError::UnknownLeaf(leaf.clone()));
        }
    }
    let components = match policy {
        PartitionPolicy::IoContentionAware => {
            let intervals = io_intervals(ctx.timeline, ctx.residual_leaves)?;
            let dmax = intervals.iter().map(|i| i.degree).max().unwrap_or(0);
            let peaks: Vec<_> = intervals.iter().filter(|i| i.degree == dmax).collect();
            let mut peak_overlap = 0.0;
            for leaf in &candidate.leaves {
                let entry = ctx.timeline.get(leaf).unwrap();
                for p in entry.io_periods() {
                    for peak in &peaks {
                        let lo = p.start.max(peak.start);
                        let hi = p.end.min(peak.end);
                        peak_overlap += (hi - lo).max(0.0);
                    }
                }
            }
            let bytes: f64 =
                candidate.leaves.iter().map(|l| ctx.io_bytes.get(l).copied().unwrap_or(0.0)).sum();
            vec![peak_overlap, bytes, candidate.leaves.len() as f64]
        }
        PartitionPolicy::LongestPath => vec![candidate.leaves.len() as f64],
        PartitionPolicy::Named { name } => {
            let f = registry
                .policies
                .get(name)
                .ok_or_else(|| PartitionError::PolicyNotRegistered(name.clone()))?;
            f(candidate, ctx)
        }
    };
    Ok(Score { components, leaves: candidate.leaves.clone() })
}

/// Ordered disjoint subpaths covering every schedulable leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub workflow_id: String,
    pub subpaths: Vec<Subpath>,
    pub residual_phases: usize,
}

/// Partitions a tree into subpaths with the default expansion cap.
pub fn partition(
    tree: &WorkflowDef,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    loops: &BTreeMap<NodeId, LoopProfile>,
    policy: &PartitionPolicy,
) -> Result<PartitionResult, PartitionError> {
    Partitioner::default().partition(tree, profiles, loops, policy)
}

pub struct Partitioner {
    pub expansion_cap: usize,
    pub registry: PolicyRegistry,
}

impl Default for Partitioner {
    fn default() -> Self {
        Partitioner { expansion_cap: DEFAULT_EXPANSION_CAP, registry: PolicyRegistry::new() }
    }
}

impl Partitioner {
    pub fn partition(
        &self,
        tree: &WorkflowDef,
        profiles: &BTreeMap<LeafId, FunctionProfile>,
        loops: &BTreeMap<NodeId, LoopProfile>,
        policy: &PartitionPolicy,
    ) -> Result<PartitionResult, PartitionError> {
        let real_leaves = tree.real_leaf_ids();
        if real_leaves.is_empty() {
            return Err(PartitionError::EmptyTree);
        }
        if let PartitionPolicy::Named { name } = policy {
            if !self.registry.policies.contains_key(name) {
                return Err(PartitionError::PolicyNotRegistered(name.clone()));
            }
        }

        // Effective probabilities and expected I/O weights are computed
        // once on the original tree; residual phases must keep the real
        // reach semantics (a fallback's second child does not become its
        // first child's peer just because the first was assigned).
        let effective = compute_effective_probs(tree, profiles);
        let io_bytes = expected_io_bytes(tree, profiles, loops, &effective);
        let companions = companion_map(tree);

        let mut residual = tree.clone();
        let mut subpaths = Vec::new();
        let mut phase = 0usize;

        loop {
            let remaining = residual.real_leaf_ids();
            if remaining.is_empty() {
                break;
            }
            phase += 1;
            let timeline = align_with(&residual, profiles, loops, &effective)?;
            let candidates = self.candidates(&residual, &remaining, &io_bytes)?;
            let ctx = ScoreContext {
                timeline: &timeline,
                io_bytes: &io_bytes,
                residual_leaves: &remaining,
            };
            let mut anchored: Vec<&Path> = match policy {
                PartitionPolicy::IoContentionAware => {
                    let anchor = pick_anchor(&timeline, &remaining, &residual, &io_bytes);
                    candidates.iter().filter(|p| p.leaves.contains(&anchor)).collect()
                }
                _ => candidates.iter().collect(),
            };
            if anchored.is_empty() {
                // A zero-byte anchor can be trimmed out of every candidate;
                // fall back to the full set rather than stalling the phase.
                anchored = candidates.iter().collect();
            }
            let mut best: Option<(Score, &Path)> = None;
            for cand in anchored {
                let score = score_candidate(cand, &ctx, policy, &self.registry)?;
                let better = match &best {
                    None => true,
                    Some((s, _)) => score.better_than(s),
                };
                if better {
                    best = Some((score, cand));
                }
            }
            let (_, chosen) = best.expect("candidate set is nonempty");

            let mut doomed: BTreeSet<LeafId> = chosen.leaves.iter().cloned().collect();
            let synthetic: Vec<LeafId> = companions
                .iter()
                .filter(|(s, companion)| {
                    doomed.contains(companion) && residual.leaf(s).is_some()
                })
                .map(|(s, _)| s.clone())
                .collect();
            doomed.extend(synthetic.iter().cloned());

            subpaths.push(Subpath {
                subpath_id: format!("sp{phase}"),
                workflow_id: tree.workflow_id.clone(),
                leaves: chosen.leaves.clone(),
                synthetic,
            });

            match remove_leaves(&residual.root, &doomed) {
                Some(root) => {
                    residual = WorkflowDef::new(
                        residual.workflow_id.clone(),
                        root,
                        residual.functions().values().cloned().collect(),
                    );
                }
                None => break,
            }
        }

        // Orphan synthetic leaves (none of their companions were real
        // leaves of the tree) ride with the first subpath.
        if !subpaths.is_empty() {
            let assigned: BTreeSet<LeafId> =
                subpaths.iter().flat_map(|s| s.all_leaves().cloned()).collect();
            let mut extras: Vec<LeafId> = tree
                .leaf_ids()
                .iter()
                .filter(|l| tree.is_synthetic(l) && !assigned.contains(*l))
                .cloned()
                .collect();
            if !extras.is_empty() {
                subpaths[0].synthetic.append(&mut extras);
            }
        }

        Ok(PartitionResult {
            workflow_id: tree.workflow_id.clone(),
            subpaths,
            residual_phases: phase,
        })
    }

    /// Candidate paths: expansions toward every residual leaf, synthetic
    /// leaves dropped, trailing zero-I/O leaves trimmed (unless the whole
    /// candidate carries no I/O), deduplicated.
    fn candidates(
        &self,
        residual: &WorkflowDef,
        remaining: &[LeafId],
        io_bytes: &BTreeMap<LeafId, f64>,
    ) -> Result<Vec<Path>, PartitionError> {
        let weight = |l: &LeafId| io_bytes.get(l).copied().unwrap_or(0.0);
        let mut out: Vec<Path> = Vec::new();
        for leaf in remaining {
            let paths = expand_paths_weighted(
                residual,
                &NodeId::from(leaf),
                self.expansion_cap,
                Some(&weight),
            )?;
            for mut p in paths {
                p.leaves.retain(|l| !residual.is_synthetic(l));
                if p.leaves.iter().any(|l| weight(l) > 0.0) {
                    while let Some(last) = p.leaves.last() {
                        if weight(last) == 0.0 {
                            p.leaves.pop();
                        } else {
                            break;
                        }
                    }
                }
                if !p.leaves.is_empty() {
                    out.push(p);
                }
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Anchor of one contention-aware phase: among the leaves covering the
/// earliest maximal interval of maximum contention degree, the one with
/// the most expected I/O (ties to the smallest leaf id). With no I/O at
/// all, the first remaining leaf in document order.
fn pick_anchor(
    timeline: &ExpectedTimeline,
    remaining: &[LeafId],
    residual: &WorkflowDef,
    io_bytes: &BTreeMap<LeafId, f64>,
) -> LeafId {
    let intervals = io_intervals(timeline, remaining).unwrap_or_default();
    let dmax = intervals.iter().map(|i| i.degree).max().unwrap_or(0);
    if dmax > 0 {
        if let Some(peak) = intervals.iter().find(|i| i.degree == dmax) {
            let mut covering: Vec<&LeafId> = remaining
                .iter()
                .filter(|l| {
                    timeline.get(l).is_some_and(|entry| {
                        entry
                            .io_periods()
                            .iter()
                            .any(|p| p.start <= peak.start && peak.end <= p.end)
                    })
                })
                .collect();
            covering.sort_by(|a, b| {
                let wa = io_bytes.get(*a).copied().unwrap_or(0.0);
                let wb = io_bytes.get(*b).copied().unwrap_or(0.0);
                wb.total_cmp(&wa).then(a.cmp(b))
            });
            if let Some(first) = covering.first() {
                return (*first).clone();
            }
        }
    }
    residual
        .leaf_ids()
        .iter()
        .find(|l| remaining.contains(l))
        .cloned()
        .expect("phase runs only while real leaves remain")
}

/// Expected request-level I/O bytes per leaf: profile bytes weighted by
/// effective probability and expected decorator iterations.
pub fn expected_io_bytes(
    tree: &WorkflowDef,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    loops: &BTreeMap<NodeId, LoopProfile>,
    effective: &BTreeMap<LeafId, f64>,
) -> BTreeMap<LeafId, f64> {
    let mut out = BTreeMap::new();
    for leaf in tree.leaf_ids() {
        let Some(profile) = profiles.get(leaf) else { continue };
        let iter_scale: f64 = tree
            .decorator_ancestors(leaf)
            .iter()
            .map(|d| loops.get(d).map(|l| l.expected_iterations).unwrap_or(1.0))
            .product();
        let p = effective.get(leaf).copied().unwrap_or(profile.exec_prob);
        out.insert(leaf.clone(), p * iter_scale * profile.io_bytes());
    }
    out
}

/// Synthetic leaf -> nearest real leaf by document order (ties go to the
/// later leaf), the companion whose subpath it will ride with.
fn companion_map(tree: &WorkflowDef) -> BTreeMap<LeafId, LeafId> {
    let order = tree.leaf_ids();
    let real: Vec<(usize, &LeafId)> = order
        .iter()
        .enumerate()
        .filter(|(_, l)| !tree.is_synthetic(l))
        .collect();
    let mut out = BTreeMap::new();
    for (i, leaf) in order.iter().enumerate() {
        if !tree.is_synthetic(leaf) {
            continue;
        }
        let companion = real
            .iter()
            .min_by_key(|(j, _)| {
                let dist = j.abs_diff(i);
                (dist, if *j > i { 0 } else { 1 })
            })
            .map(|(_, l)| (*l).clone());
        if let Some(c) = companion {
            out.insert(leaf.clone(), c);
        }
    }
    out
}

/// Residual tree after removing leaves: childless composites prune away
/// recursively, a decorator follows its child.
fn remove_leaves(node: &BtNode, doomed: &BTreeSet<LeafId>) -> Option<BtNode> {
    match node {
        BtNode::Leaf { leaf_id, .. } => {
            if doomed.contains(leaf_id) {
                None
            } else {
                Some(node.clone())
            }
        }
        BtNode::Sequence { id, children } => {
            let kept: Vec<BtNode> =
                children.iter().filter_map(|c| remove_leaves(c, doomed)).collect();
            (!kept.is_empty())
                .then(|| BtNode::Sequence { id: id.clone(), children: kept })
        }
        BtNode::Fallback { id, children } => {
            let kept: Vec<BtNode> =
                children.iter().filter_map(|c| remove_leaves(c, doomed)).collect();
            (!kept.is_empty())
                .then(|| BtNode::Fallback { id: id.clone(), children: kept })
        }
        BtNode::Parallel { id, children, agg } => {
            let kept: Vec<BtNode> =
                children.iter().filter_map(|c| remove_leaves(c, doomed)).collect();
            (!kept.is_empty()).then(|| BtNode::Parallel {
                id: id.clone(),
                children: kept,
                agg: agg.clone(),
            })
        }
        BtNode::Decorator { id, child, tail } => remove_leaves(child, doomed).map(|c| {
            BtNode::Decorator { id: id.clone(), child: Box::new(c), tail: tail.clone() }
        }),
    }
}

/// Self-contained partition file: subpaths plus everything placement and
/// simulation need downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionBundle {
    pub workflow_id: String,
    pub subpaths: Vec<Subpath>,
    pub residual_phases: usize,
    pub profiles: BTreeMap<LeafId, FunctionProfile>,
    pub loops: BTreeMap<NodeId, LoopProfile>,
    pub timeline: ExpectedTimeline,
    pub functions: BTreeMap<FunctionId, FunctionSpec>,
    pub leaf_functions: BTreeMap<LeafId, FunctionId>,
}

impl PartitionBundle {
    pub fn new(
        tree: &WorkflowDef,
        estimates: &EstimateOutput,
        result: &PartitionResult,
    ) -> Result<Self, PartitionError> {
        let timeline = crate::trace::align(tree, &estimates.profiles, &estimates.loops)?;
        let leaf_functions = tree
            .leaf_ids()
            .iter()
            .filter_map(|l| match tree.leaf(l) {
                Some(BtNode::Leaf { function_id, .. }) => Some((l.clone(), function_id.clone())),
                _ => None,
            })
            .collect();
        Ok(PartitionBundle {
            workflow_id: result.workflow_id.clone(),
            subpaths: result.subpaths.clone(),
            residual_phases: result.residual_phases,
            profiles: estimates.profiles.clone(),
            loops: estimates.loops.clone(),
            timeline,
            functions: tree.functions().clone(),
            leaf_functions,
        })
    }

    pub fn function_of(&self, leaf: &LeafId) -> Option<&FunctionSpec> {
        self.leaf_functions.get(leaf).and_then(|f| self.functions.get(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::node::{fallback, leaf, parallel, sequence};
    use crate::bt::AggSpec;
    use crate::trace::{estimate, ProfileDefaults, TraceStore};

    fn t1() -> WorkflowDef {
        let tree = sequence(vec![
            leaf("f1"),
            parallel(
                AggSpec::AllSucceed,
                vec![
                    sequence(vec![leaf("f2"), leaf("f8")]),
                    sequence(vec![leaf("f5"), leaf("f6"), leaf("f7")]),
                ],
            ),
            fallback(vec![leaf("f3"), leaf("f4")]),
        ]);
        let funcs = ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"]
            .iter()
            .map(|i| FunctionSpec::new(*i, "mock"))
            .collect();
        WorkflowDef::new("t1", tree, funcs)
    }

    fn uniform_partition(def: &WorkflowDef, policy: &PartitionPolicy) -> PartitionResult {
        let est = estimate(&TraceStore::new(), def, &ProfileDefaults::default());
        partition(def, &est.profiles, &est.loops, policy).unwrap()
    }

    fn leaves(sp: &Subpath) -> Vec<&str> {
        sp.leaves.iter().map(|l| l.as_str()).collect()
    }

    #[test]
    fn t1_with_uniform_profiles_reproduces_reference_subpaths() {
        let def = t1();
        let result = uniform_partition(&def, &PartitionPolicy::IoContentionAware);
        assert_eq!(result.residual_phases, 3);
        assert_eq!(result.subpaths.len(), 3);
        assert_eq!(leaves(&result.subpaths[0]), ["f1", "f2", "f8", "f3"]);
        assert_eq!(leaves(&result.subpaths[1]), ["f5", "f6", "f7"]);
        assert_eq!(leaves(&result.subpaths[2]), ["f4"]);
    }

    #[test]
    fn single_leaf_tree_yields_one_subpath() {
        let def = WorkflowDef::new("w", leaf("only"), vec![FunctionSpec::new("only", "mock")]);
        let result = uniform_partition(&def, &PartitionPolicy::IoContentionAware);
        assert_eq!(result.subpaths.len(), 1);
        assert_eq!(leaves(&result.subpaths[0]), ["only"]);
    }

    #[test]
    fn pure_sequence_collapses_into_one_subpath() {
        let tree = sequence((1..=5).map(|i| leaf(&format!("f{i}"))).collect());
        let funcs = (1..=5).map(|i| FunctionSpec::new(format!("f{i}"), "mock")).collect();
        let def = WorkflowDef::new("w", tree, funcs);
        for policy in [PartitionPolicy::IoContentionAware, PartitionPolicy::LongestPath] {
            let result = uniform_partition(&def, &policy);
            assert_eq!(result.subpaths.len(), 1, "{policy:?}");
            assert_eq!(result.subpaths[0].leaves.len(), 5);
        }
    }

    #[test]
    fn unregistered_policy_is_an_error() {
        let def = t1();
        let est = estimate(&TraceStore::new(), &def, &ProfileDefaults::default());
        let err = partition(
            &def,
            &est.profiles,
            &est.loops,
            &PartitionPolicy::Named { name: "custom".into() },
        )
        .unwrap_err();
        assert!(matches!(err, PartitionError::PolicyNotRegistered(_)));
    }

    #[test]
    fn partition_is_deterministic() {
        let def = t1();
        let a = uniform_partition(&def, &PartitionPolicy::IoContentionAware);
        let b = uniform_partition(&def, &PartitionPolicy::IoContentionAware);
        assert_eq!(a, b);
    }

    #[test]
    fn peak_interval_occupier_outranks_equal_bytes_elsewhere() {
        use crate::trace::{LeafTimeline, Period};
        // Synthetic timeline: a and b overlap (the peak), c is alone.
        let mut tl = ExpectedTimeline::default();
        let mk = |id: &str, s: f64, e: f64| LeafTimeline {
            leaf_id: LeafId::new(id),
            init: Period { start: s, end: s },
            input: Period { start: s, end: e },
            exec: Period { start: e, end: e },
            output: Period { start: e, end: e },
        };
        tl.leaves.insert(LeafId::new("a"), mk("a", 0.0, 2.0));
        tl.leaves.insert(LeafId::new("b"), mk("b", 1.0, 3.0));
        tl.leaves.insert(LeafId::new("c"), mk("c", 5.0, 7.0));
        let residual: Vec<LeafId> = ["a", "b", "c"].iter().map(|s| LeafId::new(*s)).collect();
        let bytes: BTreeMap<LeafId, f64> =
            residual.iter().map(|l| (l.clone(), 100.0)).collect();
        let ctx = ScoreContext { timeline: &tl, io_bytes: &bytes, residual_leaves: &residual };
        let reg = PolicyRegistry::new();
        let policy = PartitionPolicy::IoContentionAware;
        let sa = score_candidate(&Path { leaves: vec![LeafId::new("a")] }, &ctx, &policy, &reg)
            .unwrap();
        let sc = score_candidate(&Path { leaves: vec![LeafId::new("c")] }, &ctx, &policy, &reg)
            .unwrap();
        assert!(sa.better_than(&sc));
    }

    #[test]
    fn more_expected_bytes_wins_at_equal_peak() {
        use crate::trace::{LeafTimeline, Period};
        let mut tl = ExpectedTimeline::default();
        let mk = |id: &str, s: f64, e: f64| LeafTimeline {
            leaf_id: LeafId::new(id),
            init: Period { start: s, end: s },
            input: Period { start: s, end: e },
            exec: Period { start: e, end: e },
            output: Period { start: e, end: e },
        };
        tl.leaves.insert(LeafId::new("a"), mk("a", 0.0, 1.0));
        tl.leaves.insert(LeafId::new("b"), mk("b", 2.0, 3.0));
        let residual: Vec<LeafId> = ["a", "b"].iter().map(|s| LeafId::new(*s)).collect();
        let mut bytes = BTreeMap::new();
        bytes.insert(LeafId::new("a"), 10.0 * 1024.0 * 1024.0);
        bytes.insert(LeafId::new("b"), 4.0 * 1024.0 * 1024.0);
        let ctx = ScoreContext { timeline: &tl, io_bytes: &bytes, residual_leaves: &residual };
        let reg = PolicyRegistry::new();
        let policy = PartitionPolicy::IoContentionAware;
        let sa = score_candidate(&Path { leaves: vec![LeafId::new("a")] }, &ctx, &policy, &reg)
            .unwrap();
        let sb = score_candidate(&Path { leaves: vec![LeafId::new("b")] }, &ctx, &policy, &reg)
            .unwrap();
        assert!(sa.better_than(&sb));
    }

    #[test]
    fn three_candidate_ranking_matches_the_hand_scored_order() {
        use crate::trace::{LeafTimeline, Period};
        // a+b overlap on [1,2) (the peak); c is alone and heavy.
        let mut tl = ExpectedTimeline::default();
        let mk = |id: &str, s: f64, e: f64| LeafTimeline {
            leaf_id: LeafId::new(id),
            init: Period { start: s, end: s },
            input: Period { start: s, end: e },
            exec: Period { start: e, end: e },
            output: Period { start: e, end: e },
        };
        tl.leaves.insert(LeafId::new("a"), mk("a", 0.0, 2.0));
        tl.leaves.insert(LeafId::new("b"), mk("b", 1.0, 3.0));
        tl.leaves.insert(LeafId::new("c"), mk("c", 5.0, 9.0));
        let residual: Vec<LeafId> = ["a", "b", "c"].iter().map(|s| LeafId::new(*s)).collect();
        let mut bytes = BTreeMap::new();
        bytes.insert(LeafId::new("a"), 2.0);
        bytes.insert(LeafId::new("b"), 1.0);
        bytes.insert(LeafId::new("c"), 100.0);
        let ctx = ScoreContext { timeline: &tl, io_bytes: &bytes, residual_leaves: &residual };
        let reg = PolicyRegistry::new();
        let policy = PartitionPolicy::IoContentionAware;
        let score = |leaves: &[&str]| {
            let p = Path { leaves: leaves.iter().map(|l| LeafId::new(*l)).collect() };
            score_candidate(&p, &ctx, &policy, &reg).unwrap()
        };
        // Hand scoring: peak interval is [1,2) (degree 2). Overlaps: a and
        // b each cover 1.0 of it, c covers 0. Bytes break the a/b tie.
        let (sa, sb, sc) = (score(&["a"]), score(&["b"]), score(&["c"]));
        assert_eq!(sa.components[0], 1.0);
        assert_eq!(sb.components[0], 1.0);
        assert_eq!(sc.components[0], 0.0);
        assert!(sa.better_than(&sb), "bytes tie-break");
        assert!(sb.better_than(&sc), "peak dominates bytes");
    }

    #[test]
    fn custom_policy_via_registry() {
        let def = t1();
        let est = estimate(&TraceStore::new(), &def, &ProfileDefaults::default());
        let mut partitioner = Partitioner::default();
        // Prefer the shortest candidates: one leaf per subpath.
        partitioner
            .registry
            .register("singletons", |p, _| vec![-(p.leaves.len() as f64)]);
        let result = partitioner
            .partition(
                &def,
                &est.profiles,
                &est.loops,
                &PartitionPolicy::Named { name: "singletons".into() },
            )
            .unwrap();
        assert_eq!(result.subpaths.len(), 8);
        assert!(result.subpaths.iter().all(|s| s.leaves.len() == 1));
    }

    #[test]
    fn zero_byte_anchor_with_weighted_predecessor_still_partitions() {
        // x moves bytes instantly; a has a long input period moving no
        // bytes. The peak interval is a's alone, so a anchors the phase,
        // but every candidate through a trims down to [x].
        let tree = sequence(vec![leaf("x"), leaf("a")]);
        let def = WorkflowDef::new(
            "w",
            tree,
            vec![FunctionSpec::new("x", "mock"), FunctionSpec::new("a", "mock")],
        );
        let est = estimate(&TraceStore::new(), &def, &ProfileDefaults::default());
        let mut profiles = est.profiles.clone();
        {
            let x = profiles.get_mut(&LeafId::new("x")).unwrap();
            x.input_delay_s = 0.0;
            x.output_delay_s = 0.0;
            x.input_bytes = 5.0 * 1024.0 * 1024.0;
            x.output_bytes = 0.0;
        }
        {
            let a = profiles.get_mut(&LeafId::new("a")).unwrap();
            a.input_delay_s = 1.0;
            a.output_delay_s = 0.0;
            a.input_bytes = 0.0;
            a.output_bytes = 0.0;
        }
        let result =
            partition(&def, &profiles, &est.loops, &PartitionPolicy::IoContentionAware).unwrap();
        let covered: BTreeSet<LeafId> =
            result.subpaths.iter().flat_map(|s| s.leaves.iter().cloned()).collect();
        assert_eq!(covered.len(), 2);
    }

    #[test]
    fn coverage_and_disjointness_on_t1() {
        let def = t1();
        let result = uniform_partition(&def, &PartitionPolicy::IoContentionAware);
        let mut seen = BTreeSet::new();
        for sp in &result.subpaths {
            for l in &sp.leaves {
                assert!(seen.insert(l.clone()), "leaf {l} assigned twice");
            }
        }
        let all: BTreeSet<LeafId> = def.real_leaf_ids().into_iter().collect();
        assert_eq!(seen, all);
        assert!(result.residual_phases <= def.real_leaf_ids().len());
    }
}
