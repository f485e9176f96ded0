//! Contention-aware placement of subpaths onto cluster nodes.
//!
//! Subpaths contributing more to intra-workflow contention are scheduled
//! first; each is assigned to the feasible node minimizing its current
//! cost plus the delta the subpath's colocation would add, keeping the
//! overall costs balanced. The penalty of a node aligns all functions of
//! one workflow delegated to it and sums interval lengths scaled by the
//! square of their I/O contention degrees.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LeafId, NodeId};
use crate::partition::PartitionBundle;
use crate::path::Subpath;
use crate::trace::{io_intervals, ExpectedTimeline};

#[derive(Debug, Error)]
pub enum PlaceError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(LeafId),
    #[error("no feasible node for subpath `{0}` (capacity exhausted)")]
    NoFeasibleNode(String),
    #[error("duplicate workflow `{0}` in placement input")]
    DuplicateWorkflow(String),
    #[error("alignment: {0}")]
    Align(#[from] crate::trace::AlignError),
}

/// One server node's capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub cpu_cores: f64,
    pub mem_bytes: u64,
    #[serde(rename = "io_bw_Bps")]
    pub io_bw_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub nodes: Vec<NodeSpec>,
}

impl ClusterSpec {
    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| &n.node_id == id)
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.node_id) {
                return Err(format!("duplicate node id `{}`", n.node_id));
            }
            if n.cpu_cores <= 0.0 || n.mem_bytes == 0 || n.io_bw_bps <= 0.0 {
                return Err(format!("node `{}` has a non-positive capacity", n.node_id));
            }
        }
        Ok(())
    }
}

/// Subpath-to-node assignment with its cost accounting. Assignment keys
/// are workflow-qualified (`workflow/subpath`) since subpath ids repeat
/// across workflows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub assignments: BTreeMap<String, NodeId>,
    pub per_node_cost: BTreeMap<NodeId, f64>,
    pub total_cost: f64,
}

pub fn plan_key(workflow_id: &str, subpath_id: &str) -> String {
    format!("{workflow_id}/{subpath_id}")
}

impl PlacementPlan {
    pub fn node_of(&self, workflow_id: &str, subpath_id: &str) -> Option<&NodeId> {
        self.assignments.get(&plan_key(workflow_id, subpath_id))
    }
}

/// Node cost: per workflow, the degree²-scaled sum of aligned I/O
/// intervals over the workflow's leaves on that node, summed over
/// workflows.
pub fn penalty(
    per_workflow: &[(&ExpectedTimeline, &[LeafId])],
) -> Result<f64, PlaceError> {
    let mut total = 0.0;
    for (timeline, subset) in per_workflow {
        for interval in io_intervals(timeline, subset)? {
            total += interval.len() * (interval.degree as f64).powi(2);
        }
    }
    Ok(total)
}

/// Per-workflow leaves placed on one node.
#[derive(Debug, Clone, Default)]
struct NodeLoad {
    leaves: BTreeMap<String, Vec<LeafId>>,
    cost: f64,
}

/// Inputs for placing one workflow.
pub struct WorkflowPlacement<'a> {
    pub bundle: &'a PartitionBundle,
}

/// Admission test: static memory sums plus timeline-peak CPU concurrency
/// must fit the node's limits.
pub fn try_place(
    node: &NodeSpec,
    subpath: &Subpath,
    placed: &[(&PartitionBundle, Vec<LeafId>)],
    bundle: &PartitionBundle,
) -> bool {
    let mem_of = |b: &PartitionBundle, l: &LeafId| {
        b.function_of(l).map(|f| f.mem_request_bytes as f64).unwrap_or(0.0)
    };
    let mut mem: f64 = placed
        .iter()
        .map(|(b, leaves)| leaves.iter().map(|l| mem_of(b, l)).sum::<f64>())
        .sum();
    mem += subpath.all_leaves().map(|l| mem_of(bundle, l)).sum::<f64>();
    if mem > node.mem_bytes as f64 {
        return false;
    }

    // Peak concurrent CPU request across exec periods of everything on the
    // node, including the candidate. Timelines share t=0 (co-run worst
    // case).
    let mut events: Vec<(f64, f64)> = Vec::new();
    let mut push_leaf = |b: &PartitionBundle, l: &LeafId| {
        let Some(entry) = b.timeline.get(l) else { return };
        let Some(f) = b.function_of(l) else { return };
        if entry.exec.len() > 0.0 && f.cpu_request_cores > 0.0 {
            events.push((entry.exec.start, f.cpu_request_cores));
            events.push((entry.exec.end, -f.cpu_request_cores));
        }
    };
    for (b, leaves) in placed {
        for l in leaves {
            push_leaf(b, l);
        }
    }
    for l in subpath.all_leaves() {
        push_leaf(bundle, l);
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut load = 0.0f64;
    let mut peak = 0.0f64;
    for (_, delta) in events {
        load += delta;
        peak = peak.max(load);
    }
    peak <= node.cpu_cores + 1e-9
}

/// Scheduling priority of a subpath: summed overlap of its I/O periods
/// with contended intervals, weighted by (degree - 1), degrees taken over
/// the whole workflow colocated. Ties break by total I/O bytes, then id.
pub fn sort_key(subpath: &Subpath, bundle: &PartitionBundle) -> Result<(f64, f64), PlaceError> {
    let all: Vec<LeafId> = bundle.timeline.leaves.keys().cloned().collect();
    let intervals = io_intervals(&bundle.timeline, &all)?;
    let mut contention = 0.0;
    for leaf in &subpath.leaves {
        let entry = bundle
            .timeline
            .get(leaf)
            .ok_or_else(|| PlaceError::UnknownLeaf(leaf.clone()))?;
        for p in entry.io_periods() {
            for interval in &intervals {
                if interval.degree > 1 {
                    let lo = p.start.max(interval.start);
                    let hi = p.end.min(interval.end);
                    contention += (hi - lo).max(0.0) * (interval.degree - 1) as f64;
                }
            }
        }
    }
    let bytes: f64 = subpath
        .leaves
        .iter()
        .filter_map(|l| bundle.profiles.get(l))
        .map(|p| p.io_bytes())
        .sum();
    Ok((contention, bytes))
}

/// Greedy contention-aware placement across all workflows' subpaths.
pub fn place(
    partitions: &[WorkflowPlacement<'_>],
    cluster: &ClusterSpec,
) -> Result<PlacementPlan, PlaceError> {
    let order = placement_order(partitions)?;
    let mut loads: BTreeMap<NodeId, NodeLoad> =
        cluster.nodes.iter().map(|n| (n.node_id.clone(), NodeLoad::default())).collect();
    let mut plan = PlacementPlan::default();

    for (bundle, subpath) in &order {
        let mut best: Option<(f64, f64, NodeId, f64)> = None;
        for node in &cluster.nodes {
            let load = &loads[&node.node_id];
            let placed: Vec<(&PartitionBundle, Vec<LeafId>)> = load
                .leaves
                .iter()
                .filter_map(|(wf, leaves)| {
                    bundle_for(partitions, wf).map(|b| (b, leaves.clone()))
                })
                .collect();
            if !try_place(node, subpath, &placed, bundle) {
                continue;
            }
            let delta = colocation_delta(&placed, bundle, subpath)?;
            let key_cost = load.cost + delta;
            let better = match &best {
                None => true,
                Some((cost, cur, id, _)) => {
                    key_cost < *cost
                        || (key_cost == *cost && load.cost < *cur)
                        || (key_cost == *cost && load.cost == *cur && node.node_id < *id)
                }
            };
            if better {
                best = Some((key_cost, load.cost, node.node_id.clone(), delta));
            }
        }
        let (_, _, node_id, delta) = best.ok_or_else(|| {
            PlaceError::NoFeasibleNode(plan_key(&bundle.workflow_id, &subpath.subpath_id))
        })?;
        let load = loads.get_mut(&node_id).unwrap();
        load.cost += delta;
        load.leaves
            .entry(bundle.workflow_id.clone())
            .or_default()
            .extend(subpath.all_leaves().cloned());
        plan.assignments
            .insert(plan_key(&bundle.workflow_id, &subpath.subpath_id), node_id);
    }

    for (id, load) in &loads {
        plan.per_node_cost.insert(id.clone(), load.cost);
    }
    plan.total_cost = plan.per_node_cost.values().sum();
    Ok(plan)
}

/// Subpaths of all workflows in descending scheduling priority.
pub fn placement_order<'a>(
    partitions: &'a [WorkflowPlacement<'a>],
) -> Result<Vec<(&'a PartitionBundle, &'a Subpath)>, PlaceError> {
    let mut seen = BTreeSet::new();
    for wp in partitions {
        if !seen.insert(wp.bundle.workflow_id.clone()) {
            return Err(PlaceError::DuplicateWorkflow(wp.bundle.workflow_id.clone()));
        }
    }
    let mut keyed = Vec::new();
    for wp in partitions {
        for sp in &wp.bundle.subpaths {
            let (contention, bytes) = sort_key(sp, wp.bundle)?;
            keyed.push((contention, bytes, wp.bundle, sp));
        }
    }
    keyed.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then_with(|| {
                plan_key(&a.2.workflow_id, &a.3.subpath_id)
                    .cmp(&plan_key(&b.2.workflow_id, &b.3.subpath_id))
            })
    });
    Ok(keyed.into_iter().map(|(_, _, b, s)| (b, s)).collect())
}

fn bundle_for<'a>(
    partitions: &'a [WorkflowPlacement<'a>],
    workflow_id: &str,
) -> Option<&'a PartitionBundle> {
    partitions.iter().map(|wp| wp.bundle).find(|b| b.workflow_id == workflow_id)
}

/// Penalty increase from adding a subpath to a node's current load.
fn colocation_delta(
    placed: &[(&PartitionBundle, Vec<LeafId>)],
    bundle: &PartitionBundle,
    subpath: &Subpath,
) -> Result<f64, PlaceError> {
    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut candidate: Vec<LeafId> = subpath.leaves.clone();
    for (b, leaves) in placed {
        before.push((&b.timeline, leaves.as_slice()));
        if b.workflow_id == bundle.workflow_id {
            // Same workflow: the candidate and existing leaves align on one
            // shared timeline.
            candidate.splice(0..0, leaves.iter().cloned());
        } else {
            after.push((&b.timeline, leaves.as_slice()));
        }
    }
    let cost_before = penalty(&before)?;
    let with_candidate: Vec<(&ExpectedTimeline, &[LeafId])> = after
        .into_iter()
        .chain(std::iter::once((&bundle.timeline, candidate.as_slice())))
        .collect();
    let cost_after = penalty(&with_candidate)?;
    Ok(cost_after - cost_before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{LeafTimeline, Period};

    fn tl(periods: &[(&str, f64, f64, f64, f64)]) -> ExpectedTimeline {
        // (leaf, input_start, input_end, output_start, output_end)
        let mut out = ExpectedTimeline::default();
        for (name, is, ie, os, oe) in periods {
            let id = LeafId::new(*name);
            out.leaves.insert(
                id.clone(),
                LeafTimeline {
                    leaf_id: id,
                    init: Period { start: *is, end: *is },
                    input: Period { start: *is, end: *ie },
                    exec: Period { start: *ie, end: *os },
                    output: Period { start: *os, end: *oe },
                },
            );
        }
        out
    }

    #[test]
    fn penalty_scales_by_degree_squared() {
        // Intervals [0,1)x1, [1,2)x2, [2,3)x1 -> 1 + 4 + 1 = 6.
        let timeline = tl(&[("a", 0.0, 2.0, 2.0, 2.0), ("b", 1.0, 3.0, 3.0, 3.0)]);
        let leaves = vec![LeafId::new("a"), LeafId::new("b")];
        let cost = penalty(&[(&timeline, leaves.as_slice())]).unwrap();
        assert!((cost - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lone_function_costs_its_io_time() {
        let timeline = tl(&[("a", 0.0, 2.0, 5.0, 6.0)]);
        let leaves = vec![LeafId::new("a")];
        let cost = penalty(&[(&timeline, leaves.as_slice())]).unwrap();
        assert!((cost - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_subset_costs_nothing() {
        let timeline = tl(&[("a", 0.0, 2.0, 2.0, 2.0)]);
        let cost = penalty(&[(&timeline, &[][..])]).unwrap();
        assert_eq!(cost, 0.0);
    }

    fn bundle_with(
        workflow_id: &str,
        timeline: ExpectedTimeline,
        groups: &[&[&str]],
        mem: u64,
        cpu: f64,
    ) -> PartitionBundle {
        let mut functions = BTreeMap::new();
        let mut leaf_functions = BTreeMap::new();
        let mut profiles = BTreeMap::new();
        for id in timeline.leaves.keys() {
            let f = crate::ids::FunctionId::new(format!("fn_{id}"));
            let mut spec = crate::bt::FunctionSpec::new(f.clone(), "mock");
            spec.mem_request_bytes = mem;
            spec.cpu_request_cores = cpu;
            functions.insert(f.clone(), spec);
            leaf_functions.insert(id.clone(), f);
            let entry = &timeline.leaves[id];
            profiles.insert(
                id.clone(),
                crate::trace::FunctionProfile {
                    leaf_id: id.clone(),
                    init_delay_s: 0.0,
                    input_delay_s: entry.input.len(),
                    exec_delay_s: entry.exec.len(),
                    output_delay_s: entry.output.len(),
                    input_bytes: 1024.0,
                    output_bytes: 1024.0,
                    exec_prob: 1.0,
                    failure_prob: 0.0,
                    samples: 1,
                    defaulted: false,
                },
            );
        }
        let subpaths = groups
            .iter()
            .enumerate()
            .map(|(i, leaves)| Subpath {
                subpath_id: format!("sp{}", i + 1),
                workflow_id: workflow_id.to_string(),
                leaves: leaves.iter().map(|l| LeafId::new(*l)).collect(),
                synthetic: Vec::new(),
            })
            .collect();
        PartitionBundle {
            workflow_id: workflow_id.to_string(),
            subpaths,
            residual_phases: groups.len(),
            profiles,
            loops: BTreeMap::new(),
            timeline,
            functions,
            leaf_functions,
        }
    }

    fn node(id: &str, cores: f64, mem: u64) -> NodeSpec {
        NodeSpec { node_id: NodeId::new(id), cpu_cores: cores, mem_bytes: mem, io_bw_bps: 1e8 }
    }

    #[test]
    fn try_place_accepts_a_fitting_subpath_on_an_empty_node() {
        let timeline = tl(&[("a", 0.0, 1.0, 1.0, 2.0)]);
        let bundle = bundle_with("w", timeline, &[&["a"]], 1024, 0.5);
        assert!(try_place(&node("n", 4.0, 1 << 20), &bundle.subpaths[0], &[], &bundle));
    }

    #[test]
    fn try_place_rejects_memory_overflow() {
        let timeline = tl(&[("a", 0.0, 1.0, 1.0, 2.0), ("b", 3.0, 4.0, 4.0, 5.0)]);
        let bundle = bundle_with("w", timeline, &[&["a", "b"]], 1024, 0.5);
        assert!(!try_place(&node("n", 4.0, 1500), &bundle.subpaths[0], &[], &bundle));
    }

    #[test]
    fn try_place_rejects_concurrent_cpu_overflow() {
        // Three 1-core leaves whose exec periods all overlap cannot share
        // a 2-core node even though memory fits.
        let timeline = tl(&[
            ("a", 0.0, 1.0, 5.0, 6.0),
            ("b", 0.0, 1.0, 5.0, 6.0),
            ("c", 0.0, 1.0, 5.0, 6.0),
        ]);
        let bundle = bundle_with("w", timeline, &[&["a"], &["b"], &["c"]], 1024, 1.0);
        let two_cores = node("n", 2.0, 1 << 30);
        let placed = vec![
            (&bundle, vec![LeafId::new("a")]),
            (&bundle, vec![LeafId::new("b")]),
        ];
        assert!(!try_place(&two_cores, &bundle.subpaths[2], &placed, &bundle));
        let three_cores = node("n", 3.0, 1 << 30);
        assert!(try_place(&three_cores, &bundle.subpaths[2], &placed, &bundle));
    }

    #[test]
    fn sort_key_examples() {
        // Disjoint I/O: zero contention contribution.
        let timeline = tl(&[("a", 0.0, 1.0, 1.0, 1.0), ("b", 5.0, 6.0, 6.0, 6.0)]);
        let bundle = bundle_with("w", timeline, &[&["a"], &["b"]], 1024, 0.5);
        let (contention, _) = sort_key(&bundle.subpaths[0], &bundle).unwrap();
        assert_eq!(contention, 0.0);

        // Overlapping one other function for 2 seconds: key 2.
        let timeline = tl(&[("a", 0.0, 2.0, 2.0, 2.0), ("b", 0.0, 2.0, 2.0, 2.0)]);
        let bundle = bundle_with("w", timeline, &[&["a"], &["b"]], 1024, 0.5);
        let (contention, _) = sort_key(&bundle.subpaths[0], &bundle).unwrap();
        assert!((contention - 2.0).abs() < 1e-12, "{contention}");
    }

    #[test]
    fn two_identical_subpaths_balance_across_two_empty_nodes() {
        let timeline = tl(&[("a", 0.0, 2.0, 2.0, 3.0), ("b", 0.0, 2.0, 2.0, 3.0)]);
        let bundle = bundle_with("w", timeline, &[&["a"], &["b"]], 1024, 0.5);
        let cluster = ClusterSpec { nodes: vec![node("n1", 4.0, 1 << 30), node("n2", 4.0, 1 << 30)] };
        let plan = place(&[WorkflowPlacement { bundle: &bundle }], &cluster).unwrap();
        let nodes: BTreeSet<&NodeId> = plan.assignments.values().collect();
        assert_eq!(nodes.len(), 2, "{:?}", plan.assignments);
    }

    #[test]
    fn colocation_penalty_is_superadditive() {
        let timeline = tl(&[("a", 0.0, 2.0, 2.0, 2.0), ("b", 1.0, 3.0, 3.0, 3.0)]);
        let a = vec![LeafId::new("a")];
        let b = vec![LeafId::new("b")];
        let both = vec![LeafId::new("a"), LeafId::new("b")];
        let pa = penalty(&[(&timeline, a.as_slice())]).unwrap();
        let pb = penalty(&[(&timeline, b.as_slice())]).unwrap();
        let pab = penalty(&[(&timeline, both.as_slice())]).unwrap();
        assert!(pab > pa + pb);

        // Disjoint periods: colocation adds nothing.
        let disjoint = tl(&[("a", 0.0, 1.0, 1.0, 1.0), ("b", 2.0, 3.0, 3.0, 3.0)]);
        let pa = penalty(&[(&disjoint, a.as_slice())]).unwrap();
        let pb = penalty(&[(&disjoint, b.as_slice())]).unwrap();
        let pab = penalty(&[(&disjoint, both.as_slice())]).unwrap();
        assert!((pab - (pa + pb)).abs() < 1e-12);
    }
}
