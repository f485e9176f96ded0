//! Per-leaf lifecycle profiles and decorator loop profiles estimated from
//! traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bt::{BtNode, WorkflowDef};
use crate::ids::{LeafId, NodeId};
use crate::trace::{TraceStatus, TraceStore};

/// Mean lifecycle estimates for one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionProfile {
    pub leaf_id: LeafId,
    pub init_delay_s: f64,
    pub input_delay_s: f64,
    pub exec_delay_s: f64,
    pub output_delay_s: f64,
    pub input_bytes: f64,
    pub output_bytes: f64,
    /// Fraction of observed requests in which the leaf actually executed.
    pub exec_prob: f64,
    /// Fraction of executions that failed; drives fallback reach
    /// estimates and simulator outcome sampling.
    #[serde(default)]
    pub failure_prob: f64,
    pub samples: usize,
    /// True when no trace covered this leaf and defaults were used.
    #[serde(default)]
    pub defaulted: bool,
}

impl FunctionProfile {
    pub fn total_delay_s(&self) -> f64 {
        self.init_delay_s + self.input_delay_s + self.exec_delay_s + self.output_delay_s
    }

    pub fn io_bytes(&self) -> f64 {
        self.input_bytes + self.output_bytes
    }

    fn zero(leaf_id: LeafId) -> Self {
        FunctionProfile {
            leaf_id,
            init_delay_s: 0.0,
            input_delay_s: 0.0,
            exec_delay_s: 0.0,
            output_delay_s: 0.0,
            input_bytes: 0.0,
            output_bytes: 0.0,
            exec_prob: 1.0,
            failure_prob: 0.0,
            samples: 0,
            defaulted: false,
        }
    }
}

/// Expected iterations of one decorator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopProfile {
    pub node_id: NodeId,
    pub expected_iterations: f64,
}

/// Defaults applied to leaves absent from the traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDefaults {
    pub init_s: f64,
    pub input_s: f64,
    pub exec_s: f64,
    pub output_s: f64,
    pub input_bytes: f64,
    pub output_bytes: f64,
    pub exec_prob: f64,
    pub failure_prob: f64,
    pub expected_iterations: f64,
}

impl Default for ProfileDefaults {
    fn default() -> Self {
        ProfileDefaults {
            init_s: 0.5,
            input_s: 0.1,
            exec_s: 1.0,
            output_s: 0.1,
            input_bytes: 1024.0 * 1024.0,
            output_bytes: 1024.0 * 1024.0,
            exec_prob: 1.0,
            failure_prob: 0.0,
            expected_iterations: 1.0,
        }
    }
}

impl ProfileDefaults {
    fn profile(&self, leaf_id: LeafId) -> FunctionProfile {
        FunctionProfile {
            leaf_id,
            init_delay_s: self.init_s,
            input_delay_s: self.input_s,
            exec_delay_s: self.exec_s,
            output_delay_s: self.output_s,
            input_bytes: self.input_bytes,
            output_bytes: self.output_bytes,
            exec_prob: self.exec_prob,
            failure_prob: self.failure_prob,
            samples: 0,
            defaulted: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub profiles: BTreeMap<LeafId, FunctionProfile>,
    pub loops: BTreeMap<NodeId, LoopProfile>,
}

/// Estimates profiles and loop expectations for every leaf of `tree` from
/// the store, falling back to `defaults` where traces are missing.
/// Synthetic leaves always get a zero-cost profile.
pub fn estimate(store: &TraceStore, tree: &WorkflowDef, defaults: &ProfileDefaults) -> EstimateOutput {
    let mut profiles = BTreeMap::new();
    let requests = store.request_count(&tree.workflow_id);

    for leaf_id in tree.leaf_ids() {
        if tree.is_synthetic(leaf_id) {
            profiles.insert(leaf_id.clone(), FunctionProfile::zero(leaf_id.clone()));
            continue;
        }
        let records = store.records(&tree.workflow_id, leaf_id);
        let executed: Vec<_> =
            records.iter().filter(|r| r.status != TraceStatus::Skipped).collect();
        if executed.is_empty() {
            profiles.insert(leaf_id.clone(), defaults.profile(leaf_id.clone()));
            continue;
        }
        let n = executed.len() as f64;
        let mean = |f: &dyn Fn(&&crate::trace::TraceRecord) -> f64| {
            executed.iter().map(f).sum::<f64>() / n
        };
        let executed_requests: std::collections::BTreeSet<&str> =
            executed.iter().map(|r| r.request_id.as_str()).collect();
        let exec_prob = if requests > 0 {
            executed_requests.len() as f64 / requests as f64
        } else {
            1.0
        };
        let failures =
            executed.iter().filter(|r| r.status == TraceStatus::Failure).count() as f64;
        profiles.insert(
            leaf_id.clone(),
            FunctionProfile {
                leaf_id: leaf_id.clone(),
                init_delay_s: mean(&|r| r.t_input_start - r.t_init_start),
                input_delay_s: mean(&|r| r.t_exec_start - r.t_input_start),
                exec_delay_s: mean(&|r| r.t_output_start - r.t_exec_start),
                output_delay_s: mean(&|r| r.t_end - r.t_output_start),
                input_bytes: mean(&|r| r.input_bytes),
                output_bytes: mean(&|r| r.output_bytes),
                exec_prob: exec_prob.clamp(0.0, 1.0),
                failure_prob: failures / n,
                samples: executed.len(),
                defaulted: false,
            },
        );
    }

    let mut loops = BTreeMap::new();
    collect_loops(tree, &tree.root, store, defaults, &mut loops);
    EstimateOutput { profiles, loops }
}

fn collect_loops(
    tree: &WorkflowDef,
    node: &BtNode,
    store: &TraceStore,
    defaults: &ProfileDefaults,
    out: &mut BTreeMap<NodeId, LoopProfile>,
) {
    if let BtNode::Decorator { id, child, .. } = node {
        // Expected iterations: per request, the largest iteration index
        // observed for any leaf under this decorator.
        let mut per_request: BTreeMap<&str, u32> = BTreeMap::new();
        for leaf in child.leaves() {
            if let BtNode::Leaf { leaf_id, .. } = leaf {
                for r in store.records(&tree.workflow_id, leaf_id) {
                    if r.status != TraceStatus::Skipped && r.decorator_iteration > 0 {
                        let e = per_request.entry(r.request_id.as_str()).or_insert(0);
                        *e = (*e).max(r.decorator_iteration);
                    }
                }
            }
        }
        let expected = if per_request.is_empty() {
            defaults.expected_iterations
        } else {
            per_request.values().map(|v| *v as f64).sum::<f64>() / per_request.len() as f64
        };
        out.insert(
            id.clone(),
            LoopProfile { node_id: id.clone(), expected_iterations: expected.max(1.0) },
        );
    }
    for c in node.children() {
        collect_loops(tree, c, store, defaults, out);
    }
}

/// Per-leaf effective execution probability on the original tree:
/// measured `exec_prob` scaled by the reach probability of enclosing
/// fallback branches (child i is reached when every earlier sibling
/// failed, under independence).
pub fn compute_effective_probs(
    tree: &WorkflowDef,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
) -> BTreeMap<LeafId, f64> {
    let mut out = BTreeMap::new();
    walk_probs(&tree.root, profiles, 1.0, &mut out);
    out
}

fn walk_probs(
    node: &BtNode,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
    reach: f64,
    out: &mut BTreeMap<LeafId, f64>,
) {
    match node {
        BtNode::Leaf { leaf_id, .. } => {
            let p = profiles.get(leaf_id).map(|p| p.exec_prob).unwrap_or(1.0);
            out.insert(leaf_id.clone(), reach * p);
        }
        BtNode::Fallback { children, .. } => {
            let mut branch_reach = reach;
            for child in children {
                walk_probs(child, profiles, branch_reach, out);
                branch_reach *= subtree_failure_prob(child, profiles);
            }
        }
        _ => {
            for child in node.children() {
                walk_probs(child, profiles, reach, out);
            }
        }
    }
}

/// Rough failure probability of a subtree under child independence; used
/// only for expected-case alignment.
pub(crate) fn subtree_failure_prob(
    node: &BtNode,
    profiles: &BTreeMap<LeafId, FunctionProfile>,
) -> f64 {
    match node {
        BtNode::Leaf { leaf_id, .. } => {
            profiles.get(leaf_id).map(|p| p.failure_prob).unwrap_or(0.0)
        }
        BtNode::Sequence { children, .. } => {
            let all_ok: f64 =
                children.iter().map(|c| 1.0 - subtree_failure_prob(c, profiles)).product();
            1.0 - all_ok
        }
        BtNode::Fallback { children, .. } => {
            children.iter().map(|c| subtree_failure_prob(c, profiles)).product()
        }
        BtNode::Parallel { children, agg, .. } => {
            let fail: Vec<f64> =
                children.iter().map(|c| subtree_failure_prob(c, profiles)).collect();
            match agg {
                crate::bt::AggSpec::MOutOfN { m } => {
                    // P(successes < m) over independent children.
                    let mut dist = vec![1.0f64];
                    for f in &fail {
                        let mut next = vec![0.0; dist.len() + 1];
                        for (k, p) in dist.iter().enumerate() {
                            next[k] += p * f;
                            next[k + 1] += p * (1.0 - f);
                        }
                        dist = next;
                    }
                    dist.iter().take((*m as usize).min(dist.len())).sum()
                }
                _ => {
                    let all_ok: f64 = fail.iter().map(|f| 1.0 - f).product();
                    1.0 - all_ok
                }
            }
        }
        BtNode::Decorator { child, tail, .. } => {
            let f = subtree_failure_prob(child, profiles);
            match tail {
                crate::bt::TailSpec::Negate => 1.0 - f,
                crate::bt::TailSpec::Retry { max_n } => f.powi(*max_n as i32),
                _ => f,
            }
        }
    }
}
