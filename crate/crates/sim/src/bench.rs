//! Placement policy comparison harness.
//!
//! Runs each scenario under contention-aware, round-robin, random and
//! colocate-all placement with fixed seeds, and checks the qualitative
//! expectations: contention-aware balances per-node cost at least as well
//! as round-robin on almost every instance, and eager colocation pays the
//! largest penalty whenever any I/O overlap exists.

use std::collections::BTreeMap;

use beeflow_core::ids::{LeafId, NodeId};
use beeflow_core::partition::PartitionBundle;
use beeflow_core::place::{
    penalty, place, placement_order, plan_key, try_place, ClusterSpec, NodeSpec, PlaceError,
    PlacementPlan, WorkflowPlacement,
};
use beeflow_core::path::Subpath;
use beeflow_core::trace::{ExpectedTimeline, LeafTimeline, Period};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementStrategy {
    ContentionAware,
    RoundRobin,
    Random,
    ColocateAll,
}

impl PlacementStrategy {
    pub const ALL: [PlacementStrategy; 4] = [
        PlacementStrategy::ContentionAware,
        PlacementStrategy::RoundRobin,
        PlacementStrategy::Random,
        PlacementStrategy::ColocateAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlacementStrategy::ContentionAware => "contention-aware",
            PlacementStrategy::RoundRobin => "round-robin",
            PlacementStrategy::Random => "random",
            PlacementStrategy::ColocateAll => "colocate-all",
        }
    }
}

/// Places all workflows' subpaths under the chosen strategy. Baselines
/// iterate subpaths in the same contention order as the real placer and
/// respect the same admission test.
pub fn place_with_strategy(
    strategy: PlacementStrategy,
    partitions: &[WorkflowPlacement<'_>],
    cluster: &ClusterSpec,
    seed: u64,
) -> Result<PlacementPlan, PlaceError> {
    match strategy {
        PlacementStrategy::ContentionAware => place(partitions, cluster),
        PlacementStrategy::RoundRobin => baseline(partitions, cluster, |state, feasible| {
            let pick = feasible
                .iter()
                .find(|&&n| n >= state.cursor % state.total)
                .or_else(|| feasible.first())
                .copied();
            if let Some(p) = pick {
                state.cursor = p + 1;
            }
            pick
        }),
        PlacementStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            baseline(partitions, cluster, move |_, feasible| feasible.choose(&mut rng).copied())
        }
        PlacementStrategy::ColocateAll => colocate_all(partitions, cluster),
    }
}

struct BaselineState {
    cursor: usize,
    total: usize,
}

fn baseline(
    partitions: &[WorkflowPlacement<'_>],
    cluster: &ClusterSpec,
    mut pick: impl FnMut(&mut BaselineState, &[usize]) -> Option<usize>,
) -> Result<PlacementPlan, PlaceError> {
    let order = placement_order(partitions)?;
    let mut node_load: Vec<Vec<(usize, Vec<LeafId>)>> = vec![Vec::new(); cluster.nodes.len()];
    let mut plan = PlacementPlan::default();
    let mut state = BaselineState { cursor: 0, total: cluster.nodes.len() };
    let bundles: Vec<&PartitionBundle> = partitions.iter().map(|w| w.bundle).collect();

    for (bundle, subpath) in &order {
        let bundle_idx = bundles.iter().position(|b| b.workflow_id == bundle.workflow_id).unwrap();
        let feasible: Vec<usize> = (0..cluster.nodes.len())
            .filter(|&n| {
                let placed: Vec<(&PartitionBundle, Vec<LeafId>)> = node_load[n]
                    .iter()
                    .map(|(b, leaves)| (bundles[*b], leaves.clone()))
                    .collect();
                try_place(&cluster.nodes[n], subpath, &placed, bundle)
            })
            .collect();
        let node = pick(&mut state, &feasible).ok_or_else(|| {
            PlaceError::NoFeasibleNode(plan_key(&bundle.workflow_id, &subpath.subpath_id))
        })?;
        node_load[node].push((bundle_idx, subpath.all_leaves().cloned().collect()));
        plan.assignments.insert(
            plan_key(&bundle.workflow_id, &subpath.subpath_id),
            cluster.nodes[node].node_id.clone(),
        );
    }
    finalize_costs(&mut plan, &node_load, &bundles, cluster);
    Ok(plan)
}

fn colocate_all(
    partitions: &[WorkflowPlacement<'_>],
    cluster: &ClusterSpec,
) -> Result<PlacementPlan, PlaceError> {
    let order = placement_order(partitions)?;
    let bundles: Vec<&PartitionBundle> = partitions.iter().map(|w| w.bundle).collect();
    'nodes: for (n, node) in cluster.nodes.iter().enumerate() {
        let mut load: Vec<(usize, Vec<LeafId>)> = Vec::new();
        let mut plan = PlacementPlan::default();
        for (bundle, subpath) in &order {
            let bundle_idx =
                bundles.iter().position(|b| b.workflow_id == bundle.workflow_id).unwrap();
            let placed: Vec<(&PartitionBundle, Vec<LeafId>)> =
                load.iter().map(|(b, leaves)| (bundles[*b], leaves.clone())).collect();
            if !try_place(node, subpath, &placed, bundle) {
                continue 'nodes;
            }
            load.push((bundle_idx, subpath.all_leaves().cloned().collect()));
            plan.assignments.insert(
                plan_key(&bundle.workflow_id, &subpath.subpath_id),
                node.node_id.clone(),
            );
        }
        let mut node_load: Vec<Vec<(usize, Vec<LeafId>)>> = vec![Vec::new(); cluster.nodes.len()];
        node_load[n] = load;
        finalize_costs(&mut plan, &node_load, &bundles, cluster);
        return Ok(plan);
    }
    Err(PlaceError::NoFeasibleNode("colocate-all".into()))
}

fn finalize_costs(
    plan: &mut PlacementPlan,
    node_load: &[Vec<(usize, Vec<LeafId>)>],
    bundles: &[&PartitionBundle],
    cluster: &ClusterSpec,
) {
    for (n, load) in node_load.iter().enumerate() {
        // Group by workflow: the penalty aligns one workflow per timeline.
        let mut grouped: BTreeMap<usize, Vec<LeafId>> = BTreeMap::new();
        for (b, leaves) in load {
            grouped.entry(*b).or_default().extend(leaves.iter().cloned());
        }
        let per_workflow: Vec<(&ExpectedTimeline, &[LeafId])> =
            grouped.iter().map(|(b, leaves)| (&bundles[*b].timeline, leaves.as_slice())).collect();
        let cost = penalty(&per_workflow).unwrap_or(0.0);
        plan.per_node_cost.insert(cluster.nodes[n].node_id.clone(), cost);
    }
    plan.total_cost = plan.per_node_cost.values().sum();
}

/// One line of the comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub policy: String,
    pub median_latency_s: f64,
    pub max_node_cost: f64,
    /// Max over min per-node transmitted bytes; infinite when some node
    /// moved nothing.
    pub tx_ratio: f64,
}

/// Aggregate verdict against the acceptance thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub balance_wins: usize,
    pub balance_total: usize,
    pub balance_worst_ratio: f64,
    pub balance_ok: bool,
    pub colocate_strictly_max_penalty: bool,
    pub tx_ratio_aware: f64,
    pub tx_ratio_colocate: f64,
    pub tx_improvement_ok: bool,
    pub pass: bool,
}

/// Synthetic placement instance for the statistical balance suite.
pub struct BalanceInstance {
    pub bundles: Vec<PartitionBundle>,
    pub cluster: ClusterSpec,
}

/// Random instance with 3-9 nodes and 6-24 subpaths spread over a few
/// synthetic workflows.
pub fn random_balance_instance(seed: u64) -> BalanceInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(3..=9);
    let cluster = ClusterSpec {
        nodes: (0..nodes)
            .map(|i| NodeSpec {
                node_id: NodeId::new(format!("n{i}")),
                cpu_cores: 64.0,
                mem_bytes: 64 * 1024 * 1024 * 1024,
                io_bw_bps: 100e6,
            })
            .collect(),
    };
    let subpath_target = rng.random_range(6..=24);
    let workflows = rng.random_range(1..=3.min(subpath_target / 2));
    let mut bundles = Vec::new();
    let mut built = 0usize;
    for w in 0..workflows {
        let share = if w + 1 == workflows {
            subpath_target - built
        } else {
            rng.random_range(2..=(subpath_target - built - (workflows - w - 1) * 2).max(2))
        };
        built += share;
        bundles.push(random_bundle(&mut rng, &format!("wf{w}"), share));
    }
    BalanceInstance { bundles, cluster }
}

fn random_bundle(rng: &mut ChaCha8Rng, workflow_id: &str, subpaths: usize) -> PartitionBundle {
    let mut timeline = ExpectedTimeline::default();
    let mut functions = BTreeMap::new();
    let mut leaf_functions = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    let mut subpath_list = Vec::new();
    let mut leaf_no = 0usize;
    for s in 0..subpaths {
        let leaves = rng.random_range(1..=4);
        let mut t = rng.random_range(0.0..8.0);
        let mut members = Vec::new();
        for _ in 0..leaves {
            let leaf = LeafId::new(format!("{workflow_id}_l{leaf_no:02}"));
            leaf_no += 1;
            let in_len = rng.random_range(0.1..3.0);
            let exec_len = rng.random_range(0.1..2.0);
            let out_len = rng.random_range(0.1..3.0);
            let in_end = t + in_len;
            let out_start = in_end + exec_len;
            timeline.leaves.insert(
                leaf.clone(),
                LeafTimeline {
                    leaf_id: leaf.clone(),
                    init: Period { start: t, end: t },
                    input: Period { start: t, end: in_end },
                    exec: Period { start: in_end, end: out_start },
                    output: Period { start: out_start, end: out_start + out_len },
                },
            );
            t = out_start + out_len;
            let func = beeflow_core::ids::FunctionId::new(format!("fn_{leaf}"));
            let mut spec = beeflow_core::bt::FunctionSpec::new(func.clone(), "mock");
            spec.mem_request_bytes = 32 * 1024 * 1024;
            spec.cpu_request_cores = 0.5;
            functions.insert(func.clone(), spec);
            leaf_functions.insert(leaf.clone(), func);
            profiles.insert(
                leaf.clone(),
                beeflow_core::trace::FunctionProfile {
                    leaf_id: leaf.clone(),
                    init_delay_s: 0.0,
                    input_delay_s: in_len,
                    exec_delay_s: exec_len,
                    output_delay_s: out_len,
                    input_bytes: rng.random_range(1.0..32.0) * 1024.0 * 1024.0,
                    output_bytes: rng.random_range(1.0..32.0) * 1024.0 * 1024.0,
                    exec_prob: 1.0,
                    failure_prob: 0.0,
                    samples: 1,
                    defaulted: false,
                },
            );
            members.push(leaf);
        }
        subpath_list.push(Subpath {
            subpath_id: format!("sp{}", s + 1),
            workflow_id: workflow_id.to_string(),
            leaves: members,
            synthetic: Vec::new(),
        });
    }
    PartitionBundle {
        workflow_id: workflow_id.to_string(),
        subpaths: subpath_list,
        residual_phases: subpaths,
        profiles,
        loops: BTreeMap::new(),
        timeline,
        functions,
        leaf_functions,
    }
}

/// Max per-node cost of a plan.
pub fn max_node_cost(plan: &PlacementPlan) -> f64 {
    plan.per_node_cost.values().copied().fold(0.0, f64::max)
}

/// Runs the statistical balance suite: contention-aware vs round-robin
/// max per-node cost over `n` random instances.
pub fn balance_suite(n: usize, seed: u64) -> (usize, f64) {
    let mut wins = 0usize;
    let mut worst_ratio = 0.0f64;
    for i in 0..n {
        let instance = random_balance_instance(seed.wrapping_add(i as u64));
        let placements: Vec<WorkflowPlacement<'_>> =
            instance.bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
        let aware = place_with_strategy(
            PlacementStrategy::ContentionAware,
            &placements,
            &instance.cluster,
            seed,
        )
        .expect("generous capacities");
        let rr = place_with_strategy(
            PlacementStrategy::RoundRobin,
            &placements,
            &instance.cluster,
            seed,
        )
        .expect("generous capacities");
        let a = max_node_cost(&aware);
        let r = max_node_cost(&rr);
        if a <= r + 1e-9 {
            wins += 1;
        }
        if r > 0.0 {
            worst_ratio = worst_ratio.max(a / r);
        }
    }
    (wins, worst_ratio)
}
