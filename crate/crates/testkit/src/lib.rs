//! Random model generators and independent oracles for the test suites.
//!
//! The oracles deliberately use different algorithms from the library
//! implementations they check: path enumeration recurses on the tree
//! structure directly, the penalty oracle uses the pairwise-overlap
//! identity, and critical paths come from longest-path dynamic
//! programming.

use std::collections::{BTreeMap, BTreeSet};

use beeflow_core::bt::{
    fallback, leaf, parallel, sequence, AggSpec, BtNode, FunctionSpec, TailSpec, WorkflowDef,
};
use beeflow_core::convert::{DagDef, FsmDef};
use beeflow_core::ids::{FunctionId, LeafId};
use beeflow_core::trace::{ExpectedTimeline, LeafTimeline, Period};
use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random behavior tree with up to `max_nodes` nodes and bounded depth.
/// Leaves are named `f0..` in creation order; every function uses the
/// `mock` executor.
pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize, max_depth: usize) -> WorkflowDef {
    let mut counter = 0usize;
    let budget = rng.random_range(1..=max_nodes.max(1));
    let mut remaining = budget as i64;
    let root = gen_node(rng, &mut counter, &mut remaining, max_depth);
    let functions =
        (0..counter).map(|i| FunctionSpec::new(format!("f{i}"), "mock")).collect();
    WorkflowDef::new("random", root, functions)
}

fn gen_leaf(counter: &mut usize) -> BtNode {
    let node = leaf(&format!("f{counter}"));
    *counter += 1;
    node
}

fn gen_node(
    rng: &mut ChaCha8Rng,
    counter: &mut usize,
    remaining: &mut i64,
    depth: usize,
) -> BtNode {
    *remaining -= 1;
    if depth == 0 || *remaining <= 1 {
        return gen_leaf(counter);
    }
    match rng.random_range(0..10) {
        0..=2 => gen_leaf(counter),
        3..=5 => {
            let children = gen_children(rng, counter, remaining, depth);
            sequence(children)
        }
        6..=7 => {
            let children = gen_children(rng, counter, remaining, depth);
            parallel(pick_agg(rng, children.len()), children)
        }
        8 => {
            let children = gen_children(rng, counter, remaining, depth);
            fallback(children)
        }
        _ => {
            let child = gen_node(rng, counter, remaining, depth - 1);
            beeflow_core::bt::decorator(pick_tail(rng), child)
        }
    }
}

fn gen_children(
    rng: &mut ChaCha8Rng,
    counter: &mut usize,
    remaining: &mut i64,
    depth: usize,
) -> Vec<BtNode> {
    let cap = 3.min((*remaining).max(1) as usize).max(1);
    let n = rng.random_range(1..=cap);
    (0..n).map(|_| gen_node(rng, counter, remaining, depth - 1)).collect()
}

fn pick_agg(rng: &mut ChaCha8Rng, children: usize) -> AggSpec {
    if children > 1 && rng.random_bool(0.3) {
        AggSpec::MOutOfN { m: rng.random_range(1..=children as u32) }
    } else {
        AggSpec::AllSucceed
    }
}

fn pick_tail(rng: &mut ChaCha8Rng) -> TailSpec {
    match rng.random_range(0..4) {
        0 => TailSpec::Once,
        1 => TailSpec::Negate,
        _ => TailSpec::Retry { max_n: rng.random_range(1..=3) },
    }
}

/// Random DAG over `n00..` with independent edge probability `p` (edges
/// only point from lower to higher index, so the result is acyclic).
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, p: f64) -> DagDef {
    let n = rng.random_range(1..=max_nodes.max(1));
    let nodes: Vec<FunctionId> = (0..n).map(|i| FunctionId::new(format!("n{i:02}"))).collect();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.insert((nodes[i].clone(), nodes[j].clone()));
            }
        }
    }
    DagDef { nodes: nodes.into_iter().collect(), edges }
}

/// Longest path of a DAG in node count: the critical-path length under
/// unit durations.
pub fn critical_path_len(dag: &DagDef) -> usize {
    fn longest<'a>(
        node: &'a FunctionId,
        dag: &'a DagDef,
        memo: &mut BTreeMap<&'a FunctionId, usize>,
    ) -> usize {
        if let Some(v) = memo.get(node) {
            return *v;
        }
        let best = dag
            .edges
            .iter()
            .filter(|(a, _)| a == node)
            .map(|(_, b)| longest(b, dag, memo))
            .max()
            .unwrap_or(0);
        memo.insert(node, best + 1);
        best + 1
    }
    let mut memo: BTreeMap<&FunctionId, usize> = BTreeMap::new();
    dag.nodes.iter().map(|n| longest(n, dag, &mut memo)).max().unwrap_or(0)
}

/// Random FSM with up to `max_states` states and up to `max_outcomes`
/// labels per state. About a third of the labels transition to END, so
/// most runs terminate; non-terminating machines are legitimate outputs
/// too and get truncated by the step budget.
pub fn random_fsm(rng: &mut ChaCha8Rng, max_states: usize, max_outcomes: usize) -> FsmDef {
    let n = rng.random_range(1..=max_states.max(1));
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut transitions = BTreeMap::new();
    for s in &states {
        let labels = rng.random_range(1..=max_outcomes.max(1));
        for l in 0..labels {
            let target = if rng.random_bool(0.35) {
                "END".to_string()
            } else {
                states.choose(rng).unwrap().clone()
            };
            transitions.insert((s.clone(), format!("o{l}")), target);
        }
    }
    FsmDef {
        states: states.iter().cloned().collect(),
        initial: states[rng.random_range(0..n)].clone(),
        body: states
            .iter()
            .map(|s| (s.clone(), FunctionId::new(format!("fn_{s}"))))
            .collect(),
        transitions,
    }
}

/// Deterministic outcome label for the k-th body execution of `state`
/// under `seed`. Shared by the converted-tree executor and the reference
/// interpreter so both sides sample identically.
pub fn outcome_label(fsm: &FsmDef, seed: u64, step: usize, state: &str) -> String {
    let outcomes = fsm.outcomes_of(state);
    let mut h = seed ^ 0x517c_c1b7_2722_0a95;
    for b in state.bytes() {
        h = h.wrapping_mul(0x0100_0000_01b3).wrapping_add(b as u64);
    }
    h = h.wrapping_mul(0x0100_0000_01b3).wrapping_add(step as u64);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    outcomes[(h % outcomes.len() as u64) as usize].to_string()
}

/// Reference FSM interpreter: the state sequence actually executed,
/// truncated at `budget` steps.
pub fn fsm_reference_run(fsm: &FsmDef, seed: u64, budget: usize) -> Vec<String> {
    let mut state = fsm.initial.clone();
    let mut out = Vec::new();
    for step in 0..budget {
        out.push(state.clone());
        let label = outcome_label(fsm, seed, step, &state);
        match fsm.transitions.get(&(state.clone(), label)) {
            Some(next) if next == "END" => return out,
            Some(next) => state = next.clone(),
            None => return out,
        }
    }
    out
}

/// All leaf chains of a tree by direct structural recursion. A chain
/// leads *to* some leaf: under ordered composites (sequence and fallback
/// alike, per the prev-sibling rule) the chain to a leaf in child `i`
/// concatenates one chain from each earlier sibling and then a chain
/// within child `i`; parallels contribute one branch; decorators pass
/// through. Every path to every leaf appears, including prefixes of
/// longer chains.
pub fn enumerate_paths_oracle(tree: &WorkflowDef) -> Vec<Vec<LeafId>> {
    fn product(acc: Vec<Vec<LeafId>>, choices: &[Vec<LeafId>]) -> Vec<Vec<LeafId>> {
        let mut next = Vec::with_capacity(acc.len() * choices.len());
        for base in &acc {
            for choice in choices {
                let mut p = base.clone();
                p.extend(choice.iter().cloned());
                next.push(p);
            }
        }
        next
    }
    fn chains(node: &BtNode) -> Vec<Vec<LeafId>> {
        match node {
            BtNode::Leaf { leaf_id, .. } => vec![vec![leaf_id.clone()]],
            BtNode::Sequence { children, .. } | BtNode::Fallback { children, .. } => {
                let mut out = Vec::new();
                for i in 0..children.len() {
                    let mut acc: Vec<Vec<LeafId>> = vec![Vec::new()];
                    for c in &children[..i] {
                        acc = product(acc, &chains(c));
                    }
                    out.extend(product(acc, &chains(&children[i])));
                }
                out
            }
            BtNode::Parallel { children, .. } => children.iter().flat_map(chains).collect(),
            BtNode::Decorator { child, .. } => chains(child),
        }
    }
    let mut out = chains(&tree.root);
    out.sort();
    out.dedup();
    out
}

/// Subsequence test shared by oracle-driven assertions.
pub fn is_subsequence(needle: &[LeafId], haystack: &[LeafId]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Penalty oracle via the pairwise identity: integrating degree² over
/// time equals the sum of pairwise period overlaps (including each period
/// with itself).
pub fn penalty_pairwise_oracle(timeline: &ExpectedTimeline, subset: &[LeafId]) -> f64 {
    let mut periods: Vec<Period> = Vec::new();
    for leaf in subset {
        if let Some(entry) = timeline.get(leaf) {
            for p in entry.io_periods() {
                if !p.is_empty() {
                    periods.push(p);
                }
            }
        }
    }
    let mut total = 0.0;
    for a in &periods {
        for b in &periods {
            total += a.overlap(b);
        }
    }
    total
}

/// Random synthetic timeline: `n` leaves with arbitrary overlapping I/O
/// periods, for penalty and placement stress tests.
pub fn random_timeline(rng: &mut ChaCha8Rng, n: usize) -> (ExpectedTimeline, Vec<LeafId>) {
    let mut tl = ExpectedTimeline::default();
    let mut ids = Vec::new();
    for i in 0..n {
        let id = LeafId::new(format!("L{i:02}"));
        let in_start = rng.random_range(0.0..20.0);
        let in_len = rng.random_range(0.0..4.0);
        let exec_len = rng.random_range(0.0..3.0);
        let out_len = rng.random_range(0.0..4.0);
        let in_end = in_start + in_len;
        let out_start = in_end + exec_len;
        tl.leaves.insert(
            id.clone(),
            LeafTimeline {
                leaf_id: id.clone(),
                init: Period { start: in_start, end: in_start },
                input: Period { start: in_start, end: in_end },
                exec: Period { start: in_end, end: out_start },
                output: Period { start: out_start, end: out_start + out_len },
            },
        );
        ids.push(id);
    }
    (tl, ids)
}
