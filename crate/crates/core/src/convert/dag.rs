//! DAG to behavior tree conversion.
//!
//! Recursive scheme: group sources into a parallel head, sinks into a
//! parallel tail, recurse per weakly-connected residual component, compose
//! the component subtrees in parallel, and chain head/middle/tail in a
//! sequence. Empty steps are omitted and single-member composites collapse
//! to the member. All aggregates require every subtree to succeed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bt::node::{leaf_fn, parallel, sequence, AggSpec, BtNode, FunctionSpec};
use crate::bt::WorkflowDef;
use crate::convert::ConvertError;
use crate::ids::FunctionId;

/// Directed acyclic task graph.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DagDef {
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<(FunctionId, FunctionId)>,
}

impl DagDef {
    pub fn new(nodes: &[&str], edges: &[(&str, &str)]) -> Self {
        DagDef {
            nodes: nodes.iter().map(|n| FunctionId::new(*n)).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| (FunctionId::new(*a), FunctionId::new(*b)))
                .collect(),
        }
    }

    fn check(&self) -> Result<(), ConvertError> {
        if self.nodes.is_empty() {
            return Err(ConvertError::EmptyDag);
        }
        for (a, b) in &self.edges {
            if a == b || !self.nodes.contains(a) || !self.nodes.contains(b) {
                return Err(ConvertError::CyclicInput);
            }
        }
        // Kahn's algorithm; leftovers indicate a cycle.
        let mut indeg: BTreeMap<&FunctionId, usize> =
            self.nodes.iter().map(|n| (n, 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b).unwrap() += 1;
        }
        let mut ready: Vec<&FunctionId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut seen = 0usize;
        while let Some(n) = ready.pop() {
            seen += 1;
            for (a, b) in &self.edges {
                if a == n {
                    let d = indeg.get_mut(b).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        if seen != self.nodes.len() {
            return Err(ConvertError::CyclicInput);
        }
        Ok(())
    }
}

/// Converts a DAG into a behavior tree with non-trivial concurrency.
pub fn dag_to_bt(dag: &DagDef) -> Result<WorkflowDef, ConvertError> {
    dag.check()?;
    let tree = convert(&dag.nodes, &dag.edges);
    let functions = dag
        .nodes
        .iter()
        .map(|n| FunctionSpec::new(n.clone(), "mock"))
        .collect();
    Ok(WorkflowDef::new(format!("dag-{}", dag.nodes.len()), tree, functions))
}

fn convert(nodes: &BTreeSet<FunctionId>, edges: &BTreeSet<(FunctionId, FunctionId)>) -> BtNode {
    let live = |a: &FunctionId, b: &FunctionId, set: &BTreeSet<FunctionId>| {
        set.contains(a) && set.contains(b)
    };

    let mut remaining = nodes.clone();
    let sources: Vec<FunctionId> = remaining
        .iter()
        .filter(|n| !edges.iter().any(|(a, b)| b == *n && live(a, b, &remaining)))
        .cloned()
        .collect();
    for s in &sources {
        remaining.remove(s);
    }

    let sinks: Vec<FunctionId> = remaining
        .iter()
        .filter(|n| !edges.iter().any(|(a, b)| a == *n && live(a, b, &remaining)))
        .cloned()
        .collect();
    for s in &sinks {
        remaining.remove(s);
    }

    let mut stages = Vec::new();
    if !sources.is_empty() {
        stages.push(group(sources));
    }
    if !remaining.is_empty() {
        let middles: Vec<BtNode> = components(&remaining, edges)
            .into_iter()
            .map(|comp| {
                let comp_edges = edges
                    .iter()
                    .filter(|(a, b)| comp.contains(a) && comp.contains(b))
                    .cloned()
                    .collect();
                convert(&comp, &comp_edges)
            })
            .collect();
        stages.push(collapse(middles, |c| parallel(AggSpec::AllSucceed, c)));
    }
    if !sinks.is_empty() {
        stages.push(group(sinks));
    }
    collapse(stages, sequence)
}

fn group(mut nodes: Vec<FunctionId>) -> BtNode {
    nodes.sort();
    let leaves = nodes.iter().map(|n| leaf_fn(n.as_str(), n.as_str())).collect();
    collapse(leaves, |c| parallel(AggSpec::AllSucceed, c))
}

fn collapse(mut children: Vec<BtNode>, make: impl FnOnce(Vec<BtNode>) -> BtNode) -> BtNode {
    if children.len() == 1 {
        children.pop().unwrap()
    } else {
        make(children)
    }
}

/// Weakly-connected components, sorted by smallest member id.
fn components(
    nodes: &BTreeSet<FunctionId>,
    edges: &BTreeSet<(FunctionId, FunctionId)>,
) -> Vec<BTreeSet<FunctionId>> {
    let mut unvisited: BTreeSet<FunctionId> = nodes.clone();
    let mut out = Vec::new();
    while let Some(start) = unvisited.iter().next().cloned() {
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if !unvisited.remove(&n) {
                continue;
            }
            for (a, b) in edges {
                if a == &n && unvisited.contains(b) {
                    stack.push(b.clone());
                }
                if b == &n && unvisited.contains(a) {
                    stack.push(a.clone());
                }
            }
            comp.insert(n);
        }
        out.push(comp);
    }
    // BTreeSet iteration already yields components by discovery of the
    // smallest unvisited node, which sorts them by smallest member.
    out
}
