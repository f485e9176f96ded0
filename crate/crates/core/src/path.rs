//! Raw path, path and prefix calculus over behavior trees, subpath
//! validity, and the exclusivity check.
//!
//! The raw path to a node is unique; paths (raw paths with composites
//! expanded into leaf chains) are not. Any order-preserving subset of a
//! path is a subpath: its leaves are strictly ordered, so at most one can
//! be active at any time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BtNode, ExecError, LeafExecutor, Payload, WorkflowDef};
use crate::ids::{LeafId, NodeId};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("node `{0}` is not a leaf")]
    NotALeaf(NodeId),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Default cap on exhaustive path enumeration before the greedy
/// single-expansion fallback kicks in.
pub const DEFAULT_EXPANSION_CAP: usize = 4096;

/// Unique ordered node sequence from the root to a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPath {
    pub nodes: Vec<NodeId>,
}

/// One expansion of a raw path into an ordered leaf chain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Path {
    pub leaves: Vec<LeafId>,
}

/// A leaf's raw path minus the leaf itself; identical prefixes imply
/// simultaneous first invocations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prefix {
    pub nodes: Vec<NodeId>,
}

/// Ordered exclusive set of leaves: the deployment and resource-control
/// unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subpath {
    pub subpath_id: String,
    pub workflow_id: String,
    pub leaves: Vec<LeafId>,
    /// Zero-cost control leaves riding along with their companion leaf.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synthetic: Vec<LeafId>,
}

impl Subpath {
    /// All leaves deployed with this subpath, schedulable and synthetic.
    pub fn all_leaves(&self) -> impl Iterator<Item = &LeafId> {
        self.leaves.iter().chain(self.synthetic.iter())
    }
}

/// Raw path via the three-case recursion: the root is its own raw path; a
/// node with a previous sibling under a sequence or fallback extends the
/// sibling's raw path; any other node extends its parent's.
pub fn raw_path(tree: &WorkflowDef, node_id: &NodeId) -> Result<RawPath, PathError> {
    if !tree.contains_node(node_id) {
        return Err(PathError::UnknownNode(node_id.clone()));
    }
    let mut nodes = Vec::new();
    build_raw(tree, node_id, &mut nodes);
    Ok(RawPath { nodes })
}

fn build_raw(tree: &WorkflowDef, node_id: &NodeId, out: &mut Vec<NodeId>) {
    if tree.is_root(node_id) {
        out.push(node_id.clone());
        return;
    }
    let parent = tree.parent(node_id).expect("non-root node has a parent");
    let ordered_parent =
        matches!(parent, BtNode::Sequence { .. } | BtNode::Fallback { .. });
    match tree.prev_sibling(node_id) {
        Some(prev) if ordered_parent => build_raw(tree, prev.id(), out),
        _ => build_raw(tree, parent.id(), out),
    }
    out.push(node_id.clone());
}

/// Prefix of a node: composites keep their raw path, leaves drop
/// themselves from it.
pub fn prefix(tree: &WorkflowDef, node_id: &NodeId) -> Result<Prefix, PathError> {
    let raw = raw_path(tree, node_id)?;
    let node = tree.node(node_id).ok_or_else(|| PathError::UnknownNode(node_id.clone()))?;
    let mut nodes = raw.nodes;
    if node.is_leaf() {
        nodes.pop();
    }
    Ok(Prefix { nodes })
}

/// Structural prefix equality: a sufficient condition for two leaves'
/// first invocations to be ready simultaneously. Deliberately
/// conservative; it never reports prefixes equal that could diverge.
///
/// Element-wise identical node sequences are not enough: a composite that
/// is an ancestor of one leaf but not the other reduces differently (the
/// ancestor only has to start, the non-ancestor must complete). Both the
/// sequence and each member's role must match.
pub fn same_prefix(tree: &WorkflowDef, a: &LeafId, b: &LeafId) -> Result<bool, PathError> {
    for id in [a, b] {
        let node_id = NodeId::from(id);
        match tree.node(&node_id) {
            None => return Err(PathError::UnknownNode(node_id)),
            Some(n) if !n.is_leaf() => return Err(PathError::NotALeaf(node_id)),
            _ => {}
        }
    }
    let (na, nb) = (NodeId::from(a), NodeId::from(b));
    let pa = prefix(tree, &na)?;
    let pb = prefix(tree, &nb)?;
    if pa.nodes != pb.nodes {
        return Ok(false);
    }
    Ok(pa
        .nodes
        .iter()
        .all(|m| tree.is_ancestor(m, &na) == tree.is_ancestor(m, &nb)))
}

/// All distinct expansions of `path(node)`, up to `cap`; beyond the cap a
/// single greedy expansion is returned instead.
pub fn expand_paths(
    tree: &WorkflowDef,
    node_id: &NodeId,
    cap: usize,
) -> Result<Vec<Path>, PathError> {
    expand_paths_weighted(tree, node_id, cap, None)
}

/// Like [`expand_paths`], with per-leaf I/O weights steering the greedy
/// fallback (branch with maximal total weight, ties by smallest leaf id).
pub fn expand_paths_weighted(
    tree: &WorkflowDef,
    node_id: &NodeId,
    cap: usize,
    weights: Option<&dyn Fn(&LeafId) -> f64>,
) -> Result<Vec<Path>, PathError> {
    let raw = raw_path(tree, node_id)?;
    let mut segments: Vec<Vec<Vec<LeafId>>> = Vec::new();
    for member in &raw.nodes {
        let node = tree.node(member).expect("raw path member exists");
        match node {
            BtNode::Leaf { leaf_id, .. } => segments.push(vec![vec![leaf_id.clone()]]),
            _ if tree.is_ancestor(member, node_id) => {}
            _ => {
                // The queried composite itself, or a non-ancestor composite
                // from a prev-sibling chain: expand into every leaf chain
                // within its subtree.
                let mut choices = Vec::new();
                for leaf in node.leaves() {
                    expansions_to_leaf(tree, node, leaf.id(), &mut choices);
                }
                choices.sort();
                choices.dedup();
                segments.push(choices);
            }
        }
    }

    let mut total: usize = 1;
    for seg in &segments {
        total = total.saturating_mul(seg.len().max(1));
        if total > cap {
            return Ok(vec![greedy_expansion(tree, &raw, node_id, weights)]);
        }
    }

    let mut out = vec![Vec::new()];
    for seg in &segments {
        let mut next = Vec::with_capacity(out.len() * seg.len());
        for base in &out {
            for choice in seg {
                let mut path: Vec<LeafId> = base.clone();
                path.extend(choice.iter().cloned());
                next.push(path);
            }
        }
        out = next;
    }
    let mut paths: Vec<Path> = out.into_iter().map(|leaves| Path { leaves: dedup(leaves) }).collect();
    paths.sort();
    paths.dedup();
    Ok(paths)
}

/// Chains of functions within subtree `scope` that lead to `target`,
/// following the raw recursion with `scope` as the root.
fn expansions_to_leaf(
    tree: &WorkflowDef,
    scope: &BtNode,
    target: &NodeId,
    out: &mut Vec<Vec<LeafId>>,
) {
    let mut chain = Vec::new();
    raw_within(tree, scope, target, &mut chain);
    // Per-member choices within the chain.
    let mut segments: Vec<Vec<Vec<LeafId>>> = Vec::new();
    for member in &chain {
        let node = tree.node(member).expect("chain member exists");
        match node {
            BtNode::Leaf { leaf_id, .. } => segments.push(vec![vec![leaf_id.clone()]]),
            _ if member == scope.id() || tree.is_ancestor(member, target) => {}
            _ => {
                let mut inner = Vec::new();
                for leaf in node.leaves() {
                    expansions_to_leaf(tree, node, leaf.id(), &mut inner);
                }
                segments.push(inner);
            }
        }
    }
    let mut acc = vec![Vec::new()];
    for seg in &segments {
        let mut next = Vec::with_capacity(acc.len() * seg.len());
        for base in &acc {
            for choice in seg {
                let mut path = base.clone();
                path.extend(choice.iter().cloned());
                next.push(path);
            }
        }
        acc = next;
    }
    out.extend(acc);
}

fn raw_within(tree: &WorkflowDef, scope: &BtNode, node_id: &NodeId, out: &mut Vec<NodeId>) {
    if node_id == scope.id() {
        out.push(node_id.clone());
        return;
    }
    let parent = tree.parent(node_id).expect("node under scope has a parent");
    let ordered_parent =
        matches!(parent, BtNode::Sequence { .. } | BtNode::Fallback { .. });
    match tree.prev_sibling(node_id) {
        Some(prev) if ordered_parent => raw_within(tree, scope, prev.id(), out),
        _ => raw_within(tree, scope, parent.id(), out),
    }
    out.push(node_id.clone());
}

fn greedy_expansion(
    tree: &WorkflowDef,
    raw: &RawPath,
    node_id: &NodeId,
    weights: Option<&dyn Fn(&LeafId) -> f64>,
) -> Path {
    let weight = |leaf: &LeafId| weights.map(|w| w(leaf)).unwrap_or(1.0);
    let mut memo = std::collections::BTreeMap::new();
    let mut leaves = Vec::new();
    for member in &raw.nodes {
        let node = tree.node(member).expect("raw path member exists");
        match node {
            BtNode::Leaf { leaf_id, .. } => leaves.push(leaf_id.clone()),
            _ if tree.is_ancestor(member, node_id) => {}
            _ => leaves.extend(greedy_chain(tree, node, &weight, &mut memo).0),
        }
    }
    Path { leaves: dedup(leaves) }
}

/// Best single expansion within `scope`: the chain to the leaf whose
/// full recursive chain carries the most weight, ties to the smallest
/// target leaf id. Memoized per composite, since the best expansion of a
/// composite does not depend on what surrounds it.
fn greedy_chain(
    tree: &WorkflowDef,
    scope: &BtNode,
    weight: &dyn Fn(&LeafId) -> f64,
    memo: &mut std::collections::BTreeMap<NodeId, (Vec<LeafId>, f64)>,
) -> (Vec<LeafId>, f64) {
    if let BtNode::Leaf { leaf_id, .. } = scope {
        return (vec![leaf_id.clone()], weight(leaf_id));
    }
    if let Some(hit) = memo.get(scope.id()) {
        return hit.clone();
    }
    let mut best: Option<(f64, LeafId, Vec<LeafId>)> = None;
    for target in scope.leaves() {
        let BtNode::Leaf { leaf_id: target_id, .. } = target else { continue };
        let mut chain = Vec::new();
        raw_within(tree, scope, target.id(), &mut chain);
        let mut expansion = Vec::new();
        let mut total = 0.0;
        for member in &chain {
            let node = tree.node(member).expect("chain member exists");
            match node {
                BtNode::Leaf { leaf_id, .. } => {
                    expansion.push(leaf_id.clone());
                    total += weight(leaf_id);
                }
                _ if member == scope.id() || tree.is_ancestor(member, target.id()) => {}
                _ => {
                    let (inner, w) = greedy_chain(tree, node, weight, memo);
                    expansion.extend(inner);
                    total += w;
                }
            }
        }
        let better = match &best {
            None => true,
            Some((w, id, _)) => total > *w || (total == *w && target_id < id),
        };
        if better {
            best = Some((total, target_id.clone(), expansion));
        }
    }
    let (total, _, expansion) = best.expect("composites have at least one leaf");
    memo.insert(scope.id().clone(), (expansion.clone(), total));
    (expansion, total)
}

fn dedup(leaves: Vec<LeafId>) -> Vec<LeafId> {
    let mut seen = std::collections::BTreeSet::new();
    leaves.into_iter().filter(|l| seen.insert(l.clone())).collect()
}

/// True iff `leaves` is an order-preserving subset of at least one path of
/// the tree.
///
/// Decided exactly without enumerating expansions: a state set tracks how
/// many of the queried leaves some chain prefix has matched, threading
/// through ordered composites (a chain traverses full expansions of every
/// earlier sibling and may stop inside any child) and branching at
/// parallels. Leaf ids are unique in a tree, so matching is forced
/// whenever a chain visits a queried leaf.
pub fn is_valid_subpath(tree: &WorkflowDef, leaves: &[LeafId]) -> Result<bool, PathError> {
    for l in leaves {
        if tree.leaf(l).is_none() {
            return Err(PathError::UnknownNode(NodeId::from(l)));
        }
    }
    if leaves.is_empty() {
        return Ok(false);
    }
    let mut position = std::collections::BTreeMap::new();
    for (i, l) in leaves.iter().enumerate() {
        if position.insert(l.clone(), i).is_some() {
            return Ok(false);
        }
    }
    let states = embed(&tree.root, &[0usize].into_iter().collect(), &position);
    Ok(states.contains(&leaves.len()))
}

/// Match positions reachable after traversing one chain of `node`'s
/// subtree, starting from any of `states` matched leaves.
fn embed(
    node: &BtNode,
    states: &std::collections::BTreeSet<usize>,
    position: &std::collections::BTreeMap<LeafId, usize>,
) -> std::collections::BTreeSet<usize> {
    use std::collections::BTreeSet;
    if states.is_empty() {
        return BTreeSet::new();
    }
    match node {
        BtNode::Leaf { leaf_id, .. } => match position.get(leaf_id) {
            None => states.clone(),
            Some(&k) => states
                .iter()
                .filter_map(|&i| if i == k { Some(i + 1) } else { None })
                .collect(),
        },
        BtNode::Sequence { children, .. } | BtNode::Fallback { children, .. } => {
            // A chain stops inside any child after passing through a full
            // expansion of each earlier sibling; passing through and
            // stopping reach the same match sets.
            let mut acc = states.clone();
            let mut out = BTreeSet::new();
            for child in children {
                acc = embed(child, &acc, position);
                out.extend(acc.iter().copied());
            }
            out
        }
        BtNode::Parallel { children, .. } => {
            let mut out = BTreeSet::new();
            for child in children {
                out.extend(embed(child, states, position));
            }
            out
        }
        BtNode::Decorator { child, .. } => embed(child, states, position),
    }
}

/// Runs `trials` randomized executions and reports whether any two subpath
/// leaves were ever active at overlapping logical times. Zero trials is
/// vacuously exclusive.
pub fn check_exclusivity(
    tree: &WorkflowDef,
    subpath: &[LeafId],
    executor: &mut dyn LeafExecutor,
    trials: u32,
    rng_seed: u64,
) -> Result<bool, PathError> {
    for t in 0..trials {
        let seed = rng_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(t as u64);
        let out = crate::bt::execute(tree, Payload::new(), executor, seed)?;
        let mut intervals: Vec<(usize, f64, f64)> = Vec::new();
        for (i, leaf) in subpath.iter().enumerate() {
            for rec in out.log.invocations(leaf) {
                intervals.push((i, rec.start, rec.end));
            }
        }
        for (i, &(la, sa, ea)) in intervals.iter().enumerate() {
            for &(lb, sb, eb) in &intervals[i + 1..] {
                if la != lb && sa < eb && sb < ea {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::node::{fallback, leaf, parallel, sequence};
    use crate::bt::{AggSpec, FunctionSpec, RandomOutcome};

    fn funcs(ids: &[&str]) -> Vec<FunctionSpec> {
        ids.iter().map(|i| FunctionSpec::new(*i, "mock")).collect()
    }

    /// The canonical example tree used throughout the tests and docs.
    pub(crate) fn t1() -> WorkflowDef {
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
        WorkflowDef::new("t1", tree, funcs(&["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"]))
    }

    fn ids(raw: &[NodeId]) -> Vec<&str> {
        raw.iter().map(|n| n.as_str()).collect()
    }

    #[test]
    fn raw_path_of_root_is_itself() {
        let t = t1();
        let raw = raw_path(&t, t.root.id()).unwrap();
        assert_eq!(raw.nodes, vec![t.root.id().clone()]);
    }

    #[test]
    fn raw_path_follows_prev_sibling_under_sequence() {
        let t = t1();
        let raw = raw_path(&t, &NodeId::new("f8")).unwrap();
        // f8 extends its elder sibling f2's raw path.
        assert!(ids(&raw.nodes).contains(&"f2"));
        assert_eq!(raw.nodes.last().unwrap().as_str(), "f8");
    }

    #[test]
    fn raw_path_under_parallel_skips_prev_rule() {
        // Second parallel branch extends the parallel composite, not its
        // sibling branch.
        let t = t1();
        let raw = raw_path(&t, &NodeId::new("f5")).unwrap();
        assert!(!ids(&raw.nodes).contains(&"f2"));
        assert!(!ids(&raw.nodes).contains(&"f8"));
    }

    #[test]
    fn raw_path_is_stable() {
        let t = t1();
        let a = raw_path(&t, &NodeId::new("f4")).unwrap();
        let b = raw_path(&t, &NodeId::new("f4")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.nodes.last().unwrap().as_str(), "f4");
    }

    #[test]
    fn expansion_includes_reference_subpath() {
        let t = t1();
        let paths = expand_paths(&t, &NodeId::new("f3"), DEFAULT_EXPANSION_CAP).unwrap();
        let want: Vec<LeafId> = ["f1", "f2", "f8", "f3"].iter().map(|s| LeafId::new(*s)).collect();
        assert!(paths.iter().any(|p| p.leaves == want), "{paths:?}");
    }

    #[test]
    fn leaf_root_expands_to_itself() {
        let def = WorkflowDef::new("w", leaf("only"), funcs(&["only"]));
        let paths = expand_paths(&def, &NodeId::new("only"), 16).unwrap();
        assert_eq!(paths, vec![Path { leaves: vec![LeafId::new("only")] }]);
    }

    #[test]
    fn node_under_parallel_yields_one_expansion_per_branch() {
        let tree = sequence(vec![
            parallel(AggSpec::AllSucceed, vec![leaf("a"), leaf("b")]),
            leaf("z"),
        ]);
        let def = WorkflowDef::new("w", tree, funcs(&["a", "b", "z"]));
        let paths = expand_paths(&def, &NodeId::new("z"), 16).unwrap();
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn prefix_examples() {
        let t = t1();
        // Root composite's prefix is its raw path.
        let p = prefix(&t, t.root.id()).unwrap();
        assert_eq!(p.nodes, vec![t.root.id().clone()]);
        // Leaves under the same parallel (direct children) share prefixes.
        let tree = parallel(AggSpec::AllSucceed, vec![leaf("x"), leaf("y")]);
        let def = WorkflowDef::new("w", tree, funcs(&["x", "y"]));
        assert!(same_prefix(&def, &LeafId::new("x"), &LeafId::new("y")).unwrap());
        // Sequence siblings differ: the second one's prefix includes the
        // first.
        let tree = sequence(vec![leaf("x"), leaf("y")]);
        let def = WorkflowDef::new("w", tree, funcs(&["x", "y"]));
        assert!(!same_prefix(&def, &LeafId::new("x"), &LeafId::new("y")).unwrap());
    }

    #[test]
    fn same_prefix_distinguishes_ancestor_roles() {
        // A parallel branch leaf and the leaf after the parallel share the
        // same prefix node sequence, but the parallel is an ancestor of
        // only one of them: the first is ready when the parallel starts,
        // the second when it completes.
        let tree = sequence(vec![
            leaf("gen"),
            parallel(AggSpec::AllSucceed, vec![leaf("c1"), leaf("c2")]),
            leaf("merge"),
        ]);
        let def = WorkflowDef::new("w", tree, funcs(&["gen", "c1", "c2", "merge"]));
        assert!(same_prefix(&def, &LeafId::new("c1"), &LeafId::new("c2")).unwrap());
        assert!(!same_prefix(&def, &LeafId::new("c1"), &LeafId::new("merge")).unwrap());
    }

    #[test]
    fn same_prefix_is_conservative_across_depths() {
        // Leaves in disjoint parallel branches at different depths start
        // simultaneously in practice but have different raw prefixes.
        let tree = parallel(
            AggSpec::AllSucceed,
            vec![leaf("x"), sequence(vec![leaf("y")])],
        );
        let def = WorkflowDef::new("w", tree, funcs(&["x", "y"]));
        assert!(!same_prefix(&def, &LeafId::new("x"), &LeafId::new("y")).unwrap());
    }

    #[test]
    fn same_prefix_rejects_composites() {
        let t = t1();
        let err = same_prefix(&t, &LeafId::new("n0"), &LeafId::new("f1")).unwrap_err();
        assert!(matches!(err, PathError::NotALeaf(_) | PathError::UnknownNode(_)));
    }

    #[test]
    fn subpath_validity_examples() {
        let t = t1();
        let l = |s: &str| LeafId::new(s);
        assert!(is_valid_subpath(&t, &[l("f1"), l("f3")]).unwrap());
        assert!(!is_valid_subpath(&t, &[l("f2"), l("f5")]).unwrap());
        assert!(is_valid_subpath(&t, &[l("f6")]).unwrap());
        // Fallback siblings are ordered, so both can share a subpath.
        assert!(is_valid_subpath(&t, &[l("f3"), l("f4")]).unwrap());
        assert!(!is_valid_subpath(&t, &[l("f4"), l("f3")]).unwrap());
    }

    #[test]
    fn exclusivity_holds_for_valid_subpaths() {
        let t = t1();
        let sp: Vec<LeafId> = ["f1", "f2", "f8", "f3"].iter().map(|s| LeafId::new(*s)).collect();
        let mut exec = RandomOutcome { fail_prob: 0.3 };
        assert!(check_exclusivity(&t, &sp, &mut exec, 100, 7).unwrap());
    }

    #[test]
    fn parallel_siblings_overlap() {
        let tree = parallel(AggSpec::AllSucceed, vec![leaf("x"), leaf("y")]);
        let def = WorkflowDef::new("w", tree, funcs(&["x", "y"]));
        let sp = vec![LeafId::new("x"), LeafId::new("y")];
        let mut exec = RandomOutcome { fail_prob: 0.0 };
        assert!(!check_exclusivity(&def, &sp, &mut exec, 5, 7).unwrap());
    }

    #[test]
    fn zero_trials_is_vacuously_exclusive() {
        let tree = parallel(AggSpec::AllSucceed, vec![leaf("x"), leaf("y")]);
        let def = WorkflowDef::new("w", tree, funcs(&["x", "y"]));
        let sp = vec![LeafId::new("x"), LeafId::new("y")];
        let mut exec = RandomOutcome { fail_prob: 0.0 };
        assert!(check_exclusivity(&def, &sp, &mut exec, 0, 7).unwrap());
    }

    #[test]
    fn greedy_fallback_prefers_heavier_branch() {
        let tree = sequence(vec![
            parallel(AggSpec::AllSucceed, vec![leaf("a"), leaf("b")]),
            leaf("z"),
        ]);
        let def = WorkflowDef::new("w", tree, funcs(&["a", "b", "z"]));
        let w = |l: &LeafId| if l.as_str() == "b" { 10.0 } else { 1.0 };
        // cap 1 forces the greedy fallback.
        let paths = expand_paths_weighted(&def, &NodeId::new("z"), 1, Some(&w)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].leaves, vec![LeafId::new("b"), LeafId::new("z")]);
    }
}
