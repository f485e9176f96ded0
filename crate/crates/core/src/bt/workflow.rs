//! Workflow definition: a rooted tree plus its function index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::bt::node::{AggSpec, BtNode, TailSpec};
use crate::bt::FunctionSpec;
use crate::ids::{FunctionId, LeafId, NodeId};

/// Invariant violation found by [`validate`]. Violations are data, not
/// failures: collecting them all gives better CLI reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNodeId(NodeId),
    EmptyComposite(NodeId),
    DecoratorArity(NodeId),
    DanglingFunction { leaf: LeafId, function: FunctionId },
    AggOutOfRange { node: NodeId, m: u32, children: usize },
    RetryZero(NodeId),
    EmptyFlagKey(NodeId),
    UnusedFunction(FunctionId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id `{id}`"),
            Violation::EmptyComposite(id) => write!(f, "composite `{id}` has no children"),
            Violation::DecoratorArity(id) => {
                write!(f, "decorator `{id}` must have exactly one child")
            }
            Violation::DanglingFunction { leaf, function } => {
                write!(f, "leaf `{leaf}` references unknown function `{function}`")
            }
            Violation::AggOutOfRange { node, m, children } => write!(
                f,
                "parallel `{node}` requires m={m} successes out of {children} children"
            ),
            Violation::RetryZero(id) => write!(f, "decorator `{id}` retry budget must be >= 1"),
            Violation::EmptyFlagKey(id) => {
                write!(f, "decorator `{id}` loop flag key must be nonempty")
            }
            Violation::UnusedFunction(id) => {
                write!(f, "function `{id}` is not referenced by any leaf")
            }
        }
    }
}

/// Path from the root to a node, as child indices.
pub(crate) type NodePath = Vec<u16>;

/// A validated-on-construction workflow: one root, unique node ids, and a
/// function index covering every leaf. Immutable after construction and
/// safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowDef {
    pub workflow_id: String,
    pub root: BtNode,
    functions: BTreeMap<FunctionId, FunctionSpec>,
    /// Free-form annotations such as `converted_from`.
    pub meta: BTreeMap<String, String>,
    index: BTreeMap<NodeId, NodePath>,
    leaf_order: Vec<LeafId>,
}

impl WorkflowDef {
    /// Builds a workflow, assigning deterministic ids (`n0`, `n1`, ...)
    /// to composites constructed without one.
    pub fn new(
        workflow_id: impl Into<String>,
        mut root: BtNode,
        functions: Vec<FunctionSpec>,
    ) -> Self {
        assign_ids(&mut root);
        let mut index = BTreeMap::new();
        let mut leaf_order = Vec::new();
        build_index(&root, &mut Vec::new(), &mut index, &mut leaf_order);
        WorkflowDef {
            workflow_id: workflow_id.into(),
            root,
            functions: functions.into_iter().map(|f| (f.function_id.clone(), f)).collect(),
            meta: BTreeMap::new(),
            index,
            leaf_order,
        }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn functions(&self) -> &BTreeMap<FunctionId, FunctionSpec> {
        &self.functions
    }

    pub fn function(&self, id: &FunctionId) -> Option<&FunctionSpec> {
        self.functions.get(id)
    }

    /// Leaf ids in document order.
    pub fn leaf_ids(&self) -> &[LeafId] {
        &self.leaf_order
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&BtNode> {
        let path = self.index.get(id)?;
        let mut cur = &self.root;
        for &i in path {
            cur = cur.children().get(i as usize)?;
        }
        Some(cur)
    }

    /// Leaf node for a leaf id (leaf node ids equal leaf ids).
    pub fn leaf(&self, id: &LeafId) -> Option<&BtNode> {
        self.node(&NodeId::from(id)).filter(|n| n.is_leaf())
    }

    pub fn function_of(&self, leaf: &LeafId) -> Option<&FunctionSpec> {
        match self.leaf(leaf)? {
            BtNode::Leaf { function_id, .. } => self.functions.get(function_id),
            _ => None,
        }
    }

    pub fn is_synthetic(&self, leaf: &LeafId) -> bool {
        matches!(self.leaf(leaf), Some(BtNode::Leaf { synthetic: true, .. }))
    }

    /// Non-synthetic leaf ids in document order.
    pub fn real_leaf_ids(&self) -> Vec<LeafId> {
        self.leaf_order.iter().filter(|l| !self.is_synthetic(l)).cloned().collect()
    }

    pub fn parent(&self, id: &NodeId) -> Option<&BtNode> {
        let path = self.index.get(id)?;
        if path.is_empty() {
            return None;
        }
        let mut cur = &self.root;
        for &i in &path[..path.len() - 1] {
            cur = cur.children().get(i as usize)?;
        }
        Some(cur)
    }

    pub fn prev_sibling(&self, id: &NodeId) -> Option<&BtNode> {
        let path = self.index.get(id)?;
        let last = *path.last()? as usize;
        if last == 0 {
            return None;
        }
        self.parent(id)?.children().get(last - 1)
    }

    pub fn is_root(&self, id: &NodeId) -> bool {
        self.index.get(id).map(|p| p.is_empty()).unwrap_or(false)
    }

    /// True if `anc` lies strictly above `node`.
    pub fn is_ancestor(&self, anc: &NodeId, node: &NodeId) -> bool {
        match (self.index.get(anc), self.index.get(node)) {
            (Some(a), Some(n)) => a.len() < n.len() && n[..a.len()] == a[..],
            _ => false,
        }
    }

    /// Node ids of the decorators above a leaf, outermost first.
    pub fn decorator_ancestors(&self, leaf: &LeafId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let Some(path) = self.index.get(&NodeId::from(leaf)) else {
            return out;
        };
        let mut cur = &self.root;
        for &i in path {
            if matches!(cur, BtNode::Decorator { .. }) {
                out.push(cur.id().clone());
            }
            match cur.children().get(i as usize) {
                Some(c) => cur = c,
                None => break,
            }
        }
        out
    }
}

fn assign_ids(root: &mut BtNode) {
    let mut taken = BTreeSet::new();
    collect_ids(root, &mut taken);
    let mut counter = 0u32;
    fill_ids(root, &mut counter, &mut taken);
}

fn collect_ids(node: &BtNode, taken: &mut BTreeSet<NodeId>) {
    if !node.id().as_str().is_empty() {
        taken.insert(node.id().clone());
    }
    for c in node.children() {
        collect_ids(c, taken);
    }
}

fn fill_ids(node: &mut BtNode, counter: &mut u32, taken: &mut BTreeSet<NodeId>) {
    if node.id().as_str().is_empty() {
        let id = loop {
            let candidate = NodeId::new(format!("n{counter}"));
            *counter += 1;
            if !taken.contains(&candidate) {
                break candidate;
            }
        };
        taken.insert(id.clone());
        *node.id_mut() = id;
    }
    for c in node.children_mut() {
        fill_ids(c, counter, taken);
    }
}

fn build_index(
    node: &BtNode,
    path: &mut NodePath,
    index: &mut BTreeMap<NodeId, NodePath>,
    leaves: &mut Vec<LeafId>,
) {
    // First occurrence wins; duplicates are reported by validate().
    index.entry(node.id().clone()).or_insert_with(|| path.clone());
    if let BtNode::Leaf { leaf_id, .. } = node {
        leaves.push(leaf_id.clone());
    }
    for (i, c) in node.children().iter().enumerate() {
        path.push(i as u16);
        build_index(c, path, index, leaves);
        path.pop();
    }
}

/// Checks every workflow invariant, returning all violations found.
/// A valid tree yields an empty list.
pub fn validate(def: &WorkflowDef) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut used_functions = BTreeSet::new();
    walk(&def.root, def, &mut seen, &mut used_functions, &mut out);
    for id in def.functions.keys() {
        if !used_functions.contains(id) {
            out.push(Violation::UnusedFunction(id.clone()));
        }
    }
    out
}

fn walk(
    node: &BtNode,
    def: &WorkflowDef,
    seen: &mut BTreeSet<NodeId>,
    used: &mut BTreeSet<FunctionId>,
    out: &mut Vec<Violation>,
) {
    if !seen.insert(node.id().clone()) {
        out.push(Violation::DuplicateNodeId(node.id().clone()));
    }
    match node {
        BtNode::Leaf { leaf_id, function_id, .. } => {
            used.insert(function_id.clone());
            if !def.functions.contains_key(function_id) {
                out.push(Violation::DanglingFunction {
                    leaf: leaf_id.clone(),
                    function: function_id.clone(),
                });
            }
        }
        BtNode::Sequence { id, children } | BtNode::Fallback { id, children } => {
            if children.is_empty() {
                out.push(Violation::EmptyComposite(id.clone()));
            }
        }
        BtNode::Parallel { id, children, agg } => {
            if children.is_empty() {
                out.push(Violation::EmptyComposite(id.clone()));
            }
            if let AggSpec::MOutOfN { m } = agg {
                if *m == 0 || *m as usize > children.len() {
                    out.push(Violation::AggOutOfRange {
                        node: id.clone(),
                        m: *m,
                        children: children.len(),
                    });
                }
            }
        }
        BtNode::Decorator { id, tail, .. } => match tail {
            TailSpec::Retry { max_n } if *max_n == 0 => out.push(Violation::RetryZero(id.clone())),
            TailSpec::LoopTillEnd { flag_key } if flag_key.is_empty() => {
                out.push(Violation::EmptyFlagKey(id.clone()))
            }
            _ => {}
        },
    }
    for c in node.children() {
        walk(c, def, seen, used, out);
    }
}
