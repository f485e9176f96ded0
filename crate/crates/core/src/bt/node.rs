//! Tree nodes, composite parameter specs and function specs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{FunctionId, LeafId, NodeId};

/// Aggregate over parallel child results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggSpec {
    AllSucceed,
    MOutOfN { m: u32 },
    Named { name: String },
}

/// Decorator tail deciding re-entry or the final result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailSpec {
    Once,
    Negate,
    Retry { max_n: u32 },
    LoopTillEnd { flag_key: String },
    Named { name: String },
}

/// Resource requests and executor binding for one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    #[serde(rename = "id")]
    pub function_id: FunctionId,
    pub mem_request_bytes: u64,
    pub cpu_request_cores: f64,
    pub executor_kind: String,
    /// Extra executor parameters (used by converter-generated leaves).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

impl FunctionSpec {
    pub fn new(id: impl Into<FunctionId>, executor_kind: impl Into<String>) -> Self {
        FunctionSpec {
            function_id: id.into(),
            mem_request_bytes: 64 * 1024 * 1024,
            cpu_request_cores: 1.0,
            executor_kind: executor_kind.into(),
            config: BTreeMap::new(),
        }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<String>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }
}

/// One node of a behavior tree. Child order is significant and preserved.
#[derive(Debug, Clone, PartialEq)]
pub enum BtNode {
    Leaf {
        id: NodeId,
        leaf_id: LeafId,
        function_id: FunctionId,
        /// Converter-generated control leaves (guards, selector updates)
        /// that profiling and partitioning treat as zero-cost.
        synthetic: bool,
    },
    Sequence {
        id: NodeId,
        children: Vec<BtNode>,
    },
    Fallback {
        id: NodeId,
        children: Vec<BtNode>,
    },
    Parallel {
        id: NodeId,
        children: Vec<BtNode>,
        agg: AggSpec,
    },
    Decorator {
        id: NodeId,
        child: Box<BtNode>,
        tail: TailSpec,
    },
}

impl BtNode {
    pub fn id(&self) -> &NodeId {
        match self {
            BtNode::Leaf { id, .. }
            | BtNode::Sequence { id, .. }
            | BtNode::Fallback { id, .. }
            | BtNode::Parallel { id, .. }
            | BtNode::Decorator { id, .. } => id,
        }
    }

    pub(crate) fn id_mut(&mut self) -> &mut NodeId {
        match self {
            BtNode::Leaf { id, .. }
            | BtNode::Sequence { id, .. }
            | BtNode::Fallback { id, .. }
            | BtNode::Parallel { id, .. }
            | BtNode::Decorator { id, .. } => id,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, BtNode::Leaf { .. })
    }

    pub fn is_composite(&self) -> bool {
        !self.is_leaf()
    }

    pub fn children(&self) -> &[BtNode] {
        match self {
            BtNode::Leaf { .. } => &[],
            BtNode::Sequence { children, .. }
            | BtNode::Fallback { children, .. }
            | BtNode::Parallel { children, .. } => children,
            BtNode::Decorator { child, .. } => std::slice::from_ref(child),
        }
    }

    pub(crate) fn children_mut(&mut self) -> &mut [BtNode] {
        match self {
            BtNode::Leaf { .. } => &mut [],
            BtNode::Sequence { children, .. }
            | BtNode::Fallback { children, .. }
            | BtNode::Parallel { children, .. } => children,
            BtNode::Decorator { child, .. } => std::slice::from_mut(child),
        }
    }

    /// Leaves of this subtree in document order.
    pub fn leaves(&self) -> Vec<&BtNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a BtNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in self.children() {
                c.collect_leaves(out);
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BtNode::Leaf { .. } => "leaf",
            BtNode::Sequence { .. } => "sequence",
            BtNode::Fallback { .. } => "fallback",
            BtNode::Parallel { .. } => "parallel",
            BtNode::Decorator { .. } => "decorator",
        }
    }
}

/// Leaf whose function id equals its leaf id.
pub fn leaf(id: &str) -> BtNode {
    leaf_fn(id, id)
}

/// Leaf invoking an explicitly named function.
pub fn leaf_fn(id: &str, function: &str) -> BtNode {
    BtNode::Leaf {
        id: NodeId::new(id),
        leaf_id: LeafId::new(id),
        function_id: FunctionId::new(function),
        synthetic: false,
    }
}

/// Zero-cost control leaf generated by converters.
pub fn synthetic_leaf(id: &str, function: &str) -> BtNode {
    BtNode::Leaf {
        id: NodeId::new(id),
        leaf_id: LeafId::new(id),
        function_id: FunctionId::new(function),
        synthetic: true,
    }
}

/// Sequence composite; node id is assigned when the tree is finalized.
pub fn sequence(children: Vec<BtNode>) -> BtNode {
    BtNode::Sequence { id: NodeId::new(""), children }
}

pub fn fallback(children: Vec<BtNode>) -> BtNode {
    BtNode::Fallback { id: NodeId::new(""), children }
}

pub fn parallel(agg: AggSpec, children: Vec<BtNode>) -> BtNode {
    BtNode::Parallel { id: NodeId::new(""), children, agg }
}

pub fn decorator(tail: TailSpec, child: BtNode) -> BtNode {
    BtNode::Decorator { id: NodeId::new(""), child: Box::new(child), tail }
}
