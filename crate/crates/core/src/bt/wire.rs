//! Workflow JSON format (format 1), documented in `docs/formats.md`.
//!
//! Parsing is split in two: serde handles the shape, `compile` turns the
//! document into a [`WorkflowDef`] while collecting invariant violations
//! (a decorator without a child is a violation, not a parse error).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bt::node::{AggSpec, BtNode, FunctionSpec, TailSpec};
use crate::bt::workflow::{validate, Violation, WorkflowDef};
use crate::ids::{FunctionId, LeafId, NodeId};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowFile {
    pub format: u32,
    pub workflow_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
    pub functions: Vec<FunctionSpec>,
    pub root: NodeDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_id: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<Box<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agg: Option<AggSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0}")]
    UnsupportedFormat(u32),
    #[error("invalid workflow: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Parses and compiles a workflow file, failing on any violation.
pub fn parse_workflow(json: &str) -> Result<WorkflowDef, WireError> {
    let file: WorkflowFile = serde_json::from_str(json)?;
    if file.format != FORMAT_VERSION {
        return Err(WireError::UnsupportedFormat(file.format));
    }
    compile(&file).map_err(WireError::Invalid)
}

/// Compiles a parsed document; returns every violation when invalid.
pub fn compile(file: &WorkflowFile) -> Result<WorkflowDef, Vec<Violation>> {
    let mut violations = Vec::new();
    let root = build_node(&file.root, &mut violations);
    let def = WorkflowDef::new(&file.workflow_id, root, file.functions.clone());
    let def = file.meta.iter().fold(def, |d, (k, v)| d.with_meta(k, v));
    violations.extend(validate(&def));
    if violations.is_empty() {
        Ok(def)
    } else {
        Err(violations)
    }
}

/// Violations for a document without building the workflow.
pub fn validate_file(file: &WorkflowFile) -> Vec<Violation> {
    match compile(file) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

fn build_node(doc: &NodeDoc, violations: &mut Vec<Violation>) -> BtNode {
    let id = NodeId::new(doc.id.clone().unwrap_or_default());
    match doc.kind.as_str() {
        "leaf" => {
            let leaf_id = doc.leaf_id.clone().or_else(|| doc.id.clone()).unwrap_or_default();
            let function_id = doc.function_id.clone().unwrap_or_else(|| leaf_id.clone());
            BtNode::Leaf {
                id: NodeId::new(leaf_id.clone()),
                leaf_id: LeafId::new(leaf_id),
                function_id: FunctionId::new(function_id),
                synthetic: doc.synthetic,
            }
        }
        "sequence" => BtNode::Sequence { id, children: build_children(doc, violations) },
        "fallback" => BtNode::Fallback { id, children: build_children(doc, violations) },
        "parallel" => BtNode::Parallel {
            id,
            children: build_children(doc, violations),
            agg: doc.agg.clone().unwrap_or(AggSpec::AllSucceed),
        },
        "decorator" => {
            let tail = doc.tail.clone().unwrap_or(TailSpec::Once);
            match (&doc.child, doc.children.as_deref()) {
                (Some(child), _) => BtNode::Decorator {
                    id,
                    child: Box::new(build_node(child, violations)),
                    tail,
                },
                (None, Some([only])) => BtNode::Decorator {
                    id,
                    child: Box::new(build_node(only, violations)),
                    tail,
                },
                _ => {
                    violations.push(Violation::DecoratorArity(id.clone()));
                    // Placeholder keeping the tree shape well-formed.
                    BtNode::Decorator {
                        id,
                        child: Box::new(BtNode::Sequence {
                            id: NodeId::new(""),
                            children: vec![],
                        }),
                        tail,
                    }
                }
            }
        }
        other => {
            violations.push(Violation::EmptyComposite(NodeId::new(format!(
                "unknown node type `{other}`"
            ))));
            BtNode::Sequence { id, children: vec![] }
        }
    }
}

fn build_children(doc: &NodeDoc, violations: &mut Vec<Violation>) -> Vec<BtNode> {
    doc.children
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|c| build_node(c, violations))
        .collect()
}

/// Serializes a workflow back to its file form.
pub fn to_file(def: &WorkflowDef) -> WorkflowFile {
    WorkflowFile {
        format: FORMAT_VERSION,
        workflow_id: def.workflow_id.clone(),
        meta: def.meta.clone(),
        functions: def.functions().values().cloned().collect(),
        root: node_to_doc(&def.root),
    }
}

pub fn to_json(def: &WorkflowDef) -> String {
    serde_json::to_string_pretty(&to_file(def)).expect("workflow serialization")
}

fn node_to_doc(node: &BtNode) -> NodeDoc {
    let base = NodeDoc {
        kind: node.kind_name().to_string(),
        id: None,
        leaf_id: None,
        function_id: None,
        synthetic: false,
        children: None,
        child: None,
        agg: None,
        tail: None,
    };
    match node {
        BtNode::Leaf { leaf_id, function_id, synthetic, .. } => NodeDoc {
            leaf_id: Some(leaf_id.to_string()),
            function_id: Some(function_id.to_string()),
            synthetic: *synthetic,
            ..base
        },
        BtNode::Sequence { id, children } | BtNode::Fallback { id, children } => NodeDoc {
            id: Some(id.to_string()),
            children: Some(children.iter().map(node_to_doc).collect()),
            ..base
        },
        BtNode::Parallel { id, children, agg } => NodeDoc {
            id: Some(id.to_string()),
            children: Some(children.iter().map(node_to_doc).collect()),
            agg: Some(agg.clone()),
            ..base
        },
        BtNode::Decorator { id, child, tail } => NodeDoc {
            id: Some(id.to_string()),
            child: Some(Box::new(node_to_doc(child))),
            tail: Some(tail.clone()),
            ..base
        },
    }
}
