//! Core library for behavior tree-based serverless workflow modeling and
//! scheduling: the tree model and interpreter, path/prefix analysis,
//! DAG/FSM conversion, trace-driven profiling, contention-aware
//! partitioning and placement, and the payload/data-store split.

pub mod bt;
pub mod convert;
pub mod data;
pub mod ids;
pub mod partition;
pub mod path;
pub mod place;
pub mod trace;

pub use bt::{AggSpec, BtNode, ExecStatus, FunctionSpec, Payload, TailSpec, WorkflowDef};
pub use ids::{DataId, FunctionId, LeafId, NodeId};
