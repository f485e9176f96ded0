//! Behavior-tree domain model, validation and a synchronous interpreter.

pub(crate) mod exec;
pub(crate) mod node;
pub(crate) mod payload;
pub mod wire;
pub(crate) mod workflow;

pub use exec::{
    eval_agg, eval_tail, execute, AlwaysSucceed, ExecError, ExecOutcome, ExecRecord, ExecutionLog,
    Interpreter, LeafCall, LeafExecution, LeafExecutor, RandomOutcome, Registry,
    StandardExecutor, TailDecision,
};
pub use node::{decorator, fallback, leaf, leaf_fn, parallel, sequence, synthetic_leaf};
pub use node::{AggSpec, BtNode, FunctionSpec, TailSpec};
pub use payload::{Payload, PayloadValue, DEFAULT_PAYLOAD_LIMIT, END_KEY, SEL_KEY};
pub use workflow::{validate, Violation, WorkflowDef};

use serde::{Deserialize, Serialize};

/// Completion outcome of a leaf or composite.
///
/// "Skipped" is not a status: it is recorded in execution logs as a special
/// kind of execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Success,
    Failure,
}

impl ExecStatus {
    pub fn invert(self) -> Self {
        match self {
            ExecStatus::Success => ExecStatus::Failure,
            ExecStatus::Failure => ExecStatus::Success,
        }
    }

    pub fn is_success(self) -> bool {
        matches!(self, ExecStatus::Success)
    }
}
