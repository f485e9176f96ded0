//! Discrete-event simulator of workflow execution over a placed cluster,
//! plus the policy-comparison benchmark harness.

pub mod bench;
mod engine;
mod flow;
mod report;
pub mod scenario;

pub use engine::simulate;
pub use report::{
    export_gantt, export_node_tx, node_tx_series, parse_gantt, GanttEntry, SimPeriod, SimReport,
    TransferKind, TransferRecord, TxPoint, TxSegment,
};
pub use scenario::{Mode, Scenario, ScenarioFile, ScenarioWorkflow};

use beeflow_core::ids::LeafId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("leaf `{0}` is not covered by any placed subpath")]
    UnplacedLeaf(LeafId),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
