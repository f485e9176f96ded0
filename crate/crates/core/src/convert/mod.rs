//! Conversion of DAG- and state machine-based workflow models into
//! behavior trees.

mod dag;
mod fsm;

pub use dag::{dag_to_bt, DagDef};
pub use fsm::{fsm_to_bt, FsmDef, FsmFile, TransitionRow, END_SENTINEL};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("input graph contains a cycle")]
    CyclicInput,
    #[error("input graph is empty")]
    EmptyDag,
    #[error("invalid state machine: {0}")]
    InvalidFsm(String),
}
