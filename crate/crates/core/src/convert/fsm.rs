//! State machine to behavior tree conversion via the selector structure.
//!
//! The emitted tree loops a fallback of per-state sequences under a
//! `loop_till_end` decorator. Each sequence is `[guard, body, update]`:
//! the guard succeeds when the payload `SEL` equals its state, the body
//! runs the state's function and writes an `OUTCOME` label, and the update
//! maps `(state, OUTCOME)` to the next `SEL` or sets `END`. Guards and
//! updates are synthetic zero-cost leaves. Static structure is lost in
//! this conversion, so the output is tagged `converted_from: fsm` and
//! meant for backward compatibility only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bt::node::{fallback, sequence, synthetic_leaf, BtNode, FunctionSpec, TailSpec};
use crate::bt::{WorkflowDef, END_KEY};
use crate::convert::ConvertError;
use crate::ids::FunctionId;

/// Conventional finite state machine with one function per state and a
/// total transition map over each state's outcome labels.
#[derive(Debug, Clone)]
pub struct FsmDef {
    pub states: BTreeSet<String>,
    pub initial: String,
    pub body: BTreeMap<String, FunctionId>,
    /// (state, outcome label) -> next state, or "END".
    pub transitions: BTreeMap<(String, String), String>,
}

pub const END_SENTINEL: &str = "END";

/// One row of the file form's transition table; `next` may be the `END`
/// sentinel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRow {
    pub state: String,
    pub outcome: String,
    pub next: String,
}

/// JSON file form of a state machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FsmFile {
    pub states: BTreeSet<String>,
    pub initial: String,
    pub body: BTreeMap<String, FunctionId>,
    pub transitions: Vec<TransitionRow>,
}

impl From<&FsmFile> for FsmDef {
    fn from(f: &FsmFile) -> Self {
        FsmDef {
            states: f.states.clone(),
            initial: f.initial.clone(),
            body: f.body.clone(),
            transitions: f
                .transitions
                .iter()
                .map(|t| ((t.state.clone(), t.outcome.clone()), t.next.clone()))
                .collect(),
        }
    }
}

impl From<&FsmDef> for FsmFile {
    fn from(d: &FsmDef) -> Self {
        FsmFile {
            states: d.states.clone(),
            initial: d.initial.clone(),
            body: d.body.clone(),
            transitions: d
                .transitions
                .iter()
                .map(|((state, outcome), next)| TransitionRow {
                    state: state.clone(),
                    outcome: outcome.clone(),
                    next: next.clone(),
                })
                .collect(),
        }
    }
}

impl FsmDef {
    pub fn outcomes_of(&self, state: &str) -> Vec<&str> {
        self.transitions
            .keys()
            .filter(|(s, _)| s == state)
            .map(|(_, o)| o.as_str())
            .collect()
    }

    fn check(&self) -> Result<(), ConvertError> {
        if self.states.is_empty() {
            return Err(ConvertError::InvalidFsm("no states".into()));
        }
        if !self.states.contains(&self.initial) {
            return Err(ConvertError::InvalidFsm(format!(
                "initial state `{}` not declared",
                self.initial
            )));
        }
        if self.states.contains(END_SENTINEL) {
            return Err(ConvertError::InvalidFsm("`END` is a reserved state name".into()));
        }
        for s in &self.states {
            if !self.body.contains_key(s) {
                return Err(ConvertError::InvalidFsm(format!("state `{s}` has no body")));
            }
            if self.outcomes_of(s).is_empty() {
                return Err(ConvertError::InvalidFsm(format!("state `{s}` has no transitions")));
            }
        }
        for ((s, _), next) in &self.transitions {
            if !self.states.contains(s) {
                return Err(ConvertError::InvalidFsm(format!("transition from unknown `{s}`")));
            }
            if next != END_SENTINEL && !self.states.contains(next) {
                return Err(ConvertError::InvalidFsm(format!("transition to unknown `{next}`")));
            }
        }
        Ok(())
    }
}

/// Converts a state machine to a behavior tree with equivalent task
/// execution logic.
pub fn fsm_to_bt(fsm: &FsmDef) -> Result<WorkflowDef, ConvertError> {
    fsm.check()?;
    let mut functions = Vec::new();
    let mut branches = Vec::new();

    let init_fn = FunctionId::new("fsm.init");
    functions.push(
        zero_cost(FunctionSpec::new(init_fn.clone(), "fsm_init"))
            .with_config("state", fsm.initial.clone()),
    );

    for state in &fsm.states {
        let guard_fn = FunctionId::new(format!("fsm.guard.{state}"));
        functions.push(
            zero_cost(FunctionSpec::new(guard_fn.clone(), "fsm_guard"))
                .with_config("state", state.clone()),
        );

        let body_fn = fsm.body[state].clone();
        if !functions.iter().any(|f: &FunctionSpec| f.function_id == body_fn) {
            let outcomes = fsm.outcomes_of(state).join(",");
            functions.push(
                FunctionSpec::new(body_fn.clone(), "fsm_body").with_config("outcomes", outcomes),
            );
        }

        let update_fn = FunctionId::new(format!("fsm.update.{state}"));
        let mut update = zero_cost(FunctionSpec::new(update_fn.clone(), "fsm_update"))
            .with_config("state", state.clone());
        for ((s, outcome), next) in &fsm.transitions {
            if s == state {
                update = update.with_config(&format!("on:{outcome}"), next.clone());
            }
        }
        functions.push(update);

        branches.push(sequence(vec![
            synthetic_leaf(&format!("guard_{state}"), guard_fn.as_str()),
            BtNode::Leaf {
                id: crate::ids::NodeId::new(format!("body_{state}")),
                leaf_id: crate::ids::LeafId::new(format!("body_{state}")),
                function_id: body_fn,
                synthetic: false,
            },
            synthetic_leaf(&format!("update_{state}"), update_fn.as_str()),
        ]));
    }

    let selector = crate::bt::node::decorator(
        TailSpec::LoopTillEnd { flag_key: END_KEY.to_string() },
        fallback(branches),
    );
    let root = sequence(vec![synthetic_leaf("sel_init", init_fn.as_str()), selector]);

    Ok(WorkflowDef::new(format!("fsm-{}", fsm.states.len()), root, functions)
        .with_meta("converted_from", "fsm"))
}

fn zero_cost(spec: FunctionSpec) -> FunctionSpec {
    FunctionSpec { mem_request_bytes: 1, cpu_request_cores: 0.01, ..spec }
}
