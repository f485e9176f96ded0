//! Conversion soundness on random inputs: edge ordering and single
//! execution for DAGs, critical-path optimality under homogeneous nodes,
//! and trace equivalence against the reference FSM interpreter.

use std::collections::BTreeMap;

use beeflow_core::bt::{execute, AlwaysSucceed, ExecStatus, LeafCall, LeafExecutor, Payload};
use beeflow_core::convert::{dag_to_bt, fsm_to_bt};
use beeflow_core::ids::LeafId;
use beeflow_core::trace::{estimate, ProfileDefaults, TraceStore};
use beeflow_testkit as testkit;
use rand::RngCore;

#[test]
fn dag_conversion_preserves_edge_order_and_multiplicity() {
    let mut rng = testkit::rng(42);
    for case in 0..30 {
        let dag = testkit::random_dag(&mut rng, 12, 0.3);
        let def = dag_to_bt(&dag).unwrap();
        for run in 0..200u64 {
            let out = execute(&def, Payload::new(), &mut AlwaysSucceed, run).unwrap();
            assert_eq!(out.status, ExecStatus::Success);
            let mut spans: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
            for rec in out.log.records.iter().filter(|r| !r.is_skipped()) {
                let prev = spans.insert(rec.leaf_id.as_str(), (rec.start, rec.end));
                assert!(prev.is_none(), "case {case}: leaf {} ran twice", rec.leaf_id);
            }
            assert_eq!(spans.len(), dag.nodes.len(), "case {case}: node missing");
            for (u, v) in &dag.edges {
                let (_, u_end) = spans[u.as_str()];
                let (v_start, _) = spans[v.as_str()];
                assert!(
                    u_end <= v_start,
                    "case {case}: edge {u}->{v} violated ({u_end} > {v_start})"
                );
            }
        }
    }
}

#[test]
fn homogeneous_conversion_meets_the_critical_path() {
    let mut rng = testkit::rng(43);
    let defaults = ProfileDefaults {
        init_s: 0.0,
        input_s: 0.0,
        exec_s: 1.0,
        output_s: 0.0,
        input_bytes: 0.0,
        output_bytes: 0.0,
        ..ProfileDefaults::default()
    };
    for case in 0..60 {
        let dag = testkit::random_dag(&mut rng, 12, 0.3);
        let def = dag_to_bt(&dag).unwrap();
        let est = estimate(&TraceStore::new(), &def, &defaults);
        let timeline = beeflow_core::trace::align(&def, &est.profiles, &est.loops).unwrap();
        let want = testkit::critical_path_len(&dag) as f64;
        assert_eq!(timeline.span(), want, "case {case}");
    }
}

/// Body executor sharing the oracle's outcome source: the k-th body
/// execution of a state draws the same label on both sides.
struct SyncedOutcomes<'a> {
    fsm: &'a beeflow_core::convert::FsmDef,
    seed: u64,
    step: usize,
    budget: usize,
    standard: beeflow_core::bt::StandardExecutor,
}

impl LeafExecutor for SyncedOutcomes<'_> {
    fn execute(
        &mut self,
        call: &LeafCall<'_>,
        payload: &mut Payload,
        rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, beeflow_core::bt::ExecError> {
        if let Some(state) = call.leaf_id.as_str().strip_prefix("body_") {
            let label = testkit::outcome_label(self.fsm, self.seed, self.step, state);
            self.step += 1;
            payload.set("OUTCOME", label.as_str());
            if self.step >= self.budget {
                payload.set("END", true);
            }
            return Ok(ExecStatus::Success);
        }
        self.standard.execute(call, payload, rng)
    }
}

#[test]
fn converted_fsm_matches_the_reference_interpreter() {
    let mut rng = testkit::rng(44);
    let budget = 24usize;
    for case in 0..30 {
        let fsm = testkit::random_fsm(&mut rng, 8, 3);
        let def = fsm_to_bt(&fsm).unwrap();
        for run in 0..60u64 {
            let seed = 1000 * case + run;
            let mut exec = SyncedOutcomes {
                fsm: &fsm,
                seed,
                step: 0,
                budget,
                standard: Default::default(),
            };
            let out = execute(&def, Payload::new(), &mut exec, seed).unwrap();
            let got: Vec<String> = out
                .log
                .records
                .iter()
                .filter(|r| !r.is_skipped())
                .filter_map(|r| r.leaf_id.as_str().strip_prefix("body_"))
                .map(str::to_string)
                .collect();
            let want = testkit::fsm_reference_run(&fsm, seed, budget);
            assert_eq!(got, want, "case {case} run {run}");
        }
    }
}

#[test]
fn fsm_bodies_execute_once_per_state_visit() {
    let mut rng = testkit::rng(45);
    let fsm = testkit::random_fsm(&mut rng, 4, 2);
    let def = fsm_to_bt(&fsm).unwrap();
    let mut exec = SyncedOutcomes { fsm: &fsm, seed: 9, step: 0, budget: 10, standard: Default::default() };
    let out = execute(&def, Payload::new(), &mut exec, 9).unwrap();
    let body_count = out
        .log
        .records
        .iter()
        .filter(|r| !r.is_skipped() && r.leaf_id.as_str().starts_with("body_"))
        .count();
    assert_eq!(body_count, testkit::fsm_reference_run(&fsm, 9, 10).len());
    // Synthetic guards never show up as schedulable leaves.
    assert!(def.is_synthetic(&LeafId::new("sel_init")));
}
