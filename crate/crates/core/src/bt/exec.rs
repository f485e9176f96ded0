//! Synchronous tree interpreter with deterministic logical time.
//!
//! Parallel children are logically concurrent (they share a start time)
//! but are scheduled deterministically left to right, so identical
//! (tree, payload, seed, executor) inputs yield identical logs.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bt::node::{AggSpec, BtNode, FunctionSpec, TailSpec};
use crate::bt::payload::{Payload, DEFAULT_PAYLOAD_LIMIT, END_KEY, SEL_KEY};
use crate::bt::ExecStatus;
use crate::ids::{FunctionId, LeafId};
use crate::bt::workflow::WorkflowDef;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no executor resolves function `{0}`")]
    UnresolvedExecutor(FunctionId),
    #[error("aggregate `{0}` is not registered")]
    AggUndefined(String),
    #[error("tail `{0}` is not registered")]
    TailUndefined(String),
    #[error("payload size {size} exceeds limit {limit}")]
    PayloadLimitExceeded { size: usize, limit: usize },
    #[error("decorator `{0}` exceeded the interpreter iteration limit")]
    IterationLimit(String),
}

/// Decision returned by a decorator tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailDecision {
    Reenter,
    Return(ExecStatus),
}

type AggFn = dyn Fn(&[ExecStatus]) -> ExecStatus + Send + Sync;
type TailFn = dyn Fn(ExecStatus, &Payload, u32) -> TailDecision + Send + Sync;

/// Name registry for customized aggregates and tails. Unknown names are a
/// hard error, never a silent default.
#[derive(Default, Clone)]
pub struct Registry {
    aggs: BTreeMap<String, Arc<AggFn>>,
    tails: BTreeMap<String, Arc<TailFn>>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn register_agg(
        &mut self,
        name: &str,
        f: impl Fn(&[ExecStatus]) -> ExecStatus + Send + Sync + 'static,
    ) {
        self.aggs.insert(name.to_string(), Arc::new(f));
    }

    pub fn register_tail(
        &mut self,
        name: &str,
        f: impl Fn(ExecStatus, &Payload, u32) -> TailDecision + Send + Sync + 'static,
    ) {
        self.tails.insert(name.to_string(), Arc::new(f));
    }
}

/// Evaluates an aggregate over the ordered child results.
pub fn eval_agg(
    spec: &AggSpec,
    results: &[ExecStatus],
    registry: &Registry,
) -> Result<ExecStatus, ExecError> {
    match spec {
        AggSpec::AllSucceed => Ok(if results.iter().all(|s| s.is_success()) {
            ExecStatus::Success
        } else {
            ExecStatus::Failure
        }),
        AggSpec::MOutOfN { m } => {
            let ok = results.iter().filter(|s| s.is_success()).count();
            Ok(if ok as u32 >= *m { ExecStatus::Success } else { ExecStatus::Failure })
        }
        AggSpec::Named { name } => {
            let f = registry.aggs.get(name).ok_or_else(|| ExecError::AggUndefined(name.clone()))?;
            Ok(f(results))
        }
    }
}

/// Evaluates a decorator tail after one subtree pass. `iteration` is
/// 1-based.
pub fn eval_tail(
    spec: &TailSpec,
    subtree_result: ExecStatus,
    payload: &Payload,
    iteration: u32,
    registry: &Registry,
) -> Result<TailDecision, ExecError> {
    debug_assert!(iteration >= 1);
    match spec {
        TailSpec::Once => Ok(TailDecision::Return(subtree_result)),
        TailSpec::Negate => Ok(TailDecision::Return(subtree_result.invert())),
        TailSpec::Retry { max_n } => {
            if subtree_result == ExecStatus::Failure && iteration < *max_n {
                Ok(TailDecision::Reenter)
            } else {
                Ok(TailDecision::Return(subtree_result))
            }
        }
        TailSpec::LoopTillEnd { flag_key } => {
            if payload.is_truthy(flag_key) {
                Ok(TailDecision::Return(subtree_result))
            } else {
                Ok(TailDecision::Reenter)
            }
        }
        TailSpec::Named { name } => {
            let f =
                registry.tails.get(name).ok_or_else(|| ExecError::TailUndefined(name.clone()))?;
            Ok(f(subtree_result, payload, iteration))
        }
    }
}

/// Context handed to a leaf executor.
pub struct LeafCall<'a> {
    pub leaf_id: &'a LeafId,
    pub function_id: &'a FunctionId,
    pub spec: Option<&'a FunctionSpec>,
    /// 1-based iteration of the innermost enclosing decorator, 0 outside.
    pub iteration: u32,
}

/// Resolves and runs the task behind a leaf.
pub trait LeafExecutor {
    fn execute(
        &mut self,
        call: &LeafCall<'_>,
        payload: &mut Payload,
        rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, ExecError>;
}

impl<F> LeafExecutor for F
where
    F: FnMut(&LeafCall<'_>, &mut Payload, &mut dyn RngCore) -> Result<ExecStatus, ExecError>,
{
    fn execute(
        &mut self,
        call: &LeafCall<'_>,
        payload: &mut Payload,
        rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, ExecError> {
        self(call, payload, rng)
    }
}

/// How a leaf appears in the log: completed with a status, or skipped
/// because a sibling short-circuited its composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafExecution {
    Completed(ExecStatus),
    Skipped,
}

/// One leaf event with its logical interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecRecord {
    pub seq: u64,
    pub leaf_id: LeafId,
    pub function_id: FunctionId,
    pub execution: LeafExecution,
    pub start: f64,
    pub end: f64,
    pub iteration: u32,
}

impl ExecRecord {
    pub fn is_skipped(&self) -> bool {
        matches!(self.execution, LeafExecution::Skipped)
    }

    pub fn status(&self) -> Option<ExecStatus> {
        match self.execution {
            LeafExecution::Completed(s) => Some(s),
            LeafExecution::Skipped => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionLog {
    pub records: Vec<ExecRecord>,
}

impl ExecutionLog {
    /// Non-skipped records for one leaf, in order.
    pub fn invocations<'a>(&'a self, leaf: &'a LeafId) -> impl Iterator<Item = &'a ExecRecord> {
        self.records.iter().filter(move |r| &r.leaf_id == leaf && !r.is_skipped())
    }

    pub fn invoked(&self, leaf: &LeafId) -> bool {
        self.invocations(leaf).next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub payload: Payload,
    pub log: ExecutionLog,
}

/// Tree interpreter configuration.
pub struct Interpreter<'r> {
    registry: &'r Registry,
    payload_limit: usize,
    max_iterations: u32,
}

impl<'r> Interpreter<'r> {
    pub fn new(registry: &'r Registry) -> Self {
        Interpreter { registry, payload_limit: DEFAULT_PAYLOAD_LIMIT, max_iterations: 100_000 }
    }

    pub fn payload_limit(mut self, limit: usize) -> Self {
        self.payload_limit = limit;
        self
    }

    pub fn max_iterations(mut self, n: u32) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn execute(
        &self,
        tree: &WorkflowDef,
        initial: Payload,
        executor: &mut dyn LeafExecutor,
        rng_seed: u64,
    ) -> Result<ExecOutcome, ExecError> {
        let mut payload = initial;
        self.check_limit(&payload)?;
        let mut ctx = Ctx {
            tree,
            executor,
            registry: self.registry,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            log: ExecutionLog::default(),
            seq: 0,
            iter_stack: Vec::new(),
            payload_limit: self.payload_limit,
            max_iterations: self.max_iterations,
        };
        let (status, _) = ctx.run(&tree.root, &mut payload, 0.0)?;
        Ok(ExecOutcome { status, payload, log: ctx.log })
    }
}

/// Runs a tree with the default registry and payload limit.
pub fn execute(
    tree: &WorkflowDef,
    initial: Payload,
    executor: &mut dyn LeafExecutor,
    rng_seed: u64,
) -> Result<ExecOutcome, ExecError> {
    let registry = Registry::new();
    Interpreter::new(&registry).execute(tree, initial, executor, rng_seed)
}

struct Ctx<'a> {
    tree: &'a WorkflowDef,
    executor: &'a mut dyn LeafExecutor,
    registry: &'a Registry,
    rng: ChaCha8Rng,
    log: ExecutionLog,
    seq: u64,
    iter_stack: Vec<u32>,
    payload_limit: usize,
    max_iterations: u32,
}

impl Ctx<'_> {
    fn run(
        &mut self,
        node: &BtNode,
        payload: &mut Payload,
        t0: f64,
    ) -> Result<(ExecStatus, f64), ExecError> {
        match node {
            BtNode::Leaf { leaf_id, function_id, .. } => {
                let duration = self.rng.random_range(0.5..1.5);
                let call = LeafCall {
                    leaf_id,
                    function_id,
                    spec: self.tree.function(function_id),
                    iteration: self.iter_stack.last().copied().unwrap_or(0),
                };
                let status = self.executor.execute(&call, payload, &mut self.rng)?;
                self.check_limit(payload)?;
                self.push(leaf_id, function_id, LeafExecution::Completed(status), t0, t0 + duration);
                Ok((status, t0 + duration))
            }
            BtNode::Sequence { children, .. } => {
                let mut t = t0;
                for (i, child) in children.iter().enumerate() {
                    let (status, end) = self.run(child, payload, t)?;
                    t = end;
                    if status == ExecStatus::Failure {
                        self.skip_all(&children[i + 1..], t);
                        return Ok((ExecStatus::Failure, t));
                    }
                }
                Ok((ExecStatus::Success, t))
            }
            BtNode::Fallback { children, .. } => {
                let mut t = t0;
                for (i, child) in children.iter().enumerate() {
                    let (status, end) = self.run(child, payload, t)?;
                    t = end;
                    if status == ExecStatus::Success {
                        self.skip_all(&children[i + 1..], t);
                        return Ok((ExecStatus::Success, t));
                    }
                }
                Ok((ExecStatus::Failure, t))
            }
            BtNode::Parallel { children, agg, .. } => {
                // Every child executes regardless of sibling outcomes; the
                // aggregate sees the full result vector.
                let snapshot = payload.clone();
                let mut statuses = Vec::with_capacity(children.len());
                let mut results = Vec::with_capacity(children.len());
                let mut end = t0;
                for child in children {
                    let mut child_payload = snapshot.clone();
                    let (status, child_end) = self.run(child, &mut child_payload, t0)?;
                    statuses.push(status);
                    results.push(child_payload);
                    end = end.max(child_end);
                }
                for child_payload in results {
                    payload.merge_from(child_payload);
                }
                self.check_limit(payload)?;
                let status = eval_agg(agg, &statuses, self.registry)?;
                Ok((status, end))
            }
            BtNode::Decorator { id, child, tail } => {
                let mut iteration = 1u32;
                let mut t = t0;
                loop {
                    self.iter_stack.push(iteration);
                    let result = self.run(child, payload, t);
                    self.iter_stack.pop();
                    let (status, end) = result?;
                    t = end;
                    match eval_tail(tail, status, payload, iteration, self.registry)? {
                        TailDecision::Return(s) => return Ok((s, t)),
                        TailDecision::Reenter => {
                            iteration += 1;
                            if iteration > self.max_iterations {
                                return Err(ExecError::IterationLimit(id.to_string()));
                            }
                        }
                    }
                }
            }
        }
    }

    fn skip_all(&mut self, subtrees: &[BtNode], t: f64) {
        for subtree in subtrees {
            for leaf in subtree.leaves() {
                if let BtNode::Leaf { leaf_id, function_id, .. } = leaf {
                    self.push(leaf_id, function_id, LeafExecution::Skipped, t, t);
                }
            }
        }
    }

    fn push(
        &mut self,
        leaf_id: &LeafId,
        function_id: &FunctionId,
        execution: LeafExecution,
        start: f64,
        end: f64,
    ) {
        self.log.records.push(ExecRecord {
            seq: self.seq,
            leaf_id: leaf_id.clone(),
            function_id: function_id.clone(),
            execution,
            start,
            end,
            iteration: self.iter_stack.last().copied().unwrap_or(0),
        });
        self.seq += 1;
    }

    fn check_limit(&self, payload: &Payload) -> Result<(), ExecError> {
        check_payload_limit(payload, self.payload_limit)
    }
}

impl Interpreter<'_> {
    fn check_limit(&self, payload: &Payload) -> Result<(), ExecError> {
        check_payload_limit(payload, self.payload_limit)
    }
}

fn check_payload_limit(payload: &Payload, limit: usize) -> Result<(), ExecError> {
    let size = payload.serialized_size();
    if size > limit {
        Err(ExecError::PayloadLimitExceeded { size, limit })
    } else {
        Ok(())
    }
}

/// Executor resolving the built-in `executor_kind` names. Anything it does
/// not recognize is an [`ExecError::UnresolvedExecutor`].
///
/// Kinds: `ok`, `fail`, `flaky` (config `fail_prob`), `payload_set`
/// (config `key`/`value`), `fsm_init`, `fsm_guard`, `fsm_update`,
/// `fsm_body` (config `outcomes`, comma separated), `mock` (alias of `ok`).
#[derive(Debug, Default, Clone)]
pub struct StandardExecutor;

impl LeafExecutor for StandardExecutor {
    fn execute(
        &mut self,
        call: &LeafCall<'_>,
        payload: &mut Payload,
        rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, ExecError> {
        let spec = match call.spec {
            Some(spec) => spec,
            None => return Err(ExecError::UnresolvedExecutor(call.function_id.clone())),
        };
        let cfg = |key: &str| spec.config.get(key).map(String::as_str);
        match spec.executor_kind.as_str() {
            "ok" | "mock" => Ok(ExecStatus::Success),
            "fail" => Ok(ExecStatus::Failure),
            "flaky" => {
                let p: f64 = cfg("fail_prob").and_then(|v| v.parse().ok()).unwrap_or(0.5);
                let draw = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                Ok(if draw < p { ExecStatus::Failure } else { ExecStatus::Success })
            }
            "payload_set" => {
                let key = cfg("key").unwrap_or("flag").to_string();
                let value = cfg("value").unwrap_or("true").to_string();
                match value.as_str() {
                    "true" => payload.set(key, true),
                    "false" => payload.set(key, false),
                    v => payload.set(key, v),
                }
                Ok(ExecStatus::Success)
            }
            "fsm_init" => {
                if !payload.contains(SEL_KEY) {
                    if let Some(state) = cfg("state") {
                        payload.set(SEL_KEY, state);
                    }
                }
                Ok(ExecStatus::Success)
            }
            "fsm_guard" => {
                let want = cfg("state").unwrap_or_default();
                let sel = payload.get(SEL_KEY).and_then(|v| v.as_str()).unwrap_or_default();
                Ok(if sel == want { ExecStatus::Success } else { ExecStatus::Failure })
            }
            "fsm_update" => {
                let outcome = match payload.get("OUTCOME").and_then(|v| v.as_str()) {
                    Some(o) => o.to_string(),
                    None => return Ok(ExecStatus::Failure),
                };
                let next = match cfg(&format!("on:{outcome}")) {
                    Some(n) => n.to_string(),
                    None => return Ok(ExecStatus::Failure),
                };
                payload.remove("OUTCOME");
                if next == "END" {
                    payload.set(END_KEY, true);
                } else {
                    payload.set(SEL_KEY, next.as_str());
                }
                Ok(ExecStatus::Success)
            }
            "fsm_body" => {
                let outcomes = cfg("outcomes").unwrap_or("ok");
                let all: Vec<&str> = outcomes.split(',').collect();
                let pick = (rng.next_u64() % all.len() as u64) as usize;
                payload.set("OUTCOME", all[pick]);
                Ok(ExecStatus::Success)
            }
            _ => Err(ExecError::UnresolvedExecutor(call.function_id.clone())),
        }
    }
}

/// Executor that always succeeds without touching the payload.
#[derive(Debug, Default, Clone)]
pub struct AlwaysSucceed;

impl LeafExecutor for AlwaysSucceed {
    fn execute(
        &mut self,
        _call: &LeafCall<'_>,
        _payload: &mut Payload,
        _rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, ExecError> {
        Ok(ExecStatus::Success)
    }
}

/// Executor failing each invocation independently with a fixed probability,
/// drawn from the interpreter rng so runs stay seed-deterministic.
#[derive(Debug, Clone)]
pub struct RandomOutcome {
    pub fail_prob: f64,
}

impl LeafExecutor for RandomOutcome {
    fn execute(
        &mut self,
        _call: &LeafCall<'_>,
        _payload: &mut Payload,
        rng: &mut dyn RngCore,
    ) -> Result<ExecStatus, ExecError> {
        let draw = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        Ok(if draw < self.fail_prob { ExecStatus::Failure } else { ExecStatus::Success })
    }
}
