//! Per-request control-flow expansion.
//!
//! Leaf outcomes and decorator iterations are sampled up front from the
//! profiles, which resolves a request's control flow into a DAG of leaf
//! instances with precedence edges; the event engine then only has to
//! execute that DAG. Skipped subtrees produce no instances.

use beeflow_core::bt::{eval_agg, BtNode, ExecStatus, Registry, TailSpec, WorkflowDef};
use beeflow_core::ids::LeafId;
use beeflow_core::partition::PartitionBundle;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::SimError;

const LOOP_CAP: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct Instance {
    pub leaf_id: LeafId,
    pub iteration: u32,
    pub status: ExecStatus,
    pub preds: Vec<usize>,
    pub succs: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RequestFlow {
    pub instances: Vec<Instance>,
}

struct Frag {
    sources: Vec<usize>,
    sinks: Vec<usize>,
    status: ExecStatus,
}

struct FlowCtx<'a> {
    bundle: &'a PartitionBundle,
    registry: Registry,
    rng: &'a mut ChaCha8Rng,
    instances: Vec<Instance>,
    iter_stack: Vec<u32>,
}

/// Expands one request of `def` into an instance DAG using outcomes
/// sampled from the bundle's profiles.
pub fn expand_request(
    def: &WorkflowDef,
    bundle: &PartitionBundle,
    rng: &mut ChaCha8Rng,
) -> Result<RequestFlow, SimError> {
    let mut ctx = FlowCtx {
        bundle,
        registry: Registry::new(),
        rng,
        instances: Vec::new(),
        iter_stack: Vec::new(),
    };
    ctx.expand(&def.root)?;
    Ok(RequestFlow { instances: ctx.instances })
}

impl FlowCtx<'_> {
    fn expand(&mut self, node: &BtNode) -> Result<Frag, SimError> {
        match node {
            BtNode::Leaf { leaf_id, .. } => {
                let failure_prob =
                    self.bundle.profiles.get(leaf_id).map(|p| p.failure_prob).unwrap_or(0.0);
                let status = if failure_prob > 0.0 && self.rng.random_bool(failure_prob.min(1.0))
                {
                    ExecStatus::Failure
                } else {
                    ExecStatus::Success
                };
                let idx = self.instances.len();
                self.instances.push(Instance {
                    leaf_id: leaf_id.clone(),
                    iteration: self.iter_stack.last().copied().unwrap_or(0),
                    status,
                    preds: Vec::new(),
                    succs: Vec::new(),
                });
                Ok(Frag { sources: vec![idx], sinks: vec![idx], status })
            }
            BtNode::Sequence { children, .. } => {
                let mut chained: Option<Frag> = None;
                for child in children {
                    let frag = self.expand(child)?;
                    let failed = frag.status == ExecStatus::Failure;
                    chained = Some(match chained {
                        None => frag,
                        Some(prev) => self.chain(prev, frag),
                    });
                    if failed {
                        break;
                    }
                }
                Ok(chained.expect("sequence has children"))
            }
            BtNode::Fallback { children, .. } => {
                let mut chained: Option<Frag> = None;
                for child in children {
                    let frag = self.expand(child)?;
                    let succeeded = frag.status == ExecStatus::Success;
                    chained = Some(match chained {
                        None => frag,
                        Some(prev) => self.chain(prev, frag),
                    });
                    if succeeded {
                        break;
                    }
                }
                Ok(chained.expect("fallback has children"))
            }
            BtNode::Parallel { children, agg, .. } => {
                let mut sources = Vec::new();
                let mut sinks = Vec::new();
                let mut statuses = Vec::new();
                for child in children {
                    let frag = self.expand(child)?;
                    sources.extend(frag.sources);
                    sinks.extend(frag.sinks);
                    statuses.push(frag.status);
                }
                let status = eval_agg(agg, &statuses, &self.registry)
                    .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
                Ok(Frag { sources, sinks, status })
            }
            BtNode::Decorator { id, child, tail } => {
                // Loop iteration counts are not payload-driven here; the
                // total is sampled once per decorator entry from the loop
                // profile.
                let loop_total = match tail {
                    TailSpec::LoopTillEnd { .. } => {
                        let expected = self
                            .bundle
                            .loops
                            .get(id)
                            .map(|l| l.expected_iterations)
                            .unwrap_or(1.0);
                        Some(sample_iterations(self.rng, expected))
                    }
                    TailSpec::Named { name } => {
                        return Err(SimError::InvalidScenario(format!(
                            "cannot sample custom tail `{name}`"
                        )))
                    }
                    _ => None,
                };
                let mut iteration = 1u32;
                let mut frag: Option<Frag> = None;
                loop {
                    self.iter_stack.push(iteration);
                    let pass = self.expand(child);
                    self.iter_stack.pop();
                    let pass = pass?;
                    let status = pass.status;
                    frag = Some(match frag {
                        None => pass,
                        Some(prev) => self.chain(prev, pass),
                    });
                    let reenter = match tail {
                        TailSpec::Once | TailSpec::Negate => false,
                        TailSpec::Retry { max_n } => {
                            status == ExecStatus::Failure && iteration < *max_n
                        }
                        TailSpec::LoopTillEnd { .. } => iteration < loop_total.unwrap(),
                        TailSpec::Named { .. } => unreachable!("rejected above"),
                    };
                    if !reenter {
                        let mut f = frag.unwrap();
                        f.status = match tail {
                            TailSpec::Negate => status.invert(),
                            _ => status,
                        };
                        return Ok(f);
                    }
                    iteration += 1;
                }
            }
        }
    }

    /// Serial composition: every sink of `a` precedes every source of `b`.
    fn chain(&mut self, a: Frag, b: Frag) -> Frag {
        for &sink in &a.sinks {
            for &source in &b.sources {
                self.instances[sink].succs.push(source);
                self.instances[source].preds.push(sink);
            }
        }
        Frag { sources: a.sources, sinks: b.sinks, status: b.status }
    }
}

/// Geometric iteration count with the given mean (p = 1/mean), capped.
fn sample_iterations(rng: &mut ChaCha8Rng, expected: f64) -> u32 {
    if expected <= 1.0 {
        return 1;
    }
    let p = 1.0 / expected;
    let u: f64 = rng.random_range(0.0..1.0);
    let k = 1.0 + (1.0 - u).ln() / (1.0 - p).ln();
    (k.floor() as u64).clamp(1, LOOP_CAP) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use beeflow_core::bt::{fallback, leaf, parallel, sequence, AggSpec, FunctionSpec};
    use beeflow_core::partition::{partition, PartitionBundle, PartitionPolicy};
    use beeflow_core::trace::{estimate, ProfileDefaults, TraceStore};
    use rand::SeedableRng;

    fn bundle_for(def: &WorkflowDef) -> PartitionBundle {
        let est = estimate(&TraceStore::new(), def, &ProfileDefaults::default());
        let result =
            partition(def, &est.profiles, &est.loops, &PartitionPolicy::IoContentionAware)
                .unwrap();
        PartitionBundle::new(def, &est, &result).unwrap()
    }

    #[test]
    fn sequence_chains_instances() {
        let def = WorkflowDef::new(
            "w",
            sequence(vec![leaf("a"), leaf("b")]),
            vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
        );
        let bundle = bundle_for(&def);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = expand_request(&def, &bundle, &mut rng).unwrap();
        assert_eq!(flow.instances.len(), 2);
        assert_eq!(flow.instances[1].preds, vec![0]);
    }

    #[test]
    fn parallel_instances_share_no_edges() {
        let def = WorkflowDef::new(
            "w",
            parallel(AggSpec::AllSucceed, vec![leaf("a"), leaf("b")]),
            vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
        );
        let bundle = bundle_for(&def);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = expand_request(&def, &bundle, &mut rng).unwrap();
        assert!(flow.instances.iter().all(|i| i.preds.is_empty()));
    }

    #[test]
    fn failed_fallback_child_leads_to_next() {
        let def = WorkflowDef::new(
            "w",
            fallback(vec![leaf("a"), leaf("b")]),
            vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
        );
        let mut bundle = bundle_for(&def);
        bundle.profiles.get_mut(&LeafId::new("a")).unwrap().failure_prob = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = expand_request(&def, &bundle, &mut rng).unwrap();
        assert_eq!(flow.instances.len(), 2);
        assert_eq!(flow.instances[0].status, ExecStatus::Failure);
        assert_eq!(flow.instances[1].preds, vec![0]);
    }

    #[test]
    fn fallback_success_skips_rest() {
        let def = WorkflowDef::new(
            "w",
            fallback(vec![leaf("a"), leaf("b")]),
            vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
        );
        let bundle = bundle_for(&def);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = expand_request(&def, &bundle, &mut rng).unwrap();
        assert_eq!(flow.instances.len(), 1);
    }
}
