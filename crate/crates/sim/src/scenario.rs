//! Simulation scenarios: in-memory form and the JSON file form bundling
//! references to workflow, partition, plan and cluster files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use beeflow_core::bt::{wire, WorkflowDef};
use beeflow_core::ids::{LeafId, NodeId};
use beeflow_core::partition::PartitionBundle;
use beeflow_core::place::{ClusterSpec, PlacementPlan};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Benchmark mode: workflows one at a time, or all clients at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    CoRun,
}

#[derive(Debug, Clone)]
pub struct ScenarioWorkflow {
    pub def: WorkflowDef,
    pub bundle: PartitionBundle,
}

/// Fully resolved simulation input.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub workflows: Vec<ScenarioWorkflow>,
    pub plan: PlacementPlan,
    pub cluster: ClusterSpec,
    pub mode: Mode,
    pub requests_per_workflow: u32,
    pub rng_seed: u64,
    pub composite_overhead_s: f64,
}

impl Scenario {
    /// Checks structural validity and resolves every leaf (schedulable and
    /// synthetic) to its node. Leaves must map via their subpath to
    /// exactly one node of the cluster.
    pub fn leaf_nodes(&self) -> Result<Vec<BTreeMap<LeafId, NodeId>>, SimError> {
        if self.requests_per_workflow < 1 {
            return Err(SimError::InvalidScenario("requests_per_workflow must be >= 1".into()));
        }
        if self.workflows.is_empty() {
            return Err(SimError::InvalidScenario("no workflows".into()));
        }
        self.cluster.validate().map_err(SimError::InvalidScenario)?;
        let mut out = Vec::new();
        for wf in &self.workflows {
            let mut map: BTreeMap<LeafId, NodeId> = BTreeMap::new();
            for sp in &wf.bundle.subpaths {
                let node = self
                    .plan
                    .node_of(&wf.bundle.workflow_id, &sp.subpath_id)
                    .ok_or_else(|| {
                        SimError::InvalidScenario(format!(
                            "plan does not cover subpath `{}/{}`",
                            wf.bundle.workflow_id, sp.subpath_id
                        ))
                    })?;
                if self.cluster.node(node).is_none() {
                    return Err(SimError::InvalidScenario(format!(
                        "plan assigns `{}` to unknown node `{node}`",
                        sp.subpath_id
                    )));
                }
                for leaf in sp.all_leaves() {
                    if map.insert(leaf.clone(), node.clone()).is_some() {
                        return Err(SimError::InvalidScenario(format!(
                            "leaf `{leaf}` appears in two subpaths"
                        )));
                    }
                }
            }
            for leaf in wf.def.leaf_ids() {
                if !map.contains_key(leaf) {
                    return Err(SimError::UnplacedLeaf(leaf.clone()));
                }
                if !wf.bundle.profiles.contains_key(leaf) {
                    return Err(SimError::InvalidScenario(format!(
                        "partition bundle lacks a profile for leaf `{leaf}`"
                    )));
                }
            }
            out.push(map);
        }
        Ok(out)
    }
}

/// File form: paths are resolved relative to the scenario file location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub workflows: Vec<ScenarioWorkflowRef>,
    pub plan: PathBuf,
    pub cluster: PathBuf,
    pub mode: Mode,
    pub requests_per_workflow: u32,
    pub seed: u64,
    #[serde(default)]
    pub composite_overhead_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioWorkflowRef {
    pub workflow: PathBuf,
    pub partition: PathBuf,
}

/// Loads and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_scenario(&file, base)
}

pub fn resolve_scenario(file: &ScenarioFile, base: &Path) -> Result<Scenario, SimError> {
    let mut workflows = Vec::new();
    for wf in &file.workflows {
        let def_text = std::fs::read_to_string(base.join(&wf.workflow))?;
        let def = wire::parse_workflow(&def_text)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let bundle_text = std::fs::read_to_string(base.join(&wf.partition))?;
        let bundle: PartitionBundle = serde_json::from_str(&bundle_text)?;
        if bundle.workflow_id != def.workflow_id {
            return Err(SimError::InvalidScenario(format!(
                "partition `{}` does not match workflow `{}`",
                bundle.workflow_id, def.workflow_id
            )));
        }
        workflows.push(ScenarioWorkflow { def, bundle });
    }
    let plan: PlacementPlan =
        serde_json::from_str(&std::fs::read_to_string(base.join(&file.plan))?)?;
    let cluster: ClusterSpec =
        serde_json::from_str(&std::fs::read_to_string(base.join(&file.cluster))?)?;
    Ok(Scenario {
        workflows,
        plan,
        cluster,
        mode: file.mode,
        requests_per_workflow: file.requests_per_workflow,
        rng_seed: file.seed,
        composite_overhead_s: file.composite_overhead_s,
    })
}
