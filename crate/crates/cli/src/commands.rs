//! Subcommand implementations. Each is a thin wrapper over the library:
//! file output is exactly the serialized library result.

use std::fmt;
use std::path::{Path, PathBuf};

use beeflow_core::bt::wire::{self, WorkflowFile};
use beeflow_core::bt::WorkflowDef;
use beeflow_core::convert::{dag_to_bt, fsm_to_bt, DagDef, FsmDef, FsmFile};
use beeflow_core::partition::{
    partition as partition_tree, PartitionBundle, PartitionPolicy,
};
use beeflow_core::place::{place as place_subpaths, ClusterSpec, WorkflowPlacement};
use beeflow_core::trace::{estimate, ingest, TraceRecord, TraceStatus, TraceStore};
use beeflow_sim::bench::{
    balance_suite, max_node_cost, place_with_strategy, ComparisonRow, PlacementStrategy, Verdict,
};
use beeflow_sim::scenario::{load_scenario, Mode, Scenario, ScenarioWorkflow};
use beeflow_sim::{export_gantt, export_node_tx, simulate as run_simulation, SimError, SimReport};

use crate::config::CliConfig;
use crate::{FromArg, ModeArg, PolicyArg};

#[derive(Debug)]
pub enum CliError {
    /// Unusable input: missing files, malformed JSON, bad flags. Exit 2.
    Usage(String),
    /// Valid input that violates the domain rules. Exit 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Usage(format!("cannot parse `{}`: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Domain(format!("serialize `{}`: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write `{}`: {e}", path.display())))
}

fn load_workflow(path: &Path) -> Result<WorkflowDef, CliError> {
    let file: WorkflowFile = parse_json(path)?;
    wire::compile(&file).map_err(|violations| {
        CliError::Domain(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"),
        )
    })
}

pub fn validate(workflow: &Path, config: &CliConfig) -> Result<(), CliError> {
    let def = load_workflow(workflow)?;
    if beeflow_core::data::check_payload(&beeflow_core::bt::Payload::new(), config.payload_limit)
        .is_err()
    {
        return Err(CliError::Domain(format!(
            "payload limit {} bytes cannot hold even an empty payload",
            config.payload_limit
        )));
    }
    println!(
        "{}: ok ({} leaves, payload limit {} bytes)",
        def.workflow_id,
        def.leaf_ids().len(),
        config.payload_limit
    );
    Ok(())
}

pub fn convert(from: FromArg, input: &Path, out: &Path) -> Result<(), CliError> {
    let def = match from {
        FromArg::Dag => {
            let dag: DagDef = parse_json(input)?;
            dag_to_bt(&dag).map_err(|e| CliError::Domain(e.to_string()))?
        }
        FromArg::Fsm => {
            let file: FsmFile = parse_json(input)?;
            fsm_to_bt(&FsmDef::from(&file)).map_err(|e| CliError::Domain(e.to_string()))?
        }
    };
    let json = wire::to_json(&def);
    // Conversion output must itself validate.
    wire::parse_workflow(&json)
        .map_err(|e| CliError::Domain(format!("converted tree is invalid: {e}")))?;
    std::fs::write(out, json + "\n")
        .map_err(|e| CliError::Usage(format!("cannot write `{}`: {e}", out.display())))?;
    Ok(())
}

fn policy_of(arg: PolicyArg) -> PartitionPolicy {
    match arg {
        PolicyArg::IoContention => PartitionPolicy::IoContentionAware,
        PolicyArg::LongestPath => PartitionPolicy::LongestPath,
    }
}

fn load_traces(path: &Path) -> Result<TraceStore, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot read `{}`: {e}", path.display())))?;
    ingest(file).map_err(|e| CliError::Usage(format!("traces `{}`: {e}", path.display())))
}

fn build_bundle(
    def: &WorkflowDef,
    store: &TraceStore,
    policy: &PartitionPolicy,
    config: &CliConfig,
) -> Result<PartitionBundle, CliError> {
    let est = estimate(store, def, &config.defaults);
    let result = partition_tree(def, &est.profiles, &est.loops, policy)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    PartitionBundle::new(def, &est, &result).map_err(|e| CliError::Domain(e.to_string()))
}

pub fn partition(
    workflow: &Path,
    traces: Option<&Path>,
    policy: PolicyArg,
    out: &Path,
    config: &CliConfig,
) -> Result<(), CliError> {
    let def = load_workflow(workflow)?;
    let store = match traces {
        Some(path) => load_traces(path)?,
        None => {
            eprintln!(
                "warning: no traces supplied, using default profiles for `{}`",
                def.workflow_id
            );
            TraceStore::new()
        }
    };
    let bundle = build_bundle(&def, &store, &policy_of(policy), config)?;
    write_json(out, &bundle)?;
    println!(
        "{}: {} subpaths in {} phases",
        bundle.workflow_id,
        bundle.subpaths.len(),
        bundle.residual_phases
    );
    Ok(())
}

pub fn place(partitions: &[PathBuf], cluster: &Path, out: &Path) -> Result<(), CliError> {
    let bundles: Vec<PartitionBundle> =
        partitions.iter().map(|p| parse_json(p)).collect::<Result<_, _>>()?;
    let cluster: ClusterSpec = parse_json(cluster)?;
    cluster.validate().map_err(CliError::Domain)?;
    let placements: Vec<WorkflowPlacement<'_>> =
        bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
    let plan =
        place_subpaths(&placements, &cluster).map_err(|e| CliError::Domain(e.to_string()))?;
    write_json(out, &plan)?;
    println!("placed {} subpaths, total cost {}", plan.assignments.len(), plan.total_cost);
    Ok(())
}

fn apply_overrides(scenario: &mut Scenario, mode: Option<ModeArg>, config: &CliConfig) {
    if let Some(mode) = mode {
        scenario.mode = match mode {
            ModeArg::Single => Mode::Single,
            ModeArg::CoRun => Mode::CoRun,
        };
    }
    if let Some(seed) = config.seed {
        scenario.rng_seed = seed;
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Io(_) | SimError::Json(_) => CliError::Usage(e.to_string()),
        _ => CliError::Domain(e.to_string()),
    }
}

fn write_report(report: &SimReport, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create `{}`: {e}", out.display())))?;
    write_json(&out.join("report.json"), report)?;
    export_gantt(report, &out.join("gantt.csv")).map_err(sim_error)?;
    export_node_tx(report, &out.join("node_tx.csv")).map_err(sim_error)?;
    Ok(())
}

fn print_latency_summary(report: &SimReport) {
    let mut by_wf: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for r in &report.per_request {
        by_wf.entry(&r.workflow_id).or_default().push(r.latency_s);
    }
    for (wf, mut lat) in by_wf {
        lat.sort_by(f64::total_cmp);
        let n = lat.len();
        let pct = |q: f64| lat[(((n as f64) * q).ceil() as usize).clamp(1, n) - 1];
        println!(
            "{wf}: n={n} min={:.6} median={:.6} p95={:.6} max={:.6}",
            lat[0],
            pct(0.5),
            pct(0.95),
            lat[n - 1]
        );
    }
}

pub fn simulate(
    scenario_path: &Path,
    mode: Option<ModeArg>,
    out: &Path,
    config: &CliConfig,
) -> Result<(), CliError> {
    let mut scenario = load_scenario(scenario_path).map_err(sim_error)?;
    apply_overrides(&mut scenario, mode, config);
    let report = run_simulation(&scenario).map_err(sim_error)?;
    write_report(&report, out)?;
    print_latency_summary(&report);
    Ok(())
}

/// Synthetic trace records reconstructed from a report's Gantt entries.
pub fn report_to_traces(report: &SimReport, scenario: &Scenario) -> Vec<TraceRecord> {
    let mut out = Vec::new();
    for e in &report.gantt {
        let profile = scenario
            .workflows
            .iter()
            .find(|w| w.def.workflow_id == e.workflow_id)
            .and_then(|w| w.bundle.profiles.get(&e.leaf_id));
        let (input_bytes, output_bytes) =
            profile.map(|p| (p.input_bytes, p.output_bytes)).unwrap_or((0.0, 0.0));
        out.push(TraceRecord {
            workflow_id: e.workflow_id.clone(),
            request_id: format!("r{}", e.request_id),
            leaf_id: e.leaf_id.clone(),
            t_init_start: e.init.start,
            t_input_start: e.input.start,
            t_exec_start: e.exec.start,
            t_output_start: e.output.start,
            t_end: e.output.end,
            input_bytes,
            output_bytes,
            status: match e.status {
                beeflow_core::bt::ExecStatus::Success => TraceStatus::Success,
                beeflow_core::bt::ExecStatus::Failure => TraceStatus::Failure,
            },
            decorator_iteration: e.iteration,
        });
    }
    out
}

pub fn refresh(
    scenario_path: &Path,
    traces: &Path,
    policy: PolicyArg,
    out: &Path,
    config: &CliConfig,
) -> Result<(), CliError> {
    let store = load_traces(traces)?;
    let mut scenario = load_scenario(scenario_path).map_err(sim_error)?;
    apply_overrides(&mut scenario, None, config);
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create `{}`: {e}", out.display())))?;

    // Re-estimate from the supplied traces, then re-partition and
    // re-place the scenario's workflows.
    let mut refreshed = Vec::new();
    for wf in &scenario.workflows {
        let bundle = build_bundle(&wf.def, &store, &policy_of(policy), config)?;
        refreshed.push(ScenarioWorkflow { def: wf.def.clone(), bundle });
    }
    let bundles: Vec<&PartitionBundle> = refreshed.iter().map(|w| &w.bundle).collect();
    let placements: Vec<WorkflowPlacement<'_>> =
        bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
    let plan = place_subpaths(&placements, &scenario.cluster)
        .map_err(|e| CliError::Domain(e.to_string()))?;

    for wf in &refreshed {
        write_json(&out.join(format!("{}.partition.json", wf.bundle.workflow_id)), &wf.bundle)?;
    }
    write_json(&out.join("plan.json"), &plan)?;

    // Simulate the updated deployment and emit the next batch's traces.
    let updated = Scenario {
        workflows: refreshed,
        plan,
        cluster: scenario.cluster.clone(),
        mode: scenario.mode,
        requests_per_workflow: scenario.requests_per_workflow,
        rng_seed: scenario.rng_seed,
        composite_overhead_s: scenario.composite_overhead_s,
    };
    let report = run_simulation(&updated).map_err(sim_error)?;
    let records = report_to_traces(&report, &updated);
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).map_err(|e| CliError::Domain(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(out.join("traces.jsonl"), text)
        .map_err(|e| CliError::Usage(format!("cannot write traces: {e}")))?;
    write_report(&report, &out.join("report"))?;
    println!("refreshed {} workflows", updated.workflows.len());
    Ok(())
}

/// One comparison scenario of the benchmark suite, defined over the
/// bundled asset files.
struct BenchCase {
    name: &'static str,
    workflows: &'static [(&'static str, Option<&'static str>)],
    cluster: &'static str,
    mode: Mode,
    requests: u32,
    seed: u64,
}

const DEFAULT_SUITE: &[BenchCase] = &[
    BenchCase {
        name: "io_heavy",
        workflows: &[
            ("workflows/cyc.json", Some("traces/cyc.jsonl")),
            ("workflows/wc.json", Some("traces/wc.jsonl")),
        ],
        cluster: "clusters/edge3.json",
        mode: Mode::CoRun,
        requests: 3,
        seed: 42,
    },
    BenchCase {
        name: "t1_single",
        workflows: &[("workflows/t1.json", None)],
        cluster: "clusters/edge3.json",
        mode: Mode::Single,
        requests: 5,
        seed: 42,
    },
    BenchCase {
        name: "mixed_corun",
        workflows: &[
            ("workflows/vid.json", Some("traces/vid.jsonl")),
            ("workflows/fp.json", Some("traces/fp.jsonl")),
            ("workflows/ir.json", Some("traces/ir.jsonl")),
        ],
        cluster: "clusters/edge3.json",
        mode: Mode::CoRun,
        requests: 3,
        seed: 42,
    },
];

/// Max/min per-node transmitted bytes; infinite when some node moved
/// nothing.
pub fn tx_ratio(report: &SimReport, cluster: &ClusterSpec) -> f64 {
    let bytes = report.node_bytes();
    let per_node: Vec<f64> = cluster
        .nodes
        .iter()
        .map(|n| bytes.get(&n.node_id).copied().unwrap_or(0.0))
        .collect();
    let max = per_node.iter().copied().fold(0.0, f64::max);
    let min = per_node.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn bench(suite: &str, assets: &Path, out: &Path, config: &CliConfig) -> Result<(), CliError> {
    if suite != "default" {
        return Err(CliError::Usage(format!("unknown suite `{suite}`")));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create `{}`: {e}", out.display())))?;

    let mut rows: Vec<ComparisonRow> = Vec::new();
    let mut io_heavy: std::collections::BTreeMap<&str, (f64, f64)> = Default::default();

    for case in DEFAULT_SUITE {
        let cluster: ClusterSpec = parse_json(&assets.join(case.cluster))?;
        cluster.validate().map_err(CliError::Domain)?;
        let mut workflows = Vec::new();
        for (wf_path, traces_path) in case.workflows {
            let def = load_workflow(&assets.join(wf_path))?;
            let store = match traces_path {
                Some(p) => load_traces(&assets.join(p))?,
                None => TraceStore::new(),
            };
            let bundle =
                build_bundle(&def, &store, &PartitionPolicy::IoContentionAware, config)?;
            workflows.push(ScenarioWorkflow { def, bundle });
        }
        let bundles: Vec<&PartitionBundle> = workflows.iter().map(|w| &w.bundle).collect();
        let placements: Vec<WorkflowPlacement<'_>> =
            bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
        for strategy in PlacementStrategy::ALL {
            let plan = place_with_strategy(strategy, &placements, &cluster, case.seed)
                .map_err(|e| CliError::Domain(e.to_string()))?;
            let scenario = Scenario {
                workflows: workflows.clone(),
                plan: plan.clone(),
                cluster: cluster.clone(),
                mode: case.mode,
                requests_per_workflow: case.requests,
                rng_seed: config.seed.unwrap_or(case.seed),
                composite_overhead_s: 0.0,
            };
            let report = run_simulation(&scenario).map_err(sim_error)?;
            let mut latencies: Vec<f64> =
                report.per_request.iter().map(|r| r.latency_s).collect();
            latencies.sort_by(f64::total_cmp);
            let median = latencies[latencies.len() / 2];
            let ratio = tx_ratio(&report, &cluster);
            if case.name == "io_heavy" {
                io_heavy.insert(strategy.name(), (plan.total_cost, ratio));
            }
            rows.push(ComparisonRow {
                scenario: case.name.to_string(),
                policy: strategy.name().to_string(),
                median_latency_s: median,
                max_node_cost: max_node_cost(&plan),
                tx_ratio: ratio,
            });
        }
    }

    let (balance_wins, balance_worst) = balance_suite(100, 1000);
    let colocate_cost = io_heavy.get("colocate-all").map(|v| v.0).unwrap_or(f64::NAN);
    let others_max = io_heavy
        .iter()
        .filter(|(k, _)| **k != "colocate-all")
        .map(|(_, v)| v.0)
        .fold(0.0, f64::max);
    let aware_ratio = io_heavy.get("contention-aware").map(|v| v.1).unwrap_or(f64::NAN);
    let colocate_ratio = io_heavy.get("colocate-all").map(|v| v.1).unwrap_or(f64::NAN);
    let verdict = Verdict {
        balance_wins,
        balance_total: 100,
        balance_worst_ratio: balance_worst,
        balance_ok: balance_wins >= 90 && balance_worst <= 1.10,
        colocate_strictly_max_penalty: colocate_cost > others_max,
        tx_ratio_aware: aware_ratio,
        tx_ratio_colocate: colocate_ratio,
        tx_improvement_ok: aware_ratio <= 0.5 * colocate_ratio,
        pass: false,
    };
    let verdict = Verdict {
        pass: verdict.balance_ok
            && verdict.colocate_strictly_max_penalty
            && verdict.tx_improvement_ok,
        ..verdict
    };

    let mut csv = String::from("scenario,policy,median_latency_s,max_node_cost,tx_max_min_ratio\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scenario, r.policy, r.median_latency_s, r.max_node_cost, r.tx_ratio
        ));
    }
    std::fs::write(out.join("comparison.csv"), csv)
        .map_err(|e| CliError::Usage(format!("cannot write comparison: {e}")))?;
    write_json(&out.join("verdict.json"), &verdict)?;
    println!(
        "bench: balance {}/{} (worst {:.3}), colocate-max {}, tx {:.2} vs {:.2} -> {}",
        verdict.balance_wins,
        verdict.balance_total,
        verdict.balance_worst_ratio,
        verdict.colocate_strictly_max_penalty,
        verdict.tx_ratio_aware,
        verdict.tx_ratio_colocate,
        if verdict.pass { "pass" } else { "FAIL" }
    );
    Ok(())
}
