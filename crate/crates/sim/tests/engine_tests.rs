//! Simulator behavior: fair-share transfers against the closed form,
//! byte conservation, capacity caps, warm starts, windowed transmission
//! series, Gantt export round-trips, and seed determinism.

use std::collections::BTreeMap;

use beeflow_core::bt::{leaf, parallel, sequence, AggSpec, FunctionSpec, WorkflowDef};
use beeflow_core::ids::{LeafId, NodeId};
use beeflow_core::partition::{partition, PartitionBundle, PartitionPolicy};
use beeflow_core::path::same_prefix;
use beeflow_core::place::{place, ClusterSpec, NodeSpec, WorkflowPlacement};
use beeflow_core::trace::{estimate, EstimateOutput, ProfileDefaults, TraceStore};
use beeflow_sim::{
    export_gantt, node_tx_series, parse_gantt, simulate, Mode, Scenario, ScenarioWorkflow,
    SimReport,
};

const MIB: f64 = 1024.0 * 1024.0;

fn defaults_zero_io() -> ProfileDefaults {
    ProfileDefaults {
        init_s: 0.0,
        input_s: 0.0,
        exec_s: 1.0,
        output_s: 0.0,
        input_bytes: 0.0,
        output_bytes: 0.0,
        ..ProfileDefaults::default()
    }
}

fn one_node_cluster(bw: f64) -> ClusterSpec {
    ClusterSpec {
        nodes: vec![NodeSpec {
            node_id: NodeId::new("n1"),
            cpu_cores: 4.0,
            mem_bytes: 4 * 1024 * 1024 * 1024,
            io_bw_bps: bw,
        }],
    }
}

fn scenario_for(
    def: WorkflowDef,
    est: &EstimateOutput,
    cluster: ClusterSpec,
    requests: u32,
    mode: Mode,
) -> Scenario {
    let result =
        partition(&def, &est.profiles, &est.loops, &PartitionPolicy::IoContentionAware).unwrap();
    let bundle = PartitionBundle::new(&def, est, &result).unwrap();
    let placements = [WorkflowPlacement { bundle: &bundle }];
    let plan = place(&placements, &cluster).unwrap();
    Scenario {
        workflows: vec![ScenarioWorkflow { def, bundle }],
        plan,
        cluster,
        mode,
        requests_per_workflow: requests,
        rng_seed: 42,
        composite_overhead_s: 0.0,
    }
}

fn uniform_estimates(def: &WorkflowDef, defaults: &ProfileDefaults) -> EstimateOutput {
    estimate(&TraceStore::new(), def, defaults)
}

#[test]
fn single_leaf_unit_exec_yields_unit_latencies() {
    let def =
        WorkflowDef::new("w", leaf("only"), vec![FunctionSpec::new("only", "mock")]);
    let est = uniform_estimates(&def, &defaults_zero_io());
    let scenario = scenario_for(def, &est, one_node_cluster(1e8), 3, Mode::Single);
    let report = simulate(&scenario).unwrap();
    assert_eq!(report.per_request.len(), 3);
    for r in &report.per_request {
        assert!((r.latency_s - 1.0).abs() < 1e-12, "{}", r.latency_s);
    }
}

#[test]
fn concurrent_outputs_share_bandwidth_fairly() {
    // Two leaves each putting 10 MB through a 10 MB/s node at the same
    // time: processor sharing finishes both at t=2.
    let def = WorkflowDef::new(
        "w",
        parallel(AggSpec::AllSucceed, vec![leaf("a"), leaf("b")]),
        vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
    );
    let mut est = uniform_estimates(&def, &defaults_zero_io());
    for p in est.profiles.values_mut() {
        p.exec_delay_s = 0.0;
        p.output_bytes = 10_000_000.0;
    }
    let scenario = scenario_for(def, &est, one_node_cluster(10_000_000.0), 1, Mode::Single);
    let report = simulate(&scenario).unwrap();
    for t in report.transfers.iter().filter(|t| t.bytes > 0.0) {
        assert!((t.end - 2.0).abs() < 1e-9, "transfer ended at {}", t.end);
    }
    assert!((report.per_request[0].latency_s - 2.0).abs() < 1e-9);
}

#[test]
fn warm_start_makes_later_requests_no_slower() {
    let def = WorkflowDef::new(
        "w",
        sequence(vec![leaf("a"), leaf("b")]),
        vec![FunctionSpec::new("a", "mock"), FunctionSpec::new("b", "mock")],
    );
    let mut defaults = defaults_zero_io();
    defaults.init_s = 0.7;
    let est = uniform_estimates(&def, &defaults);
    let scenario = scenario_for(def, &est, one_node_cluster(1e8), 3, Mode::Single);
    let report = simulate(&scenario).unwrap();
    let lat: Vec<f64> = report.per_request.iter().map(|r| r.latency_s).collect();
    assert!(lat[1] <= lat[0]);
    assert!(lat[2] <= lat[0]);
    assert!((lat[0] - lat[1] - 2.0 * 0.7).abs() < 1e-9, "init paid once per leaf");
}

fn t1_def() -> WorkflowDef {
    let tree = sequence(vec![
        leaf("f1"),
        parallel(
            AggSpec::AllSucceed,
            vec![
                sequence(vec![leaf("f2"), leaf("f8")]),
                sequence(vec![leaf("f5"), leaf("f6"), leaf("f7")]),
            ],
        ),
        beeflow_core::bt::fallback(vec![leaf("f3"), leaf("f4")]),
    ]);
    let funcs = ["f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8"]
        .iter()
        .map(|i| FunctionSpec::new(*i, "mock"))
        .collect();
    WorkflowDef::new("t1", tree, funcs)
}

fn three_node_cluster() -> ClusterSpec {
    ClusterSpec {
        nodes: (1..=3)
            .map(|i| NodeSpec {
                node_id: NodeId::new(format!("n{i}")),
                cpu_cores: 8.0,
                mem_bytes: 4 * 1024 * 1024 * 1024,
                io_bw_bps: 1e8,
            })
            .collect(),
    }
}

fn conservation_check(report: &SimReport, scenario: &Scenario) {
    // Executed instances times their profile bytes equal the ledger total.
    let mut expected = 0.0;
    for e in &report.gantt {
        let bundle = &scenario
            .workflows
            .iter()
            .find(|w| w.def.workflow_id == e.workflow_id)
            .unwrap()
            .bundle;
        let p = &bundle.profiles[&e.leaf_id];
        expected += p.input_bytes + p.output_bytes;
    }
    assert_eq!(report.total_transmitted_bytes(), expected);
}

#[test]
fn t1_on_three_nodes_conserves_bytes_per_node() {
    let def = t1_def();
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def, &est, three_node_cluster(), 2, Mode::Single);
    let report = simulate(&scenario).unwrap();
    conservation_check(&report, &scenario);

    // Per-node totals match the per-leaf byte sums of the leaves placed
    // there.
    let wf = &scenario.workflows[0];
    let leaf_nodes = scenario.leaf_nodes().unwrap();
    let mut want: BTreeMap<NodeId, f64> = BTreeMap::new();
    for e in &report.gantt {
        let node = leaf_nodes[0][&e.leaf_id].clone();
        let p = &wf.bundle.profiles[&e.leaf_id];
        *want.entry(node).or_insert(0.0) += p.input_bytes + p.output_bytes;
    }
    assert_eq!(report.node_bytes(), want);
}

#[test]
fn bandwidth_and_core_caps_hold_on_the_event_log() {
    let def = t1_def();
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def, &est, three_node_cluster(), 3, Mode::Single);
    let report = simulate(&scenario).unwrap();

    for seg in &report.tx_segments {
        let bw = scenario.cluster.node(&seg.node_id).unwrap().io_bw_bps;
        assert!(seg.rate_total <= bw + 1e-9);
        assert!(seg.transfers >= 1);
    }
    // Sweep exec periods per node against the core capacity.
    let leaf_nodes = scenario.leaf_nodes().unwrap();
    for node in &scenario.cluster.nodes {
        let mut events: Vec<(f64, f64)> = Vec::new();
        for e in &report.gantt {
            if leaf_nodes[0][&e.leaf_id] != node.node_id || e.exec.len() == 0.0 {
                continue;
            }
            let cores = scenario.workflows[0]
                .bundle
                .function_of(&e.leaf_id)
                .unwrap()
                .cpu_request_cores;
            events.push((e.exec.start, cores));
            events.push((e.exec.end, -cores));
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut load = 0.0f64;
        for (_, delta) in events {
            load += delta;
            assert!(load <= node.cpu_cores + 1e-9);
        }
    }
}

#[test]
fn reports_are_seed_deterministic() {
    let def = t1_def();
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def, &est, three_node_cluster(), 3, Mode::Single);
    let a = serde_json::to_string(&simulate(&scenario).unwrap()).unwrap();
    let b = serde_json::to_string(&simulate(&scenario).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn windowed_series_places_bytes_in_the_right_window() {
    // A single 10 MB output finishing inside the first window reads
    // 2 MB/s at a 5 s window.
    let def = WorkflowDef::new("w", leaf("a"), vec![FunctionSpec::new("a", "mock")]);
    let mut est = uniform_estimates(&def, &defaults_zero_io());
    est.profiles.get_mut(&LeafId::new("a")).unwrap().output_bytes = 10.0 * MIB;
    est.profiles.get_mut(&LeafId::new("a")).unwrap().exec_delay_s = 0.5;
    let scenario = scenario_for(def, &est, one_node_cluster(100.0 * MIB), 1, Mode::Single);
    let report = simulate(&scenario).unwrap();
    let series = node_tx_series(&report, 5.0);
    let n1 = &series[&NodeId::new("n1")];
    assert!((n1[0].bytes_per_s - 10.0 * MIB / 5.0).abs() < 1.0);

    // Window-bucketing conserves bytes for any window size.
    for window in [0.5, 2.0, 5.0] {
        let series = node_tx_series(&report, window);
        let total: f64 = series
            .values()
            .flat_map(|pts| pts.iter().map(|p| p.bytes_per_s * window))
            .sum();
        assert!((total - 10.0 * MIB).abs() / (10.0 * MIB) < 1e-9, "window {window}");
    }
}

#[test]
fn zero_io_scenario_has_all_zero_series() {
    let def = WorkflowDef::new("w", leaf("a"), vec![FunctionSpec::new("a", "mock")]);
    let est = uniform_estimates(&def, &defaults_zero_io());
    let scenario = scenario_for(def, &est, one_node_cluster(1e8), 2, Mode::Single);
    let report = simulate(&scenario).unwrap();
    assert!(report.transfers.is_empty());
    // The idle node still appears, with a zero series over the span.
    let series = &report.node_tx[&NodeId::new("n1")];
    assert!(!series.is_empty());
    assert!(series.iter().all(|p| p.bytes_per_s == 0.0));
}

#[test]
fn gantt_csv_round_trips() {
    let def = t1_def();
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def, &est, three_node_cluster(), 1, Mode::Single);
    let report = simulate(&scenario).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gantt.csv");
    export_gantt(&report, &path).unwrap();
    let rows = parse_gantt(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), report.gantt.len() * 4);
    for (row, entry) in rows.chunks(4).zip(report.gantt.iter()) {
        assert_eq!(row[0].2, entry.leaf_id.to_string());
        assert_eq!(row[0].4, "init");
        assert_eq!(row[0].5, entry.init.start);
        assert_eq!(row[3].4, "output");
        assert_eq!(row[3].6, entry.output.end);
    }

    // Empty report writes a header-only file.
    let empty = SimReport {
        per_request: vec![],
        gantt: vec![],
        node_tx: BTreeMap::new(),
        transfers: vec![],
        tx_segments: vec![],
        instant_tx: vec![],
        span_s: 0.0,
    };
    let path = dir.path().join("empty.csv");
    export_gantt(&empty, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn same_prefix_leaves_become_ready_simultaneously() {
    // Zero-overhead simulation: structurally equal prefixes mean equal
    // first ready times (the init period start of request 0).
    let def = WorkflowDef::new(
        "w",
        sequence(vec![
            leaf("head"),
            parallel(AggSpec::AllSucceed, vec![leaf("x"), leaf("y"), leaf("z")]),
        ]),
        ["head", "x", "y", "z"].iter().map(|i| FunctionSpec::new(*i, "mock")).collect(),
    );
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def.clone(), &est, three_node_cluster(), 1, Mode::Single);
    let report = simulate(&scenario).unwrap();
    let ready = |l: &str| {
        report
            .gantt
            .iter()
            .find(|e| e.leaf_id.as_str() == l && e.request_id == 0)
            .unwrap()
            .init
            .start
    };
    for (a, b) in [("x", "y"), ("y", "z")] {
        assert!(same_prefix(&def, &LeafId::new(a), &LeafId::new(b)).unwrap());
        assert!((ready(a) - ready(b)).abs() <= 1e-12);
    }
}

#[test]
fn sampled_loop_iterations_match_the_expected_span() {
    // A loop decorator with expected 2.5 iterations over a 1-second leaf:
    // the Monte-Carlo mean latency must sit within 5% of 2.5 s.
    use beeflow_core::bt::{decorator, TailSpec};
    let def = WorkflowDef::new(
        "w",
        decorator(TailSpec::LoopTillEnd { flag_key: "END".into() }, leaf("f")),
        vec![FunctionSpec::new("f", "mock")],
    );
    let mut est = uniform_estimates(&def, &defaults_zero_io());
    let dec = est.loops.keys().next().unwrap().clone();
    est.loops.get_mut(&dec).unwrap().expected_iterations = 2.5;
    let timeline = beeflow_core::trace::align(&def, &est.profiles, &est.loops).unwrap();
    assert!((timeline.span() - 2.5).abs() < 1e-12);

    let scenario = scenario_for(def, &est, one_node_cluster(1e8), 4000, Mode::Single);
    let report = simulate(&scenario).unwrap();
    let mean: f64 = report.per_request.iter().map(|r| r.latency_s).sum::<f64>()
        / report.per_request.len() as f64;
    assert!(
        (mean - 2.5).abs() / 2.5 < 0.05,
        "Monte-Carlo mean {mean} not within 5% of the expected 2.5"
    );
}

#[test]
fn randomized_pipelines_conserve_bytes_and_respect_caps() {
    // Fuzz the whole pipeline: random trees with random integral byte
    // profiles, loops and failure rates, partitioned, placed and
    // co-run-simulated; conservation, caps, period ordering and seed
    // determinism must hold on every instance.
    use beeflow_testkit as testkit;
    use rand::Rng;

    let mut rng = testkit::rng(0xF00D);
    for case in 0..25u64 {
        let mut workflows = Vec::new();
        let mut bundles = Vec::new();
        for w in 0..2 {
            let mut def = testkit::random_tree(&mut rng, 14, 4);
            def = WorkflowDef::new(
                format!("wf{case}_{w}"),
                def.root.clone(),
                def.functions().values().cloned().collect(),
            );
            let mut est = estimate(&TraceStore::new(), &def, &ProfileDefaults::default());
            for p in est.profiles.values_mut() {
                p.init_delay_s = rng.random_range(0.0..0.5);
                p.exec_delay_s = rng.random_range(0.1..2.0);
                p.input_bytes = rng.random_range(0..32) as f64 * 1024.0 * 1024.0;
                p.output_bytes = rng.random_range(0..32) as f64 * 1024.0 * 1024.0;
                p.failure_prob = if rng.random_bool(0.3) { rng.random_range(0.0..0.6) } else { 0.0 };
            }
            for l in est.loops.values_mut() {
                l.expected_iterations = rng.random_range(1.0..3.0);
            }
            let result =
                partition(&def, &est.profiles, &est.loops, &PartitionPolicy::IoContentionAware)
                    .unwrap();
            bundles.push(PartitionBundle::new(&def, &est, &result).unwrap());
            workflows.push(def);
        }
        let cluster = ClusterSpec {
            nodes: (0..rng.random_range(2..5))
                .map(|i| NodeSpec {
                    node_id: NodeId::new(format!("n{i}")),
                    cpu_cores: 32.0,
                    mem_bytes: 32 * 1024 * 1024 * 1024,
                    io_bw_bps: 50e6,
                })
                .collect(),
        };
        let placements: Vec<WorkflowPlacement<'_>> =
            bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
        let plan = place(&placements, &cluster).unwrap();
        let scenario = Scenario {
            workflows: workflows
                .into_iter()
                .zip(bundles)
                .map(|(def, bundle)| ScenarioWorkflow { def, bundle })
                .collect(),
            plan,
            cluster,
            mode: if case % 2 == 0 { Mode::CoRun } else { Mode::Single },
            requests_per_workflow: 3,
            rng_seed: case,
            composite_overhead_s: if case % 3 == 0 { 0.05 } else { 0.0 },
        };
        let report = simulate(&scenario).unwrap();
        conservation_check(&report, &scenario);
        assert_eq!(report.per_request.len(), 6, "case {case}");
        for seg in &report.tx_segments {
            let bw = scenario.cluster.node(&seg.node_id).unwrap().io_bw_bps;
            assert!(seg.rate_total <= bw + 1e-9, "case {case}");
            assert!(seg.end >= seg.start, "case {case}");
        }
        for e in &report.gantt {
            assert!(e.init.start <= e.init.end, "case {case}");
            assert!(e.init.end <= e.input.start, "case {case}");
            assert!(e.input.end <= e.exec.start, "case {case}");
            assert!(e.exec.end <= e.output.start, "case {case}");
            assert!(e.output.start <= e.output.end, "case {case}");
        }
        let again = simulate(&scenario).unwrap();
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap(),
            "case {case}: nondeterministic report"
        );
    }
}

#[test]
fn long_closed_loop_runs_stay_stable() {
    // 500 back-to-back requests: latencies settle once warm, arrivals
    // stay strictly ordered, and the span equals the sum of latencies
    // (single client, no idle gaps).
    let def = t1_def();
    let est = uniform_estimates(&def, &ProfileDefaults::default());
    let scenario = scenario_for(def, &est, three_node_cluster(), 500, Mode::Single);
    let report = simulate(&scenario).unwrap();
    assert_eq!(report.per_request.len(), 500);
    let warm: Vec<f64> =
        report.per_request.iter().skip(1).map(|r| r.latency_s).collect();
    let first = warm[0];
    assert!(warm.iter().all(|l| (l - first).abs() < 1e-9), "warm latencies drift");
    let total: f64 = report.per_request.iter().map(|r| r.latency_s).sum();
    assert!((total - report.span_s).abs() < 1e-6, "{total} vs {}", report.span_s);
    conservation_check(&report, &scenario);
}

#[test]
fn co_run_mode_honours_all_request_counts() {
    let def_a = WorkflowDef::new("a", leaf("x"), vec![FunctionSpec::new("x", "mock")]);
    let def_b = WorkflowDef::new("b", leaf("y"), vec![FunctionSpec::new("y", "mock")]);
    let defaults = defaults_zero_io();
    let cluster = one_node_cluster(1e8);
    let mut workflows = Vec::new();
    let mut bundles = Vec::new();
    for def in [def_a, def_b] {
        let est = estimate(&TraceStore::new(), &def, &defaults);
        let result =
            partition(&def, &est.profiles, &est.loops, &PartitionPolicy::IoContentionAware)
                .unwrap();
        bundles.push(PartitionBundle::new(&def, &est, &result).unwrap());
        workflows.push(def);
    }
    let placements: Vec<WorkflowPlacement<'_>> =
        bundles.iter().map(|b| WorkflowPlacement { bundle: b }).collect();
    let plan = place(&placements, &cluster).unwrap();
    let scenario = Scenario {
        workflows: workflows
            .into_iter()
            .zip(bundles)
            .map(|(def, bundle)| ScenarioWorkflow { def, bundle })
            .collect(),
        plan,
        cluster,
        mode: Mode::CoRun,
        requests_per_workflow: 4,
        rng_seed: 1,
        composite_overhead_s: 0.0,
    };
    let report = simulate(&scenario).unwrap();
    let count = |wf: &str| report.per_request.iter().filter(|r| r.workflow_id == wf).count();
    assert_eq!(count("a"), 4);
    assert_eq!(count("b"), 4);
    // Co-run clients start together: both first requests arrive at t=0.
    let first_a = report.gantt.iter().find(|e| e.workflow_id == "a").unwrap().init.start;
    let first_b = report.gantt.iter().find(|e| e.workflow_id == "b").unwrap().init.start;
    assert_eq!(first_a, 0.0);
    assert_eq!(first_b, 0.0);
}
