//! Event-driven execution of placed workflows over virtual time.
//!
//! Each workflow has one closed-loop client: the next request is emitted
//! when the previous one completes. A leaf instance walks the four
//! lifecycle periods on its placed node: init (first invocation of the
//! leaf on the node only), input fetch and output put through the node's
//! bandwidth under processor sharing (equal instantaneous shares,
//! recomputed at membership changes), and execution occupying its CPU
//! request with strict FIFO queueing when cores are saturated. An input
//! whose producer sits on the same node is free in time; its bytes are
//! still accounted to the node.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use beeflow_core::ids::{LeafId, NodeId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::{expand_request, RequestFlow};
use crate::report::{
    node_tx_series, GanttEntry, InstantTx, RequestLatency, SimPeriod, SimReport, TransferKind,
    TransferRecord, TxSegment,
};
use crate::scenario::{Mode, Scenario};
use crate::SimError;

const BYTE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
struct EvKey {
    time: f64,
    seq: u64,
}

impl Eq for EvKey {}

impl PartialOrd for EvKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EvKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrive { wf: usize, req: u32 },
    Ready { wf: usize, req: u32, inst: usize },
    InitDone { wf: usize, req: u32, inst: usize },
    XferTick { node: usize, epoch: u64 },
    ExecDone { wf: usize, req: u32, inst: usize },
}

#[derive(Debug)]
struct Xfer {
    wf: usize,
    req: u32,
    inst: usize,
    kind: TransferKind,
    bytes: f64,
    remaining: f64,
    start: f64,
}

#[derive(Debug, Default)]
struct NodeState {
    active: Vec<usize>,
    last_settle: f64,
    epoch: u64,
    cores_free: f64,
    run_q: VecDeque<(usize, u32, usize)>,
}

#[derive(Debug, Clone, Default)]
struct InstRuntime {
    remaining_preds: usize,
    producer_node: Option<usize>,
    ready: f64,
    init: SimPeriod,
    input: SimPeriod,
    exec: SimPeriod,
    output: SimPeriod,
    done: bool,
}

#[derive(Debug)]
struct RequestState {
    flow: RequestFlow,
    runtime: Vec<InstRuntime>,
    arrival: f64,
    remaining: usize,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    leaf_nodes: Vec<BTreeMap<LeafId, NodeId>>,
    node_ids: Vec<NodeId>,
    node_bw: Vec<f64>,
    queue: BinaryHeap<Reverse<(EvKey, u64)>>,
    events: Vec<Ev>,
    now: f64,
    seq: u64,
    nodes: Vec<NodeState>,
    xfers: Vec<Xfer>,
    requests: BTreeMap<(usize, u32), RequestState>,
    warm: BTreeSet<(usize, LeafId, usize)>,
    latencies: Vec<RequestLatency>,
    gantt: Vec<GanttEntry>,
    transfers: Vec<TransferRecord>,
    segments: Vec<TxSegment>,
    instants: Vec<InstantTx>,
}

/// Runs a scenario to completion and assembles the report.
/// Deterministic for a fixed scenario and seed.
pub fn simulate(scenario: &Scenario) -> Result<SimReport, SimError> {
    let leaf_nodes = scenario.leaf_nodes()?;
    let node_ids: Vec<NodeId> =
        scenario.cluster.nodes.iter().map(|n| n.node_id.clone()).collect();
    let node_bw: Vec<f64> = scenario.cluster.nodes.iter().map(|n| n.io_bw_bps).collect();
    let nodes = scenario
        .cluster
        .nodes
        .iter()
        .map(|n| NodeState { cores_free: n.cpu_cores, ..NodeState::default() })
        .collect();
    let mut engine = Engine {
        scenario,
        leaf_nodes,
        node_ids,
        node_bw,
        queue: BinaryHeap::new(),
        events: Vec::new(),
        now: 0.0,
        seq: 0,
        nodes,
        xfers: Vec::new(),
        requests: BTreeMap::new(),
        warm: BTreeSet::new(),
        latencies: Vec::new(),
        gantt: Vec::new(),
        transfers: Vec::new(),
        segments: Vec::new(),
        instants: Vec::new(),
    };
    engine.run()?;
    engine.finish()
}

impl Engine<'_> {
    fn push(&mut self, time: f64, ev: Ev) {
        let id = self.events.len() as u64;
        self.events.push(ev);
        self.queue.push(Reverse((EvKey { time, seq: self.seq }, id)));
        self.seq += 1;
    }

    fn node_index(&self, id: &NodeId) -> usize {
        self.node_ids.iter().position(|n| n == id).expect("validated node id")
    }

    fn run(&mut self) -> Result<(), SimError> {
        match self.scenario.mode {
            Mode::CoRun => {
                for wf in 0..self.scenario.workflows.len() {
                    self.push(0.0, Ev::Arrive { wf, req: 0 });
                }
            }
            Mode::Single => self.push(0.0, Ev::Arrive { wf: 0, req: 0 }),
        }
        while let Some(Reverse((key, id))) = self.queue.pop() {
            self.now = key.time;
            match self.events[id as usize] {
                Ev::Arrive { wf, req } => self.on_arrive(wf, req)?,
                Ev::Ready { wf, req, inst } => self.on_ready(wf, req, inst),
                Ev::InitDone { wf, req, inst } => self.on_init_done(wf, req, inst),
                Ev::XferTick { node, epoch } => self.on_xfer_tick(node, epoch),
                Ev::ExecDone { wf, req, inst } => self.on_exec_done(wf, req, inst),
            }
        }
        Ok(())
    }

    fn on_arrive(&mut self, wf: usize, req: u32) -> Result<(), SimError> {
        let workflow = &self.scenario.workflows[wf];
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.scenario.rng_seed, wf as u64, req as u64));
        let flow = expand_request(&workflow.def, &workflow.bundle, &mut rng)?;
        let n = flow.instances.len();
        let mut runtime = vec![InstRuntime::default(); n];
        for (i, inst) in flow.instances.iter().enumerate() {
            runtime[i].remaining_preds = inst.preds.len();
        }
        let sources: Vec<usize> =
            (0..n).filter(|&i| flow.instances[i].preds.is_empty()).collect();
        if sources.is_empty() {
            return Err(SimError::InvalidScenario("request expanded to no instances".into()));
        }
        self.requests.insert(
            (wf, req),
            RequestState { flow, runtime, arrival: self.now, remaining: n },
        );
        let ready_at = self.now + self.scenario.composite_overhead_s;
        for inst in sources {
            self.push(ready_at, Ev::Ready { wf, req, inst });
        }
        Ok(())
    }

    fn profile(&self, wf: usize, leaf: &LeafId) -> &beeflow_core::trace::FunctionProfile {
        &self.scenario.workflows[wf].bundle.profiles[leaf]
    }

    fn node_of(&self, wf: usize, leaf: &LeafId) -> usize {
        self.node_index(&self.leaf_nodes[wf][leaf].clone())
    }

    fn on_ready(&mut self, wf: usize, req: u32, inst: usize) {
        let leaf = self.requests[&(wf, req)].flow.instances[inst].leaf_id.clone();
        let node = self.node_of(wf, &leaf);
        let warm_key = (wf, leaf.clone(), node);
        let init_delay = if self.warm.contains(&warm_key) {
            0.0
        } else {
            self.warm.insert(warm_key);
            self.profile(wf, &leaf).init_delay_s
        };
        {
            let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
            rt.ready = self.now;
            rt.init = SimPeriod { start: self.now, end: self.now + init_delay };
        }
        if init_delay > 0.0 {
            self.push(self.now + init_delay, Ev::InitDone { wf, req, inst });
        } else {
            self.on_init_done(wf, req, inst);
        }
    }

    fn on_init_done(&mut self, wf: usize, req: u32, inst: usize) {
        let state = &self.requests[&(wf, req)];
        let leaf = state.flow.instances[inst].leaf_id.clone();
        let producer = state.runtime[inst].producer_node;
        let node = self.node_of(wf, &leaf);
        let bytes = self.profile(wf, &leaf).input_bytes;
        let local = producer == Some(node);
        if bytes <= 0.0 || local {
            // Local fetch: free in time, bytes still accounted to the node.
            if bytes > 0.0 {
                self.instants.push(InstantTx {
                    node_id: self.node_ids[node].clone(),
                    at: self.now,
                    bytes,
                });
                self.transfers.push(TransferRecord {
                    workflow_id: self.scenario.workflows[wf].def.workflow_id.clone(),
                    request_id: req,
                    leaf_id: leaf.clone(),
                    node_id: self.node_ids[node].clone(),
                    kind: TransferKind::Input,
                    bytes,
                    start: self.now,
                    end: self.now,
                    local: true,
                });
            }
            let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
            rt.input = SimPeriod { start: self.now, end: self.now };
            self.enqueue_exec(wf, req, inst, node);
        } else {
            {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.input = SimPeriod { start: self.now, end: self.now };
            }
            self.start_xfer(node, Xfer {
                wf,
                req,
                inst,
                kind: TransferKind::Input,
                bytes,
                remaining: bytes,
                start: self.now,
            });
        }
    }

    fn enqueue_exec(&mut self, wf: usize, req: u32, inst: usize, node: usize) {
        self.nodes[node].run_q.push_back((wf, req, inst));
        self.try_admit(node);
    }

    fn try_admit(&mut self, node: usize) {
        // Strict FIFO: the head blocks the queue until it fits.
        while let Some(&(wf, req, inst)) = self.nodes[node].run_q.front() {
            let leaf = self.requests[&(wf, req)].flow.instances[inst].leaf_id.clone();
            let cores = self.scenario.workflows[wf]
                .bundle
                .function_of(&leaf)
                .map(|f| f.cpu_request_cores)
                .unwrap_or(0.0);
            if cores > self.nodes[node].cores_free + 1e-12 {
                return;
            }
            self.nodes[node].run_q.pop_front();
            self.nodes[node].cores_free -= cores;
            let exec_s = self.profile(wf, &leaf).exec_delay_s;
            {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.exec = SimPeriod { start: self.now, end: self.now + exec_s };
            }
            if exec_s > 0.0 {
                self.push(self.now + exec_s, Ev::ExecDone { wf, req, inst });
            } else {
                self.finish_exec(wf, req, inst, node);
            }
        }
    }

    fn on_exec_done(&mut self, wf: usize, req: u32, inst: usize) {
        let leaf = self.requests[&(wf, req)].flow.instances[inst].leaf_id.clone();
        let node = self.node_of(wf, &leaf);
        self.finish_exec(wf, req, inst, node);
    }

    fn finish_exec(&mut self, wf: usize, req: u32, inst: usize, node: usize) {
        let leaf = self.requests[&(wf, req)].flow.instances[inst].leaf_id.clone();
        let cores = self.scenario.workflows[wf]
            .bundle
            .function_of(&leaf)
            .map(|f| f.cpu_request_cores)
            .unwrap_or(0.0);
        self.nodes[node].cores_free += cores;
        let bytes = self.profile(wf, &leaf).output_bytes;
        if bytes > 0.0 {
            {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.output = SimPeriod { start: self.now, end: self.now };
            }
            self.start_xfer(node, Xfer {
                wf,
                req,
                inst,
                kind: TransferKind::Output,
                bytes,
                remaining: bytes,
                start: self.now,
            });
        } else {
            {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.output = SimPeriod { start: self.now, end: self.now };
            }
            self.complete_instance(wf, req, inst, node);
        }
        self.try_admit(node);
    }

    fn start_xfer(&mut self, node: usize, xfer: Xfer) {
        self.settle(node);
        let id = self.xfers.len();
        self.xfers.push(xfer);
        self.nodes[node].active.push(id);
        self.reschedule(node);
    }

    /// Accrues bytes moved since the node's last settle point at the
    /// current fair-share rate.
    fn settle(&mut self, node: usize) {
        let n = self.nodes[node].active.len();
        let t0 = self.nodes[node].last_settle;
        if n > 0 && self.now > t0 {
            let rate = self.node_bw[node] / n as f64;
            let dt = self.now - t0;
            for i in 0..n {
                let x = self.nodes[node].active[i];
                self.xfers[x].remaining = (self.xfers[x].remaining - rate * dt).max(0.0);
            }
            self.segments.push(TxSegment {
                node_id: self.node_ids[node].clone(),
                start: t0,
                end: self.now,
                transfers: n as u32,
                rate_total: self.node_bw[node],
            });
        }
        self.nodes[node].last_settle = self.now;
    }

    fn reschedule(&mut self, node: usize) {
        self.nodes[node].epoch += 1;
        let n = self.nodes[node].active.len();
        if n == 0 {
            return;
        }
        let rate = self.node_bw[node] / n as f64;
        let t_min = self.nodes[node]
            .active
            .iter()
            .map(|&x| self.xfers[x].remaining / rate)
            .fold(f64::INFINITY, f64::min);
        let epoch = self.nodes[node].epoch;
        self.push(self.now + t_min.max(0.0), Ev::XferTick { node, epoch });
    }

    fn on_xfer_tick(&mut self, node: usize, epoch: u64) {
        if epoch != self.nodes[node].epoch {
            return;
        }
        self.settle(node);
        let (mut done, mut rest): (Vec<usize>, Vec<usize>) = self.nodes[node]
            .active
            .iter()
            .partition(|&&x| self.xfers[x].remaining <= BYTE_EPS);
        if done.is_empty() && !rest.is_empty() {
            // A tick fires exactly when the minimum-remaining transfer
            // drains; if rounding left it marginally above the epsilon,
            // force it out rather than rescheduling a zero-length tick.
            let min = rest
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    self.xfers[**a].remaining.total_cmp(&self.xfers[**b].remaining)
                })
                .map(|(i, _)| i)
                .unwrap();
            done.push(rest.remove(min));
        }
        self.nodes[node].active = rest;
        self.reschedule(node);
        for x in done {
            self.complete_xfer(x, node);
        }
    }

    fn complete_xfer(&mut self, x: usize, node: usize) {
        let (wf, req, inst, kind, bytes, start) = {
            let xf = &self.xfers[x];
            (xf.wf, xf.req, xf.inst, xf.kind, xf.bytes, xf.start)
        };
        let leaf = self.requests[&(wf, req)].flow.instances[inst].leaf_id.clone();
        self.transfers.push(TransferRecord {
            workflow_id: self.scenario.workflows[wf].def.workflow_id.clone(),
            request_id: req,
            leaf_id: leaf.clone(),
            node_id: self.node_ids[node].clone(),
            kind,
            bytes,
            start,
            end: self.now,
            local: false,
        });
        match kind {
            TransferKind::Input => {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.input.end = self.now;
                self.enqueue_exec(wf, req, inst, node);
            }
            TransferKind::Output => {
                let rt = &mut self.requests.get_mut(&(wf, req)).unwrap().runtime[inst];
                rt.output.end = self.now;
                self.complete_instance(wf, req, inst, node);
            }
        }
    }

    fn complete_instance(&mut self, wf: usize, req: u32, inst: usize, node: usize) {
        let succs = self.requests[&(wf, req)].flow.instances[inst].succs.clone();
        let overhead = self.scenario.composite_overhead_s;
        {
            let state = self.requests.get_mut(&(wf, req)).unwrap();
            state.runtime[inst].done = true;
            state.remaining -= 1;
        }
        self.emit_gantt(wf, req, inst, node);
        for succ in succs {
            let now_ready = {
                let state = self.requests.get_mut(&(wf, req)).unwrap();
                let rt = &mut state.runtime[succ];
                rt.remaining_preds -= 1;
                if rt.remaining_preds == 0 {
                    // The last predecessor to finish is the producer the
                    // input is fetched from.
                    rt.producer_node = Some(node);
                    true
                } else {
                    false
                }
            };
            if now_ready {
                self.push(self.now + overhead, Ev::Ready { wf, req, inst: succ });
            }
        }
        if self.requests[&(wf, req)].remaining == 0 {
            self.complete_request(wf, req);
        }
    }

    fn emit_gantt(&mut self, wf: usize, req: u32, inst: usize, node: usize) {
        let state = &self.requests[&(wf, req)];
        let instance = &state.flow.instances[inst];
        let rt = &state.runtime[inst];
        self.gantt.push(GanttEntry {
            workflow_id: self.scenario.workflows[wf].def.workflow_id.clone(),
            request_id: req,
            leaf_id: instance.leaf_id.clone(),
            node_id: self.node_ids[node].clone(),
            iteration: instance.iteration,
            status: instance.status,
            init: rt.init,
            input: rt.input,
            exec: rt.exec,
            output: rt.output,
        });
    }

    fn complete_request(&mut self, wf: usize, req: u32) {
        let arrival = self.requests[&(wf, req)].arrival;
        self.latencies.push(RequestLatency {
            workflow_id: self.scenario.workflows[wf].def.workflow_id.clone(),
            request_id: req,
            latency_s: self.now - arrival,
        });
        let last = req + 1 >= self.scenario.requests_per_workflow;
        if !last {
            self.push(self.now, Ev::Arrive { wf, req: req + 1 });
        } else if self.scenario.mode == Mode::Single
            && wf + 1 < self.scenario.workflows.len()
        {
            self.push(self.now, Ev::Arrive { wf: wf + 1, req: 0 });
        }
    }

    fn finish(mut self) -> Result<SimReport, SimError> {
        self.latencies.sort_by(|a, b| {
            a.workflow_id.cmp(&b.workflow_id).then(a.request_id.cmp(&b.request_id))
        });
        self.gantt.sort_by(|a, b| {
            a.workflow_id
                .cmp(&b.workflow_id)
                .then(a.request_id.cmp(&b.request_id))
                .then(a.init.start.total_cmp(&b.init.start))
                .then(a.leaf_id.cmp(&b.leaf_id))
                .then(a.iteration.cmp(&b.iteration))
        });
        let span_s = self.now;
        let mut report = SimReport {
            per_request: self.latencies,
            gantt: self.gantt,
            node_tx: BTreeMap::new(),
            transfers: self.transfers,
            tx_segments: self.segments,
            instant_tx: self.instants,
            span_s,
        };
        report.node_tx = node_tx_series(&report, 5.0);
        // Idle nodes still get a zero series covering the span.
        let windows = (report.span_s / 5.0).ceil().max(1.0) as usize;
        for node_id in &self.node_ids {
            report.node_tx.entry(node_id.clone()).or_insert_with(|| {
                (0..windows)
                    .map(|i| crate::report::TxPoint {
                        window_start_s: i as f64 * 5.0,
                        bytes_per_s: 0.0,
                    })
                    .collect()
            });
        }
        Ok(report)
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}
