//! Simulation reports: per-request latencies, Gantt entries, and per-node
//! transmission series, with the CSV exports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use beeflow_core::bt::ExecStatus;
use beeflow_core::ids::{LeafId, NodeId};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Half-open simulated interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimPeriod {
    pub start: f64,
    pub end: f64,
}

impl SimPeriod {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// One executed leaf instance with its four lifecycle periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanttEntry {
    pub workflow_id: String,
    pub request_id: u32,
    pub leaf_id: LeafId,
    pub node_id: NodeId,
    pub iteration: u32,
    pub status: ExecStatus,
    pub init: SimPeriod,
    pub input: SimPeriod,
    pub exec: SimPeriod,
    pub output: SimPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Input,
    Output,
}

/// One data movement charged to a node. Local input fetches take zero
/// time but still move bytes on the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub workflow_id: String,
    pub request_id: u32,
    pub leaf_id: LeafId,
    pub node_id: NodeId,
    pub kind: TransferKind,
    pub bytes: f64,
    pub start: f64,
    pub end: f64,
    pub local: bool,
}

/// Constant-rate span of a node's bandwidth sharing: `transfers` active
/// transfers splitting `rate_total` bytes/second evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxSegment {
    pub node_id: NodeId,
    pub start: f64,
    pub end: f64,
    pub transfers: u32,
    pub rate_total: f64,
}

/// Zero-duration byte movement (a local fetch) at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantTx {
    pub node_id: NodeId,
    pub at: f64,
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLatency {
    pub workflow_id: String,
    pub request_id: u32,
    pub latency_s: f64,
}

/// One point of a windowed transmission series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxPoint {
    pub window_start_s: f64,
    pub bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub per_request: Vec<RequestLatency>,
    pub gantt: Vec<GanttEntry>,
    /// 5-second-averaged transmitted bytes/second per node.
    pub node_tx: BTreeMap<NodeId, Vec<TxPoint>>,
    pub transfers: Vec<TransferRecord>,
    pub tx_segments: Vec<TxSegment>,
    pub instant_tx: Vec<InstantTx>,
    pub span_s: f64,
}

impl SimReport {
    /// Total bytes moved, from the transfer ledger.
    pub fn total_transmitted_bytes(&self) -> f64 {
        self.transfers.iter().map(|t| t.bytes).sum()
    }

    /// Total bytes per node, from the transfer ledger.
    pub fn node_bytes(&self) -> BTreeMap<NodeId, f64> {
        let mut out = BTreeMap::new();
        for t in &self.transfers {
            *out.entry(t.node_id.clone()).or_insert(0.0) += t.bytes;
        }
        out
    }
}

/// Buckets transmitted bytes into consecutive windows of `window_s`
/// seconds, divided by the window length. Bandwidth-shared segments
/// spread uniformly over their span; instant movements land in the window
/// containing their instant. The series covers the full simulated span.
pub fn node_tx_series(report: &SimReport, window_s: f64) -> BTreeMap<NodeId, Vec<TxPoint>> {
    assert!(window_s > 0.0, "window must be positive");
    let windows = (report.span_s / window_s).ceil().max(1.0) as usize;
    let mut nodes: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    for seg in &report.tx_segments {
        let buckets = nodes.entry(seg.node_id.clone()).or_insert_with(|| vec![0.0; windows]);
        let mut t = seg.start;
        while t < seg.end {
            let w = (t / window_s).floor() as usize;
            let w_end = (w as f64 + 1.0) * window_s;
            let upto = seg.end.min(w_end);
            if w < buckets.len() {
                buckets[w] += seg.rate_total * (upto - t);
            }
            t = upto;
        }
    }
    for inst in &report.instant_tx {
        let buckets = nodes.entry(inst.node_id.clone()).or_insert_with(|| vec![0.0; windows]);
        let w = ((inst.at / window_s).floor() as usize).min(windows.saturating_sub(1));
        buckets[w] += inst.bytes;
    }
    nodes
        .into_iter()
        .map(|(id, buckets)| {
            let series = buckets
                .into_iter()
                .enumerate()
                .map(|(i, bytes)| TxPoint {
                    window_start_s: i as f64 * window_s,
                    bytes_per_s: bytes / window_s,
                })
                .collect();
            (id, series)
        })
        .collect()
}

const GANTT_HEADER: &str = "workflow_id,request_id,leaf_id,node_id,period,start_s,end_s";

/// Writes the Gantt chart CSV: one row per lifecycle period per entry.
pub fn export_gantt(report: &SimReport, path: &Path) -> Result<(), SimError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{GANTT_HEADER}")?;
    for e in &report.gantt {
        for (name, p) in
            [("init", e.init), ("input", e.input), ("exec", e.exec), ("output", e.output)]
        {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                e.workflow_id, e.request_id, e.leaf_id, e.node_id, name, p.start, p.end
            )?;
        }
    }
    Ok(())
}

/// One parsed Gantt CSV row: workflow, request, leaf, node, period name,
/// start, end.
pub type GanttRow = (String, u32, String, String, String, f64, f64);

/// Reads a Gantt CSV back into rows.
pub fn parse_gantt(text: &str) -> Result<Vec<GanttRow>, SimError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != GANTT_HEADER {
                return Err(SimError::InvalidScenario(format!("bad gantt header `{line}`")));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(SimError::InvalidScenario(format!("bad gantt row `{line}`")));
        }
        out.push((
            parts[0].to_string(),
            parts[1].parse().map_err(|_| SimError::InvalidScenario("request id".into()))?,
            parts[2].to_string(),
            parts[3].to_string(),
            parts[4].to_string(),
            parts[5].parse().map_err(|_| SimError::InvalidScenario("start".into()))?,
            parts[6].parse().map_err(|_| SimError::InvalidScenario("end".into()))?,
        ));
    }
    Ok(out)
}

/// Writes the per-node transmission series CSV.
pub fn export_node_tx(report: &SimReport, path: &Path) -> Result<(), SimError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "node_id,window_start_s,bytes_per_s")?;
    for (node, series) in &report.node_tx {
        for p in series {
            writeln!(f, "{},{},{}", node, p.window_start_s, p.bytes_per_s)?;
        }
    }
    Ok(())
}
