//! Runtime trace ingestion and the profile/timeline estimators built on
//! top of it.

pub(crate) mod align;
pub(crate) mod profile;

pub use align::{align, align_with, io_intervals, AlignError, ExpectedTimeline, IoInterval, LeafTimeline, Period};
pub use profile::{
    compute_effective_probs, estimate, EstimateOutput, FunctionProfile, LoopProfile,
    ProfileDefaults,
};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::LeafId;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamps out of order")]
    TimestampOrder { line: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Status a trace records for one leaf in one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Success,
    Failure,
    Skipped,
}

/// One leaf lifecycle observation. Timestamps are seconds, monotonic
/// within a request, covering the four periods: initialization, input
/// fetching, execution, output putting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub workflow_id: String,
    pub request_id: String,
    pub leaf_id: LeafId,
    pub t_init_start: f64,
    pub t_input_start: f64,
    pub t_exec_start: f64,
    pub t_output_start: f64,
    pub t_end: f64,
    pub input_bytes: f64,
    pub output_bytes: f64,
    pub status: TraceStatus,
    #[serde(default)]
    pub decorator_iteration: u32,
}

impl TraceRecord {
    fn check(&self) -> Result<(), String> {
        let ts = [
            self.t_init_start,
            self.t_input_start,
            self.t_exec_start,
            self.t_output_start,
            self.t_end,
        ];
        if ts.windows(2).any(|w| w[0] > w[1]) {
            return Err("timestamps out of order".into());
        }
        if self.input_bytes < 0.0 || self.output_bytes < 0.0 {
            return Err("negative byte count".into());
        }
        Ok(())
    }
}

/// Records indexed by (workflow, leaf); append-only during ingest,
/// immutable afterwards.
#[derive(Debug, Clone, Default)]
pub struct TraceStore {
    by_leaf: BTreeMap<(String, LeafId), Vec<TraceRecord>>,
    requests: BTreeMap<String, std::collections::BTreeSet<String>>,
    len: usize,
}

impl TraceStore {
    pub fn new() -> Self {
        TraceStore::default()
    }

    pub fn push(&mut self, record: TraceRecord) {
        self.requests
            .entry(record.workflow_id.clone())
            .or_default()
            .insert(record.request_id.clone());
        self.by_leaf
            .entry((record.workflow_id.clone(), record.leaf_id.clone()))
            .or_default()
            .push(record);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn records(&self, workflow: &str, leaf: &LeafId) -> &[TraceRecord] {
        self.by_leaf
            .get(&(workflow.to_string(), leaf.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Distinct request ids observed for one workflow.
    pub fn request_count(&self, workflow: &str) -> usize {
        self.requests.get(workflow).map(|s| s.len()).unwrap_or(0)
    }

    pub fn workflows(&self) -> impl Iterator<Item = &String> {
        self.requests.keys()
    }
}

/// Parses a JSON Lines trace stream into a store. Gzip input is detected
/// by its magic bytes and decompressed transparently.
pub fn ingest(reader: impl Read) -> Result<TraceStore, TraceError> {
    let mut buffered = BufReader::new(reader);
    let head = buffered.fill_buf()?;
    let gzipped = head.starts_with(&[0x1f, 0x8b]);
    if gzipped {
        ingest_lines(BufReader::new(flate2::read::GzDecoder::new(buffered)))
    } else {
        ingest_lines(buffered)
    }
}

fn ingest_lines(reader: impl BufRead) -> Result<TraceStore, TraceError> {
    let mut store = TraceStore::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| TraceError::Parse { line: lineno, message: e.to_string() })?;
        record.check().map_err(|message| {
            if message.contains("timestamps") {
                TraceError::TimestampOrder { line: lineno }
            } else {
                TraceError::Parse { line: lineno, message }
            }
        })?;
        store.push(record);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn record_json(leaf: &str, req: &str) -> String {
        format!(
            r#"{{"workflow_id":"w","request_id":"{req}","leaf_id":"{leaf}","t_init_start":0.0,"t_input_start":0.5,"t_exec_start":0.6,"t_output_start":1.6,"t_end":1.7,"input_bytes":1048576,"output_bytes":1048576,"status":"success","decorator_iteration":0}}"#
        )
    }

    #[test]
    fn empty_stream_yields_empty_store() {
        let store = ingest(std::io::Cursor::new("")).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn well_formed_records_are_indexed() {
        let data = [record_json("f1", "r1"), record_json("f1", "r2"), record_json("f2", "r1")]
            .join("\n");
        let store = ingest(std::io::Cursor::new(data)).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.records("w", &LeafId::new("f1")).len(), 2);
        assert_eq!(store.request_count("w"), 2);
    }

    #[test]
    fn timestamp_order_violation_carries_line_number() {
        let bad = r#"{"workflow_id":"w","request_id":"r","leaf_id":"f","t_init_start":0.0,"t_input_start":0.5,"t_exec_start":0.4,"t_output_start":1.0,"t_end":1.1,"input_bytes":0,"output_bytes":0,"status":"success"}"#;
        let data = format!("{}\n{}", record_json("f1", "r1"), bad);
        match ingest(std::io::Cursor::new(data)) {
            Err(TraceError::TimestampOrder { line: 2 }) => {}
            other => panic!("expected order violation on line 2, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_rejected_with_position() {
        let data = format!("{}\nnot json", record_json("f1", "r1"));
        match ingest(std::io::Cursor::new(data)) {
            Err(TraceError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
    }

    #[test]
    fn gzip_input_is_transparent() {
        let mut enc =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(record_json("f1", "r1").as_bytes()).unwrap();
        let bytes = enc.finish().unwrap();
        let store = ingest(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(store.len(), 1);
    }
}
