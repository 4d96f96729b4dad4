use std::fmt::Write as _;

use serde::Serialize;

use crate::generators::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    First,
    Vertical,
    Horizontal,
}

/// Half-open span `[start, end)` of flat indices in the grid being extended.
/// `row` is set for per-row windows of horizontal steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub row: Option<usize>,
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Block component of every stream key used by this step.
    pub iteration: u32,
    pub kind: StepKind,
    /// Band index for the horizontal pass of two-axis plans.
    pub band: Option<usize>,
    /// Shape of the grid the windows index into, before the step.
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub windows: Vec<Window>,
    #[serde(serialize_with = "streams_as_text")]
    pub streams: Vec<StreamKey>,
    pub emitted: usize,
    pub millis: f64,
}

fn streams_as_text<S: serde::Serializer>(streams: &[StreamKey], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(streams.iter().map(|k| k.to_string()))
}

/// Per-step audit log of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub first: Option<IterationRecord>,
    pub expansions: Vec<IterationRecord>,
}

impl GenerationTrace {
    pub fn iterations(&self) -> usize {
        self.expansions.len()
    }

    pub fn total_millis(&self) -> f64 {
        self.first.iter().chain(&self.expansions).map(|r| r.millis).sum()
    }

    /// One JSON object per line, first block first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in self.first.iter().chain(&self.expansions) {
            let line = serde_json::to_string(rec).expect("trace records serialize");
            let _ = writeln!(out, "{line}");
        }
        out
    }
}
