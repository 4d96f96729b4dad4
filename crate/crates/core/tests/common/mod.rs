#![allow(dead_code)]

use std::sync::Mutex;

use nextcrop::generators::{ConditioningContext, SamplingParams, StreamKey, TokenGenerator};
use nextcrop::scheduler::{GenerationTrace, IterationRecord, StepKind};
use nextcrop::tokenizer::Codebook;
use nextcrop::{Result, TokenId};

/// Delegates to an inner generator and keeps every request it saw.
pub struct Recorder<'a> {
    pub inner: &'a dyn TokenGenerator,
    pub calls: Mutex<Vec<(StreamKey, Vec<TokenId>, usize)>>,
}

impl<'a> Recorder<'a> {
    pub fn new(inner: &'a dyn TokenGenerator) -> Self {
        Recorder { inner, calls: Mutex::new(Vec::new()) }
    }

    pub fn prefix_for(&self, key: StreamKey) -> Vec<TokenId> {
        let calls = self.calls.lock().unwrap();
        let hits: Vec<_> = calls.iter().filter(|c| c.0 == key).collect();
        assert_eq!(hits.len(), 1, "stream {key} used {} times", hits.len());
        hits[0].1.clone()
    }
}

impl TokenGenerator for Recorder<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    fn generate(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<Vec<TokenId>> {
        self.calls.lock().unwrap().push((ctx.stream, ctx.prefix.to_vec(), count));
        self.inner.generate(ctx, count, params)
    }
}

/// Flat indices of the conditioning window, found by walking every cell of
/// a `rows x cols` grid in raster order and keeping the ones a step may see.
/// Returns one list per conditioned row (a single list for vertical steps).
pub fn oracle_windows(kind: StepKind, rows: usize, cols: usize, side: usize, step: usize) -> Vec<Vec<usize>> {
    let mut cells = Vec::new();
    let mut flat = 0;
    for y in 0..rows {
        for x in 0..cols {
            cells.push((y, x, flat));
            flat += 1;
        }
    }
    match kind {
        StepKind::First => vec![Vec::new()],
        StepKind::Vertical => {
            let first_row = rows + step - side;
            vec![cells.iter().filter(|c| c.0 >= first_row).map(|c| c.2).collect()]
        }
        StepKind::Horizontal => {
            let first_col = cols + step - side;
            (0..rows).map(|j| cells.iter().filter(|c| c.0 == j && c.1 >= first_col).map(|c| c.2).collect()).collect()
        }
    }
}

pub fn traced_windows(rec: &IterationRecord) -> Vec<Vec<usize>> {
    rec.windows.iter().map(|w| (w.start..w.end).collect()).collect()
}

/// Records in execution order with the step size each one used.
pub fn records(trace: &GenerationTrace) -> impl Iterator<Item = &IterationRecord> {
    trace.first.iter().chain(&trace.expansions)
}

/// Nearest codebook entry to `lambda * cur + (1 - lambda) * prev`, by a
/// plain scan with strict improvement (lowest index wins ties).
pub fn blend_oracle(cb: &Codebook<f64>, prev: TokenId, cur: TokenId, lambda: f64) -> TokenId {
    let d = cb.dim();
    let e = cb.embeddings();
    let mixed: Vec<f64> =
        (0..d).map(|i| lambda * e[cur.0 as usize * d + i] + (1.0 - lambda) * e[prev.0 as usize * d + i]).collect();
    let mut best = (f64::INFINITY, 0);
    for k in 0..cb.size() {
        let dist: f64 = (0..d).map(|i| (e[k * d + i] - mixed[i]).powi(2)).sum();
        if dist < best.0 {
            best = (dist, k);
        }
    }
    TokenId(best.1 as u32)
}
