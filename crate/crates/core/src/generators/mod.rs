//! Prompt conditioning and the autoregressive token generator contract.
//!
//! Two concrete generators implement [`TokenGenerator`]: an order-k Markov
//! chain whose table is seeded from the prompt, and a tiny trainable causal
//! attention model. Randomness is keyed by `(stream, absolute position)`, so a
//! token's draw depends only on its stream and where it lands in the
//! generator's context window. That is what makes prefix extension and
//! row-parallel scheduling reproducible.

mod markov;
mod tiny;

use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenId;

pub use markov::{markov_generator, MarkovChain, MarkovGenerator, DEFAULT_LOCALITY};
pub use tiny::{
    nll_loss, tiny_param_count, train_tiny, ParamLayout, TinyCausalModel, TinyConfig, TinyGenerator, TrainReport,
};

/// Dimension of the stand-in text embedding.
pub const PROMPT_DIM: usize = 64;

/// Unit-norm prompt embedding derived deterministically from its text.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    values: Vec<f64>,
    source_text: String,
}

impl PromptEmbedding {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    /// Stable 64-bit digest of the embedding values.
    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        for v in &self.values {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.finish()
    }
}

/// Encodes a prompt: FNV-1a hash of the UTF-8 text seeds a ChaCha stream of
/// standard normals, which is normalized to unit length.
pub fn encode_prompt(text: &str) -> Result<PromptEmbedding> {
    if text.is_empty() {
        return Err(Error::Input("prompt text is empty".into()));
    }
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    let mut values: Vec<f64> = (0..PROMPT_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v /= norm);
    Ok(PromptEmbedding { values, source_text: text.to_owned() })
}

/// Decoding hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    /// Keep only the `top_k` most likely tokens; 0 disables truncation.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 1.0, top_k: 0, seed: 0 }
    }
}

impl SamplingParams {
    pub fn with_seed(seed: u64) -> Self {
        SamplingParams { seed, ..Default::default() }
    }

    pub fn validate(&self, vocab: usize) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.top_k > vocab {
            return Err(Error::Config(format!("top_k {} exceeds vocabulary {vocab}", self.top_k)));
        }
        Ok(())
    }
}

/// Identifies an independent random stream: run seed, scheduler iteration and
/// panorama row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub block: u32,
    pub row: u32,
}

impl StreamKey {
    pub fn new(seed: u64, block: u32, row: u32) -> Self {
        StreamKey { seed, block, row }
    }

    /// Uniform source positioned so that the first draw belongs to context
    /// position `position`. Each position consumes exactly one `u64`.
    pub fn uniforms_from(&self, position: usize) -> PositionalUniforms {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(self.block) << 32) | u64::from(self.row));
        rng.set_word_pos(position as u128 * 2);
        PositionalUniforms { rng }
    }
}

impl fmt::Display for StreamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.seed, self.block, self.row)
    }
}

pub struct PositionalUniforms {
    rng: ChaCha8Rng,
}

impl PositionalUniforms {
    /// Next uniform in `[0, 1)` with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Everything a generator may condition on for one request.
#[derive(Debug, Clone, Copy)]
pub struct ConditioningContext<'a> {
    pub prompt: Option<&'a PromptEmbedding>,
    pub prefix: &'a [TokenId],
    pub stream: StreamKey,
}

impl<'a> ConditioningContext<'a> {
    pub fn new(prompt: Option<&'a PromptEmbedding>, prefix: &'a [TokenId], stream: StreamKey) -> Self {
        ConditioningContext { prompt, prefix, stream }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_none() && self.prefix.is_empty() {
            return Err(Error::Input("conditioning needs a prompt or a token prefix".into()));
        }
        Ok(())
    }
}

/// Autoregressive token generator with a fixed context capacity.
///
/// `generate` returns exactly `count` tokens. Output is a pure function of
/// the prompt, the prefix, the stream key and the sampling parameters.
pub trait TokenGenerator: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Maximum number of tokens (prefix plus emitted) in one window.
    fn capacity(&self) -> usize;

    fn generate(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<Vec<TokenId>>;

    /// Shared precondition checks for implementations.
    fn check_request(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<()> {
        ctx.validate()?;
        params.validate(self.vocab_size())?;
        if count == 0 {
            return Err(Error::Input("generation count must be at least 1".into()));
        }
        if ctx.prefix.len() + count > self.capacity() {
            return Err(Error::Capacity(format!(
                "prefix {} + count {count} exceeds generator capacity {}",
                ctx.prefix.len(),
                self.capacity()
            )));
        }
        if let Some(t) = ctx.prefix.iter().find(|t| t.index() >= self.vocab_size()) {
            return Err(Error::Codebook(format!("prefix token {t} outside vocabulary {}", self.vocab_size())));
        }
        Ok(())
    }
}

/// Samples an index from unnormalized log-weights after temperature scaling
/// and optional top-k truncation, by inverse CDF over ascending indices.
pub(crate) fn sample_from_logits(logits: &[f64], params: &SamplingParams, u: f64) -> usize {
    let inv_t = 1.0 / params.temperature;
    let mut keep = vec![true; logits.len()];
    if params.top_k > 0 && params.top_k < logits.len() {
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        keep.iter_mut().for_each(|k| *k = false);
        for &i in &order[..params.top_k] {
            keep[i] = true;
        }
    }
    let max = logits.iter().zip(&keep).filter(|(_, &k)| k).map(|(&l, _)| l * inv_t).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> =
        logits.iter().zip(&keep).map(|(&l, &k)| if k { ((l * inv_t) - max).exp() } else { 0.0 }).collect();
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}
