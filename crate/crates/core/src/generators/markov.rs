use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_from_logits, ConditioningContext, PromptEmbedding, SamplingParams, TokenGenerator};
use crate::error::{Error, Result};
use crate::grid::TokenId;

/// Decay length (in token ids) of the transition kernel.
pub const DEFAULT_LOCALITY: f64 = 1.5;

/// Largest vocabulary for which dense per-lag tables are built.
const MAX_MARKOV_VOCAB: usize = 1024;

/// Order-k chain in mixture form:
/// `P(x | x[t-1..t-k]) = sum_l w_l * T_l[x[t-l], x]`.
///
/// Each lag table puts mass `exp(-|i - j| / locality)` (jittered by the
/// prompt seed) on moving from id `i` to id `j`, so nearby ids are favoured.
/// With fewer than `k` tokens of context the available lags are used with
/// their weights renormalized; with no context the start distribution is used.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    vocab: usize,
    order: usize,
    capacity: usize,
    start: Vec<f64>,
    lag_weights: Vec<f64>,
    tables: Vec<f64>,
}

/// Builds the chain seeded from `prompt` (or a fixed neutral seed).
pub fn markov_generator(
    vocab: usize,
    order: usize,
    prompt: Option<&PromptEmbedding>,
    capacity: usize,
) -> Result<MarkovChain> {
    MarkovChain::build(vocab, order, prompt, capacity, DEFAULT_LOCALITY)
}

impl MarkovChain {
    pub fn build(
        vocab: usize,
        order: usize,
        prompt: Option<&PromptEmbedding>,
        capacity: usize,
        locality: f64,
    ) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::Config(format!("vocabulary must have at least 2 tokens, got {vocab}")));
        }
        if vocab > MAX_MARKOV_VOCAB {
            return Err(Error::Config(format!("markov vocabulary limited to {MAX_MARKOV_VOCAB}, got {vocab}")));
        }
        if order == 0 {
            return Err(Error::Config("markov order must be at least 1".into()));
        }
        if capacity == 0 {
            return Err(Error::Config("capacity must be positive".into()));
        }
        if !(locality.is_finite() && locality > 0.0) {
            return Err(Error::Config(format!("locality must be positive, got {locality}")));
        }
        let seed = prompt.map_or(0x5e_ed0f_c4a1, PromptEmbedding::digest);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut start: Vec<f64> = (0..vocab).map(|_| 0.5 + rng.random::<f64>()).collect();
        normalize(&mut start);

        let mut lag_weights: Vec<f64> = (0..order).map(|l| 0.5f64.powi(l as i32)).collect();
        normalize(&mut lag_weights);

        let mut tables = vec![0.0; order * vocab * vocab];
        for l in 0..order {
            for i in 0..vocab {
                let row = &mut tables[(l * vocab + i) * vocab..(l * vocab + i + 1) * vocab];
                for (j, p) in row.iter_mut().enumerate() {
                    let dist = (i as f64 - j as f64).abs();
                    *p = (-dist / locality).exp() * (0.5 + rng.random::<f64>());
                }
                normalize(row);
            }
        }
        Ok(MarkovChain { vocab, order, capacity, start, lag_weights, tables })
    }

    pub fn from_parts(
        vocab: usize,
        order: usize,
        capacity: usize,
        start: Vec<f64>,
        lag_weights: Vec<f64>,
        tables: Vec<f64>,
    ) -> Result<Self> {
        if vocab < 2 || order == 0 || capacity == 0 {
            return Err(Error::Config("markov chain needs vocab >= 2, order >= 1, capacity >= 1".into()));
        }
        if start.len() != vocab || lag_weights.len() != order || tables.len() != order * vocab * vocab {
            return Err(Error::Format("markov table sizes do not match header".into()));
        }
        if start.iter().chain(&lag_weights).chain(&tables).any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Format("markov probabilities must be finite and non-negative".into()));
        }
        Ok(MarkovChain { vocab, order, capacity, start, lag_weights, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start
    }

    pub fn lag_weights(&self) -> &[f64] {
        &self.lag_weights
    }

    pub fn tables(&self) -> &[f64] {
        &self.tables
    }

    /// Row of lag table `lag` (1-based lag) for previous token `from`.
    pub fn transition_row(&self, lag: usize, from: TokenId) -> &[f64] {
        let base = ((lag - 1) * self.vocab + from.index()) * self.vocab;
        &self.tables[base..base + self.vocab]
    }

    /// Next-token distribution given the context so far (most recent last).
    pub fn next_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let lags = self.order.min(context.len());
        if lags == 0 {
            return self.start.clone();
        }
        let wsum: f64 = self.lag_weights[..lags].iter().sum();
        let mut dist = vec![0.0; self.vocab];
        for lag in 1..=lags {
            let w = self.lag_weights[lag - 1] / wsum;
            let prev = context[context.len() - lag];
            for (d, &p) in dist.iter_mut().zip(self.transition_row(lag, prev)) {
                *d += w * p;
            }
        }
        dist
    }
}

impl TokenGenerator for MarkovChain {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn generate(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<Vec<TokenId>> {
        self.check_request(ctx, count, params)?;
        let mut uniforms = ctx.stream.uniforms_from(ctx.prefix.len());
        // only the last `order` tokens matter
        let keep = self.order.min(ctx.prefix.len());
        let mut context: Vec<TokenId> = ctx.prefix[ctx.prefix.len() - keep..].to_vec();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let dist = self.next_distribution(&context);
            let logits: Vec<f64> = dist.iter().map(|p| p.ln()).collect();
            let tok = TokenId(sample_from_logits(&logits, params, uniforms.next_uniform()) as u32);
            out.push(tok);
            context.push(tok);
            if context.len() > self.order {
                context.remove(0);
            }
        }
        Ok(out)
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= s);
}

/// Markov generator whose table is chosen by the request's prompt.
///
/// Tables are built on first use and cached per prompt digest.
#[derive(Debug)]
pub struct MarkovGenerator {
    vocab: usize,
    order: usize,
    capacity: usize,
    locality: f64,
    cache: RwLock<HashMap<Option<u64>, Arc<MarkovChain>>>,
}

impl MarkovGenerator {
    pub fn new(vocab: usize, order: usize, capacity: usize) -> Result<Self> {
        Self::with_locality(vocab, order, capacity, DEFAULT_LOCALITY)
    }

    pub fn with_locality(vocab: usize, order: usize, capacity: usize, locality: f64) -> Result<Self> {
        // validates the parameters once up front
        MarkovChain::build(vocab, order, None, capacity, locality)?;
        Ok(MarkovGenerator { vocab, order, capacity, locality, cache: RwLock::new(HashMap::new()) })
    }

    pub fn chain_for(&self, prompt: Option<&PromptEmbedding>) -> Result<Arc<MarkovChain>> {
        let key = prompt.map(PromptEmbedding::digest);
        if let Some(chain) = self.cache.read().unwrap().get(&key) {
            return Ok(chain.clone());
        }
        let chain = Arc::new(MarkovChain::build(self.vocab, self.order, prompt, self.capacity, self.locality)?);
        self.cache.write().unwrap().entry(key).or_insert_with(|| chain.clone());
        Ok(chain)
    }
}

impl TokenGenerator for MarkovGenerator {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn generate(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<Vec<TokenId>> {
        self.chain_for(ctx.prompt)?.generate(ctx, count, params)
    }
}
