//! Tiny causal attention model: one single-head self-attention stage and one
//! tanh feed-forward stage, both residual, between a token/position embedding
//! and a linear output projection. Small enough that the full gradient is
//! written out by hand and checked against finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sample_from_logits, ConditioningContext, PromptEmbedding, SamplingParams, TokenGenerator, PROMPT_DIM};
use crate::error::{Error, Result};
use crate::grid::TokenId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyConfig {
    /// Context window `L`.
    pub context: usize,
    /// Vocabulary size `K`.
    pub vocab: usize,
    /// Model width `m`.
    pub model_dim: usize,
    /// Feed-forward hidden width.
    pub ff_dim: usize,
}

impl TinyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context < 2 || self.vocab < 2 || self.model_dim == 0 || self.ff_dim == 0 {
            return Err(Error::Config(format!("invalid tiny model shape {self:?}")));
        }
        Ok(())
    }
}

/// Offsets of each parameter tensor inside the flat parameter vector. The
/// order is also the on-disk order of the checkpoint format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub token_embedding: usize,
    pub position_embedding: usize,
    pub w_query: usize,
    pub w_key: usize,
    pub w_value: usize,
    pub w_attn_out: usize,
    pub ff_in: usize,
    pub ff_in_bias: usize,
    pub ff_out: usize,
    pub ff_out_bias: usize,
    pub out_proj: usize,
    pub out_bias: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(c: &TinyConfig) -> Self {
        let (k, l, m, f) = (c.vocab, c.context, c.model_dim, c.ff_dim);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let token_embedding = take(k * m);
        let position_embedding = take(l * m);
        let w_query = take(m * m);
        let w_key = take(m * m);
        let w_value = take(m * m);
        let w_attn_out = take(m * m);
        let ff_in = take(f * m);
        let ff_in_bias = take(f);
        let ff_out = take(m * f);
        let ff_out_bias = take(m);
        let out_proj = take(m * k);
        let out_bias = take(k);
        ParamLayout {
            token_embedding,
            position_embedding,
            w_query,
            w_key,
            w_value,
            w_attn_out,
            ff_in,
            ff_in_bias,
            ff_out,
            ff_out_bias,
            out_proj,
            out_bias,
            total: at,
        }
    }
}

pub fn tiny_param_count(config: &TinyConfig) -> usize {
    ParamLayout::new(config).total
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyCausalModel<T: Scalar> {
    config: TinyConfig,
    layout: ParamLayout,
    params: Vec<T>,
}

/// Activations kept from the forward pass for backpropagation.
struct Activations<T> {
    h0: Vec<Vec<T>>,
    q: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    attn: Vec<Vec<T>>,
    ctx: Vec<Vec<T>>,
    h1: Vec<Vec<T>>,
    g: Vec<Vec<T>>,
    h2: Vec<Vec<T>>,
    logits: Vec<Vec<T>>,
}

// y = W x with W stored row-major as rows x cols
fn matvec<T: Scalar>(w: &[T], rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    (0..rows)
        .map(|i| {
            let row = &w[i * cols..(i + 1) * cols];
            row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect()
}

// accumulate W^T y into out
fn matvec_t_acc<T: Scalar>(w: &[T], rows: usize, cols: usize, y: &[T], out: &mut [T]) {
    for i in 0..rows {
        let yi = y[i];
        for j in 0..cols {
            out[j] += w[i * cols + j] * yi;
        }
    }
}

// dW += y x^T
fn outer_acc<T: Scalar>(dw: &mut [T], rows: usize, cols: usize, y: &[T], x: &[T]) {
    for i in 0..rows {
        for j in 0..cols {
            dw[i * cols + j] += y[i] * x[j];
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax_at<T: Scalar>(x: &[T], idx: usize) -> T {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = x.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    x[idx] - lse
}

impl<T: Scalar> TinyCausalModel<T> {
    /// Gaussian initialization with standard deviation `init_std`.
    pub fn new(config: TinyConfig, seed: u64, init_std: f64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::Config(format!("init std: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..layout.total).map(|_| T::of(normal.sample(&mut rng))).collect();
        Ok(TinyCausalModel { config, layout, params })
    }

    pub fn from_params(config: TinyConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Format(format!("model needs {} parameters, got {}", layout.total, params.len())));
        }
        Ok(TinyCausalModel { config, layout, params })
    }

    pub fn config(&self) -> &TinyConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn slice(&self, offset: usize, len: usize) -> &[T] {
        &self.params[offset..offset + len]
    }

    fn check_sequence(&self, seq: &[TokenId]) -> Result<()> {
        if seq.len() > self.config.context {
            return Err(Error::Capacity(format!(
                "sequence of {} exceeds context window {}",
                seq.len(),
                self.config.context
            )));
        }
        if let Some(t) = seq.iter().find(|t| t.index() >= self.config.vocab) {
            return Err(Error::Codebook(format!("token {t} outside vocabulary {}", self.config.vocab)));
        }
        Ok(())
    }

    /// Per-position embedding plus first projections for one token.
    fn embed(&self, tok: TokenId, pos: usize) -> [Vec<T>; 4] {
        let (m, lay) = (self.config.model_dim, &self.layout);
        let e = self.slice(lay.token_embedding + tok.index() * m, m);
        let p = self.slice(lay.position_embedding + pos * m, m);
        let h0: Vec<T> = e.iter().zip(p).map(|(&a, &b)| a + b).collect();
        let q = matvec(self.slice(lay.w_query, m * m), m, m, &h0);
        let k = matvec(self.slice(lay.w_key, m * m), m, m, &h0);
        let v = matvec(self.slice(lay.w_value, m * m), m, m, &h0);
        [h0, q, k, v]
    }

    /// Residual attention output, feed-forward stage and logits for one
    /// position given its attention context vector.
    fn head(&self, h0: &[T], ctx: &[T]) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let (m, f, kv, lay) = (self.config.model_dim, self.config.ff_dim, self.config.vocab, &self.layout);
        let proj = matvec(self.slice(lay.w_attn_out, m * m), m, m, ctx);
        let h1: Vec<T> = h0.iter().zip(&proj).map(|(&a, &b)| a + b).collect();
        let pre = matvec(self.slice(lay.ff_in, f * m), f, m, &h1);
        let g: Vec<T> = pre.iter().zip(self.slice(lay.ff_in_bias, f)).map(|(&a, &b)| (a + b).tanh()).collect();
        let ff = matvec(self.slice(lay.ff_out, m * f), m, f, &g);
        let h2: Vec<T> = (0..m).map(|i| h1[i] + ff[i] + self.params[lay.ff_out_bias + i]).collect();
        let mut logits = self.slice(lay.out_bias, kv).to_vec();
        matvec_t_acc(self.slice(lay.out_proj, m * kv), m, kv, &h2, &mut logits);
        (h1, g, h2, logits)
    }

    fn attend(&self, q: &[T], keys: &[Vec<T>], values: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
        let m = self.config.model_dim;
        let scale = T::one() / T::of(m as f64).sqrt();
        let scores: Vec<T> = keys.iter().map(|k| dot(q, k) * scale).collect();
        let a = softmax(&scores);
        let mut c = vec![T::zero(); m];
        for (w, v) in a.iter().zip(values) {
            for i in 0..m {
                c[i] += *w * v[i];
            }
        }
        (a, c)
    }

    fn forward(&self, seq: &[TokenId]) -> Activations<T> {
        let n = seq.len();
        let mut acts = Activations {
            h0: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            k: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            attn: Vec::with_capacity(n),
            ctx: Vec::with_capacity(n),
            h1: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            h2: Vec::with_capacity(n),
            logits: Vec::with_capacity(n),
        };
        for (t, &tok) in seq.iter().enumerate() {
            let [h0, q, k, v] = self.embed(tok, t);
            acts.k.push(k);
            acts.v.push(v);
            let (a, c) = self.attend(&q, &acts.k, &acts.v);
            let (h1, g, h2, logits) = self.head(&h0, &c);
            acts.h0.push(h0);
            acts.q.push(q);
            acts.attn.push(a);
            acts.ctx.push(c);
            acts.h1.push(h1);
            acts.g.push(g);
            acts.h2.push(h2);
            acts.logits.push(logits);
        }
        acts
    }

    /// Logits at every position of `seq`.
    pub fn logits(&self, seq: &[TokenId]) -> Result<Vec<Vec<T>>> {
        self.check_sequence(seq)?;
        Ok(self.forward(seq).logits)
    }

    /// Softmax of the logits at every position.
    pub fn probabilities(&self, seq: &[TokenId]) -> Result<Vec<Vec<T>>> {
        Ok(self.logits(seq)?.iter().map(|l| softmax(l)).collect())
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, seq: &[TokenId]) -> Result<(T, Vec<T>)> {
        check_loss_input(self, seq)?;
        let acts = self.forward(seq);
        let mut grad = vec![T::zero(); self.layout.total];
        let loss = self.backward(seq, &acts, &mut grad);
        Ok((loss, grad))
    }

    fn backward(&self, seq: &[TokenId], acts: &Activations<T>, grad: &mut [T]) -> T {
        let (m, f, kv, lay) = (self.config.model_dim, self.config.ff_dim, self.config.vocab, self.layout);
        let n = seq.len();
        let scale = T::one() / T::of(m as f64).sqrt();
        let mut loss = T::zero();
        let mut d_h0 = vec![vec![T::zero(); m]; n];
        let mut d_q = vec![vec![T::zero(); m]; n];
        let mut d_k = vec![vec![T::zero(); m]; n];
        let mut d_v = vec![vec![T::zero(); m]; n];

        // position n-1 predicts nothing
        for t in 0..n - 1 {
            let target = seq[t + 1].index();
            loss -= log_softmax_at(&acts.logits[t], target);
            let mut dl = softmax(&acts.logits[t]);
            dl[target] -= T::one();

            for (g, &d) in grad[lay.out_bias..lay.out_bias + kv].iter_mut().zip(&dl) {
                *g += d;
            }
            // logits = O^T h2 with O stored m x kv
            outer_acc(&mut grad[lay.out_proj..lay.out_proj + m * kv], m, kv, &acts.h2[t], &dl);
            let d_h2 = matvec(self.slice(lay.out_proj, m * kv), m, kv, &dl);

            let mut d_h1 = d_h2.clone();
            for (g, &d) in grad[lay.ff_out_bias..lay.ff_out_bias + m].iter_mut().zip(&d_h2) {
                *g += d;
            }
            outer_acc(&mut grad[lay.ff_out..lay.ff_out + m * f], m, f, &d_h2, &acts.g[t]);
            let mut d_g = vec![T::zero(); f];
            matvec_t_acc(self.slice(lay.ff_out, m * f), m, f, &d_h2, &mut d_g);
            let d_pre: Vec<T> = d_g.iter().zip(&acts.g[t]).map(|(&d, &g)| d * (T::one() - g * g)).collect();
            for (g, &d) in grad[lay.ff_in_bias..lay.ff_in_bias + f].iter_mut().zip(&d_pre) {
                *g += d;
            }
            outer_acc(&mut grad[lay.ff_in..lay.ff_in + f * m], f, m, &d_pre, &acts.h1[t]);
            matvec_t_acc(self.slice(lay.ff_in, f * m), f, m, &d_pre, &mut d_h1);

            for i in 0..m {
                d_h0[t][i] += d_h1[i];
            }
            outer_acc(&mut grad[lay.w_attn_out..lay.w_attn_out + m * m], m, m, &d_h1, &acts.ctx[t]);
            let mut d_ctx = vec![T::zero(); m];
            matvec_t_acc(self.slice(lay.w_attn_out, m * m), m, m, &d_h1, &mut d_ctx);

            let a = &acts.attn[t];
            let d_a: Vec<T> = (0..=t).map(|j| dot(&d_ctx, &acts.v[j])).collect();
            for j in 0..=t {
                for i in 0..m {
                    d_v[j][i] += a[j] * d_ctx[i];
                }
            }
            let mean = a.iter().zip(&d_a).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            for j in 0..=t {
                let ds = a[j] * (d_a[j] - mean) * scale;
                for i in 0..m {
                    d_q[t][i] += ds * acts.k[j][i];
                    d_k[j][i] += ds * acts.q[t][i];
                }
            }
        }

        for t in 0..n {
            outer_acc(&mut grad[lay.w_query..lay.w_query + m * m], m, m, &d_q[t], &acts.h0[t]);
            outer_acc(&mut grad[lay.w_key..lay.w_key + m * m], m, m, &d_k[t], &acts.h0[t]);
            outer_acc(&mut grad[lay.w_value..lay.w_value + m * m], m, m, &d_v[t], &acts.h0[t]);
            let mut d = d_h0[t].clone();
            matvec_t_acc(self.slice(lay.w_query, m * m), m, m, &d_q[t], &mut d);
            matvec_t_acc(self.slice(lay.w_key, m * m), m, m, &d_k[t], &mut d);
            matvec_t_acc(self.slice(lay.w_value, m * m), m, m, &d_v[t], &mut d);
            let te = lay.token_embedding + seq[t].index() * m;
            let pe = lay.position_embedding + t * m;
            for i in 0..m {
                grad[te + i] += d[i];
                grad[pe + i] += d[i];
            }
        }
        loss
    }

    pub fn convert<U: Scalar>(&self) -> TinyCausalModel<U> {
        TinyCausalModel {
            config: self.config,
            layout: self.layout,
            params: self.params.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

fn check_loss_input<T: Scalar>(model: &TinyCausalModel<T>, seq: &[TokenId]) -> Result<()> {
    if seq.len() < 2 {
        return Err(Error::Input(format!("loss needs at least 2 tokens, got {}", seq.len())));
    }
    model.check_sequence(seq)
}

/// Negative log-likelihood `-sum_{t>=1} log softmax(logits[t-1])[seq[t]]`.
pub fn nll_loss<T: Scalar>(model: &TinyCausalModel<T>, seq: &[TokenId]) -> Result<T> {
    check_loss_input(model, seq)?;
    let logits = model.forward(seq).logits;
    Ok((1..seq.len()).fold(T::zero(), |acc, t| acc - log_softmax_at(&logits[t - 1], seq[t].index())))
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss over the corpus before the first update, then after each
    /// epoch: `epochs + 1` entries.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

fn mean_loss_and_grad<T: Scalar>(model: &TinyCausalModel<T>, corpus: &[Vec<TokenId>]) -> Result<(T, Vec<T>)> {
    let mut total = T::zero();
    let mut grad = vec![T::zero(); model.layout.total];
    for seq in corpus {
        let acts = model.forward(seq);
        total += model.backward(seq, &acts, &mut grad);
    }
    let n = T::of(corpus.len() as f64);
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Full-batch gradient descent on the mean sequence loss.
pub fn train_tiny<T: Scalar>(
    model: &TinyCausalModel<T>,
    corpus: &[Vec<TokenId>],
    epochs: usize,
    lr: f64,
) -> Result<(TinyCausalModel<T>, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::Input("training corpus is empty".into()));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Config(format!("learning rate must be non-negative, got {lr}")));
    }
    for seq in corpus {
        check_loss_input(model, seq)?;
    }
    let mut model = model.clone();
    let lr = T::of(lr);
    let mut losses = Vec::with_capacity(epochs + 1);
    for epoch in 0..=epochs {
        let (loss, grad) = mean_loss_and_grad(&model, corpus)?;
        let loss_f = loss.as_f64();
        if !loss_f.is_finite() {
            return Err(Error::Training { epoch, loss: loss_f, detail: "mean loss is not finite".into() });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training { epoch, loss: loss_f, detail: format!("gradient entry {i} is not finite") });
        }
        losses.push(loss_f);
        if epoch == epochs {
            break;
        }
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= lr * *g;
        }
        log::debug!("epoch {epoch}: mean loss {loss_f:.6}");
    }
    Ok((model, TrainReport { losses }))
}

/// Wraps a trained model as a [`TokenGenerator`]. Generation runs position by
/// position with a key/value cache; the prompt adds a fixed linear bias to
/// the logits.
#[derive(Debug, Clone)]
pub struct TinyGenerator {
    model: TinyCausalModel<f64>,
    prompt_proj: Vec<f64>,
    prompt_weight: f64,
}

const PROMPT_PROJ_SEED: u64 = 0x7469_6e79;

impl TinyGenerator {
    pub fn new(model: TinyCausalModel<f64>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PROMPT_PROJ_SEED);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let prompt_proj = (0..model.config.vocab * PROMPT_DIM).map(|_| normal.sample(&mut rng)).collect();
        TinyGenerator { model, prompt_proj, prompt_weight: 1.0 }
    }

    pub fn model(&self) -> &TinyCausalModel<f64> {
        &self.model
    }

    fn prompt_bias(&self, prompt: Option<&PromptEmbedding>) -> Vec<f64> {
        let k = self.model.config.vocab;
        match prompt {
            None => vec![0.0; k],
            Some(p) => matvec(&self.prompt_proj, k, PROMPT_DIM, p.values())
                .into_iter()
                .map(|v| v * self.prompt_weight)
                .collect(),
        }
    }
}

impl TokenGenerator for TinyGenerator {
    fn vocab_size(&self) -> usize {
        self.model.config.vocab
    }

    fn capacity(&self) -> usize {
        self.model.config.context
    }

    fn generate(&self, ctx: &ConditioningContext<'_>, count: usize, params: &SamplingParams) -> Result<Vec<TokenId>> {
        self.check_request(ctx, count, params)?;
        let model = &self.model;
        let bias = self.prompt_bias(ctx.prompt);
        let mut uniforms = ctx.stream.uniforms_from(ctx.prefix.len());
        let mut keys: Vec<Vec<f64>> = Vec::with_capacity(ctx.prefix.len() + count);
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(ctx.prefix.len() + count);

        // logits predicting the next position; with no context only the
        // output bias and the prompt bias remain
        let mut next_logits: Vec<f64> = model.slice(model.layout.out_bias, model.config.vocab).to_vec();
        let push = |tok: TokenId, pos: usize, keys: &mut Vec<Vec<f64>>, values: &mut Vec<Vec<f64>>| {
            let [h0, q, k, v] = model.embed(tok, pos);
            keys.push(k);
            values.push(v);
            let (_, c) = model.attend(&q, keys, values);
            model.head(&h0, &c).3
        };
        for (pos, &tok) in ctx.prefix.iter().enumerate() {
            next_logits = push(tok, pos, &mut keys, &mut values);
        }
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let logits: Vec<f64> = next_logits.iter().zip(&bias).map(|(a, b)| a + b).collect();
            let tok = TokenId(sample_from_logits(&logits, params, uniforms.next_uniform()) as u32);
            out.push(tok);
            if i + 1 < count {
                next_logits = push(tok, ctx.prefix.len() + i, &mut keys, &mut values);
            }
        }
        Ok(out)
    }
}
