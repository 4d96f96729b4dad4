//! Next-crop prediction with token redirection.
//!
//! The first block is generated from the prompt alone. Each vertical step
//! conditions the generator on the last `s - r` rows of the panorama (exactly
//! `p - r*s` tokens, so window plus new rows fill the token budget `p`) and
//! appends `r` new rows. Each horizontal step extends every row by `c` tokens,
//! conditioning row `j` only on its own last `s - c` tokens; rows never see
//! each other within a step, so they may run in parallel.
//!
//! Conditioning windows are read from committed tokens and never rewritten:
//! the panorama only grows by appending.

mod layout;
mod plan;
mod trace;

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{ConditioningContext, PromptEmbedding, SamplingParams, StreamKey, TokenGenerator};
use crate::grid::{hconcat, row_tail, tail_tokens, vconcat, TokenGrid, TokenId};
use crate::image::PixelImage;
use crate::scalar::Scalar;
use crate::tokenizer::{blend_tokens, encode_image, Codebook};

pub use layout::{BlendScope, LayoutSegment, LayoutSpec};
pub use plan::{
    format_stride, iterations_for, parse_stride, stride_to_step, AxisPlan, Direction, ExpansionPlan, Stride,
};
pub use trace::{GenerationTrace, IterationRecord, StepKind, Window};

/// Stream row used by the independent-crop control arm.
const INDEPENDENT_ROW: u32 = u32::MAX;

/// Identifies one scheduler step for stream derivation.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub prompt: Option<&'a PromptEmbedding>,
    pub iteration: u32,
    /// Global row of the grid's first row (non-zero for later bands).
    pub row_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Conditioning {
    /// Redirect the generator onto the trailing window.
    NextCrop,
    /// Fresh block from the prompt only; keep its trailing rows/columns.
    Independent,
}

type Blender<'b> = &'b (dyn Fn(TokenId, TokenId, f64) -> Result<TokenId> + Sync);

/// Per-run prompt and seam settings, indexed by 1-based iteration.
struct RunSpec<'p> {
    prompts: Vec<Option<&'p PromptEmbedding>>,
    seam_blend: Vec<Option<f64>>,
    scope: BlendScope,
    guide: &'p [TokenId],
}

impl<'p> RunSpec<'p> {
    fn single(prompt: Option<&'p PromptEmbedding>) -> Self {
        RunSpec { prompts: vec![prompt], seam_blend: Vec::new(), scope: BlendScope::FullSeam, guide: &[] }
    }

    fn prompt(&self, iteration: usize) -> Option<&'p PromptEmbedding> {
        let i = iteration.saturating_sub(1).min(self.prompts.len() - 1);
        self.prompts[i]
    }

    fn blend_at(&self, iteration: usize) -> Option<f64> {
        self.seam_blend.get(iteration.wrapping_sub(1)).copied().flatten()
    }
}

/// Drives a [`TokenGenerator`] through an [`ExpansionPlan`].
#[derive(Clone, Copy)]
pub struct NextCrop<'g> {
    gen: &'g dyn TokenGenerator,
    params: SamplingParams,
    parallel_rows: bool,
}

impl<'g> NextCrop<'g> {
    pub fn new(gen: &'g dyn TokenGenerator, params: SamplingParams) -> Self {
        NextCrop { gen, params, parallel_rows: true }
    }

    /// Run horizontal rows on the rayon pool (default) or sequentially.
    pub fn parallel_rows(mut self, on: bool) -> Self {
        self.parallel_rows = on;
        self
    }

    pub fn params(&self) -> &SamplingParams {
        &self.params
    }

    fn stream(&self, iteration: u32, row: usize) -> StreamKey {
        StreamKey::new(self.params.seed, iteration, row as u32)
    }

    /// First `side x side` block from prompt conditioning.
    pub fn generate_first_block(&self, prompt: &PromptEmbedding, p: usize) -> Result<TokenGrid> {
        Ok(self.first_block(Some(prompt), &[], p)?.0)
    }

    fn first_block(
        &self,
        prompt: Option<&PromptEmbedding>,
        guide: &[TokenId],
        p: usize,
    ) -> Result<(TokenGrid, IterationRecord)> {
        let side = (p as f64).sqrt().round() as usize;
        if side * side != p || p == 0 {
            return Err(Error::Capacity(format!("block budget {p} is not a perfect square")));
        }
        if p != self.gen.capacity() {
            return Err(Error::Capacity(format!(
                "block budget {p} does not match generator capacity {}",
                self.gen.capacity()
            )));
        }
        if guide.len() > p {
            return Err(Error::Capacity(format!("guide of {} tokens exceeds block of {p}", guide.len())));
        }
        let started = Instant::now();
        let stream = self.stream(0, 0);
        let mut tokens = guide.to_vec();
        if guide.len() < p {
            let ctx = ConditioningContext::new(prompt, guide, stream);
            tokens.extend(self.gen.generate(&ctx, p - guide.len(), &self.params)?);
        }
        let record = IterationRecord {
            iteration: 0,
            kind: StepKind::First,
            band: None,
            grid_rows: 0,
            grid_cols: side,
            windows: vec![Window { row: None, start: 0, end: guide.len() }],
            streams: vec![stream],
            emitted: p - guide.len(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok((TokenGrid::block(side, tokens)?, record))
    }

    /// Appends `rows` new rows; see the module docs for the window rule.
    pub fn expand_vertical(
        &self,
        panorama: &TokenGrid,
        rows: usize,
        step: Step<'_>,
    ) -> Result<(TokenGrid, IterationRecord)> {
        let (new, rec) = self.new_rows(panorama, rows, step, Conditioning::NextCrop)?;
        Ok((vconcat(panorama, &new)?, rec))
    }

    /// Extends every row by `cols` tokens; see the module docs.
    pub fn expand_horizontal(
        &self,
        panorama: &TokenGrid,
        cols: usize,
        step: Step<'_>,
    ) -> Result<(TokenGrid, IterationRecord)> {
        let (new, rec) = self.new_cols(panorama, cols, step, Conditioning::NextCrop)?;
        Ok((hconcat(panorama, &new)?, rec))
    }

    fn independent_block(&self, step: Step<'_>, side: usize) -> Result<TokenGrid> {
        let stream = self.stream(step.iteration, INDEPENDENT_ROW as usize);
        let ctx = ConditioningContext::new(step.prompt, &[], stream);
        TokenGrid::block(side, self.gen.generate(&ctx, side * side, &self.params)?)
    }

    fn new_rows(
        &self,
        pano: &TokenGrid,
        rows: usize,
        step: Step<'_>,
        mode: Conditioning,
    ) -> Result<(TokenGrid, IterationRecord)> {
        let side = pano.cols();
        if rows == 0 || rows >= side {
            return Err(Error::Plan(format!("vertical step {rows} must satisfy 1 <= r < {side}")));
        }
        let keep = side - rows;
        if pano.rows() < keep {
            return Err(Error::Plan(format!("panorama of {} rows is shorter than the {keep}-row window", pano.rows())));
        }
        let started = Instant::now();
        let first_new_row = step.row_offset + pano.rows();
        let (new, window, stream) = match mode {
            Conditioning::NextCrop => {
                let window = tail_tokens(pano, keep * side)?;
                let stream = self.stream(step.iteration, first_new_row);
                let ctx = ConditioningContext::new(step.prompt, window, stream);
                let tokens = self.gen.generate(&ctx, rows * side, &self.params)?;
                let start = pano.len() - window.len();
                (TokenGrid::new(rows, side, tokens)?, Window { row: None, start, end: pano.len() }, stream)
            }
            Conditioning::Independent => {
                let block = self.independent_block(step, side)?;
                let stream = self.stream(step.iteration, INDEPENDENT_ROW as usize);
                let empty = Window { row: None, start: pano.len(), end: pano.len() };
                (block.sub_grid(keep, 0, rows, side)?, empty, stream)
            }
        };
        let record = IterationRecord {
            iteration: step.iteration,
            kind: StepKind::Vertical,
            band: None,
            grid_rows: pano.rows(),
            grid_cols: pano.cols(),
            windows: vec![window],
            streams: vec![stream],
            emitted: new.len(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok((new, record))
    }

    fn new_cols(
        &self,
        pano: &TokenGrid,
        cols: usize,
        step: Step<'_>,
        mode: Conditioning,
    ) -> Result<(TokenGrid, IterationRecord)> {
        let side = pano.rows();
        if cols == 0 || cols > side {
            return Err(Error::Plan(format!("horizontal step {cols} must satisfy 1 <= c <= {side}")));
        }
        let keep = side - cols;
        if pano.cols() < keep {
            return Err(Error::Plan(format!(
                "panorama of {} columns is narrower than the {keep}-column window",
                pano.cols()
            )));
        }
        let started = Instant::now();
        let width = pano.cols();
        let (new, windows, streams) = match mode {
            Conditioning::NextCrop => {
                let one_row = |j: usize| -> Result<Vec<TokenId>> {
                    let window = row_tail(pano, j, keep)?;
                    let ctx =
                        ConditioningContext::new(step.prompt, window, self.stream(step.iteration, step.row_offset + j));
                    self.gen.generate(&ctx, cols, &self.params)
                };
                let rows: Vec<Vec<TokenId>> = if self.parallel_rows {
                    (0..side).into_par_iter().map(one_row).collect::<Result<_>>()?
                } else {
                    (0..side).map(one_row).collect::<Result<_>>()?
                };
                let windows = (0..side)
                    .map(|j| Window { row: Some(j), start: (j + 1) * width - keep, end: (j + 1) * width })
                    .collect();
                let streams = (0..side).map(|j| self.stream(step.iteration, step.row_offset + j)).collect();
                (TokenGrid::new(side, cols, rows.concat())?, windows, streams)
            }
            Conditioning::Independent => {
                let block = self.independent_block(step, side)?;
                let windows =
                    (0..side).map(|j| Window { row: Some(j), start: (j + 1) * width, end: (j + 1) * width }).collect();
                let streams = vec![self.stream(step.iteration, INDEPENDENT_ROW as usize)];
                (block.sub_grid(0, keep, side, cols)?, windows, streams)
            }
        };
        let record = IterationRecord {
            iteration: step.iteration,
            kind: StepKind::Horizontal,
            band: None,
            grid_rows: pano.rows(),
            grid_cols: pano.cols(),
            windows,
            streams,
            emitted: new.len(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok((new, record))
    }

    /// Full run for a single prompt.
    pub fn generate_panorama(
        &self,
        plan: &ExpansionPlan,
        prompt: &PromptEmbedding,
    ) -> Result<(TokenGrid, GenerationTrace)> {
        self.run(plan, &RunSpec::single(Some(prompt)), None, Conditioning::NextCrop)
    }

    /// Control arm: every crop after the first is generated from the prompt
    /// alone on its own stream and cut to the rows/columns the plan adds.
    pub fn baseline_independent(
        &self,
        plan: &ExpansionPlan,
        prompt: &PromptEmbedding,
    ) -> Result<(TokenGrid, GenerationTrace)> {
        self.run(plan, &RunSpec::single(Some(prompt)), None, Conditioning::Independent)
    }

    /// Per-segment prompts; segments carrying a blend factor re-quantize the
    /// seam where they begin with [`blend_tokens`] before it is committed.
    pub fn layout_generate<T: Scalar>(
        &self,
        plan: &ExpansionPlan,
        layout: &LayoutSpec,
        codebook: &Codebook<T>,
    ) -> Result<(TokenGrid, GenerationTrace)> {
        if plan.direction() == Direction::Both {
            return Err(Error::Layout("layouts apply to single-direction plans".into()));
        }
        let n = plan.iterations();
        layout.validate(n)?;
        if codebook.size() != self.gen.vocab_size() {
            return Err(Error::Codebook(format!(
                "codebook of {} entries does not match generator vocabulary {}",
                codebook.size(),
                self.gen.vocab_size()
            )));
        }
        let embeddings =
            layout.segments.iter().map(|s| crate::generators::encode_prompt(&s.prompt)).collect::<Result<Vec<_>>>()?;
        let mut spec = RunSpec {
            prompts: Vec::with_capacity(n),
            seam_blend: Vec::with_capacity(n),
            scope: layout.scope,
            guide: &[],
        };
        for i in 1..=n {
            let seg = layout.segment_of(i).expect("validated layout covers every iteration");
            spec.prompts.push(Some(&embeddings[seg]));
            let segment = &layout.segments[seg];
            spec.seam_blend.push(if segment.start == i && i > 1 { segment.blend } else { None });
        }
        let blender = |prev: TokenId, cur: TokenId, lambda: f64| blend_tokens(prev, cur, T::of(lambda), codebook);
        self.run(plan, &spec, Some(&blender), Conditioning::NextCrop)
    }

    /// Encodes `guide` and prefills it as the leading rows of the first block.
    /// The guide must be exactly one block wide and at most one block tall.
    pub fn image_guided_generate<T: Scalar>(
        &self,
        plan: &ExpansionPlan,
        guide: &PixelImage,
        prompt: Option<&PromptEmbedding>,
        codebook: &Codebook<T>,
    ) -> Result<(TokenGrid, GenerationTrace)> {
        let side = plan.block_side();
        let grid = encode_image(guide, codebook)?;
        if grid.rows() > side || grid.cols() > side {
            return Err(Error::Capacity(format!(
                "guide of {}x{} tokens does not fit a {side}x{side} block",
                grid.rows(),
                grid.cols()
            )));
        }
        if !grid.is_empty() && grid.cols() != side {
            return Err(Error::Shape(format!(
                "guide must span the full block width of {} pixels, got {}",
                side * codebook.patch_size(),
                guide.width()
            )));
        }
        let mut spec = RunSpec::single(prompt);
        let tokens = grid.into_tokens();
        spec.guide = &tokens;
        self.run(plan, &spec, None, Conditioning::NextCrop)
    }

    fn run(
        &self,
        plan: &ExpansionPlan,
        spec: &RunSpec<'_>,
        blender: Option<Blender<'_>>,
        mode: Conditioning,
    ) -> Result<(TokenGrid, GenerationTrace)> {
        let side = plan.block_side();
        let (mut pano, first) = self.first_block(spec.prompt(1), spec.guide, plan.block_tokens())?;
        let mut trace = GenerationTrace { first: Some(first), expansions: Vec::with_capacity(plan.expansion_count()) };
        let mut counter: u32 = 0;

        if let Some(v) = plan.vertical_axis() {
            for i in 2..=v.iterations {
                counter += 1;
                let step = Step { prompt: spec.prompt(i), iteration: counter, row_offset: 0 };
                let (mut new, rec) = self.new_rows(&pano, v.step, step, mode)?;
                if let (Some(lambda), Some(blend)) = (spec.blend_at(i), blender) {
                    new = blend_vertical_seam(&pano, &new, lambda, spec.scope, blend)?;
                }
                pano = vconcat(&pano, &new)?;
                trace.expansions.push(rec);
            }
        }

        if let Some(h) = plan.horizontal_axis() {
            let two_axis = plan.direction() == Direction::Both;
            let bands = pano.rows() / side;
            let mut finished = TokenGrid::empty(0, 0)?;
            for b in 0..bands {
                let mut band = pano.sub_grid(b * side, 0, side, side)?;
                for i in 2..=h.iterations {
                    counter += 1;
                    let step = Step { prompt: spec.prompt(i), iteration: counter, row_offset: b * side };
                    let (mut new, mut rec) = self.new_cols(&band, h.step, step, mode)?;
                    if let (Some(lambda), Some(blend)) = (spec.blend_at(i), blender) {
                        new = blend_horizontal_seam(&band, &new, lambda, spec.scope, blend)?;
                    }
                    band = hconcat(&band, &new)?;
                    if two_axis {
                        rec.band = Some(b);
                    }
                    trace.expansions.push(rec);
                }
                finished = vconcat(&finished, &band)?;
            }
            pano = finished;
        }
        debug_assert_eq!((pano.rows(), pano.cols()), plan.final_shape());
        Ok((pano, trace))
    }
}

fn blend_vertical_seam(
    pano: &TokenGrid,
    new: &TokenGrid,
    lambda: f64,
    scope: BlendScope,
    blend: Blender<'_>,
) -> Result<TokenGrid> {
    let above = pano.row(pano.rows() - 1).expect("panorama has rows");
    let mut out = new.clone();
    match scope {
        BlendScope::FullSeam => {
            for (x, &prev) in above.iter().enumerate() {
                out = out.with_token(0, x, blend(prev, new.get(0, x).unwrap(), lambda)?)?;
            }
        }
        BlendScope::BoundaryPair => {
            let prev = *pano.tokens().last().unwrap();
            out = out.with_token(0, 0, blend(prev, new.get(0, 0).unwrap(), lambda)?)?;
        }
    }
    Ok(out)
}

fn blend_horizontal_seam(
    pano: &TokenGrid,
    new: &TokenGrid,
    lambda: f64,
    scope: BlendScope,
    blend: Blender<'_>,
) -> Result<TokenGrid> {
    let last_col = pano.cols() - 1;
    let mut out = new.clone();
    match scope {
        BlendScope::FullSeam => {
            for j in 0..pano.rows() {
                let prev = pano.get(j, last_col).unwrap();
                out = out.with_token(j, 0, blend(prev, new.get(j, 0).unwrap(), lambda)?)?;
            }
        }
        BlendScope::BoundaryPair => {
            let prev = *pano.tokens().last().unwrap();
            out = out.with_token(0, 0, blend(prev, new.get(0, 0).unwrap(), lambda)?)?;
        }
    }
    Ok(out)
}
