use std::path::{Path, PathBuf};

use anyhow::Context;
use nextcrop::generators::SamplingParams;
use nextcrop::metrics::{CohWeights, DEFAULT_SEAM_HALF_WIDTH};
use nextcrop::scheduler::{iterations_for, parse_stride, stride_to_step, Direction, ExpansionPlan};
use nextcrop::tokenizer::{DEFAULT_CODEBOOK_SIZE, DEFAULT_PATCH_SIZE};
use nextcrop::Error;
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Written next to every output so a run can be
/// repeated from its own archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Direction,
    pub prompt: String,
    pub plan: PlanConfig,
    pub generator: GeneratorConfig,
    pub sampling: SamplingConfig,
    pub codebook: CodebookConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Block side `s` in tokens.
    pub block_side: usize,
    /// Expansion stride `u`, e.g. "3/4".
    pub stride: String,
    /// Output width in pixels.
    pub width: usize,
    /// Output height in pixels.
    pub height: usize,
    /// Iteration count per active axis; overrides width/height when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Markov,
    Tiny,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub order: usize,
    pub locality: f64,
    /// PMDL checkpoint, required by the tiny generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub size: usize,
    pub dim: usize,
    pub patch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Seam band half-width in pixels.
    pub half_width: usize,
    pub weights: CohWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: Direction::Horizontal,
            prompt: "a seascape at dusk".into(),
            plan: PlanConfig::default(),
            generator: GeneratorConfig::default(),
            sampling: SamplingConfig::default(),
            codebook: CodebookConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { block_side: 32, stride: "3/4".into(), width: 5120, height: 512, iterations: None }
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Markov,
            order: 1,
            locality: nextcrop::generators::DEFAULT_LOCALITY,
            checkpoint: None,
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let d = SamplingParams::default();
        SamplingConfig { temperature: d.temperature, top_k: d.top_k }
    }
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig { size: DEFAULT_CODEBOOK_SIZE, dim: 8, patch: DEFAULT_PATCH_SIZE, seed: 0 }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { half_width: DEFAULT_SEAM_HALF_WIDTH, weights: CohWeights::default() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(Error::Io).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn sampling_params(&self) -> SamplingParams {
        SamplingParams { temperature: self.sampling.temperature, top_k: self.sampling.top_k, seed: self.seed }
    }

    /// Tokens added per iteration.
    pub fn step(&self) -> nextcrop::Result<usize> {
        stride_to_step(self.plan.block_side, parse_stride(&self.plan.stride)?)
    }

    fn axis_iterations(&self, pixels: usize, step: usize) -> nextcrop::Result<usize> {
        if let Some(n) = self.plan.iterations {
            return Ok(n);
        }
        let q = self.codebook.patch;
        if !pixels.is_multiple_of(q) {
            return Err(Error::Plan(format!("{pixels}px is not a multiple of the patch size {q}")));
        }
        let s = self.plan.block_side;
        iterations_for(s, step, pixels / q).map_err(|_| {
            let t = pixels / q;
            let below = if t < s { s } else { s + (t - s) / step * step };
            let above = if t < s { s } else { below + step };
            Error::Plan(format!(
                "{pixels}px unreachable from a {}px block with a {}px step; nearest reachable sizes are {}px and {}px",
                s * q,
                step * q,
                below * q,
                above * q
            ))
        })
    }

    pub fn expansion_plan(&self) -> nextcrop::Result<ExpansionPlan> {
        let s = self.plan.block_side;
        let step = self.step()?;
        match self.mode {
            Direction::Horizontal => ExpansionPlan::horizontal(s, self.axis_iterations(self.plan.width, step)?, step),
            Direction::Vertical => ExpansionPlan::vertical(s, self.axis_iterations(self.plan.height, step)?, step),
            Direction::Both => ExpansionPlan::both(
                s,
                self.axis_iterations(self.plan.height, step)?,
                step,
                self.axis_iterations(self.plan.width, step)?,
                step,
            ),
        }
    }

    /// Crop side used by the seam metrics, in pixels.
    pub fn crop_side(&self) -> usize {
        self.plan.block_side * self.codebook.patch
    }
}
