use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{encode_prompt, SamplingParams, TokenGenerator};
use crate::metrics::{coh, evaluate_panorama, CohWeights, MethodMetrics};
use crate::scalar::Scalar;
use crate::scheduler::{format_stride, iterations_for, stride_to_step, Direction, ExpansionPlan, NextCrop, Stride};
use crate::tokenizer::{decode_tokens, Codebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NextCrop,
    Independent,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::NextCrop => "next-crop",
            Method::Independent => "independent",
        })
    }
}

/// Length of the expansion axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Iteration count, first block included.
    Iterations(usize),
    /// Token count along the expansion axis.
    Tokens(usize),
}

/// Settings shared by every run of an ablation.
#[derive(Debug, Clone)]
pub struct AblationTemplate {
    pub side: usize,
    /// `Vertical` or `Horizontal`.
    pub direction: Direction,
    /// Stride used by size ablations.
    pub stride: Stride,
    /// Axis length used by stride ablations.
    pub extent: Extent,
    pub prompt: String,
    /// Temperature and top-k; the seed is replaced per run.
    pub sampling: SamplingParams,
    pub half_width: usize,
    /// Adds the independent-crop arm next to next-crop.
    pub baseline: bool,
    pub weights: CohWeights,
}

/// One CSV row. Aggregate rows carry `seed = "mean"` and average the
/// per-seed values of their group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRecord {
    pub method: String,
    pub u: String,
    pub w_prime: usize,
    pub seed: String,
    pub tv_mean: f64,
    pub ssim_mean: f64,
    pub coh: Option<f64>,
    pub wall_ms: f64,
}

impl AblationRecord {
    pub fn is_aggregate(&self) -> bool {
        self.seed == "mean"
    }
}

struct Config {
    stride: Stride,
    plan: ExpansionPlan,
}

fn plan_for(template: &AblationTemplate, step: usize, extent: Extent) -> Result<ExpansionPlan> {
    let n = match extent {
        Extent::Iterations(n) => n,
        Extent::Tokens(t) => iterations_for(template.side, step, t)?,
    };
    match template.direction {
        Direction::Vertical => ExpansionPlan::vertical(template.side, n, step),
        Direction::Horizontal => ExpansionPlan::horizontal(template.side, n, step),
        Direction::Both => Err(Error::Plan("ablations run along a single axis".into())),
    }
}

/// Seam metrics across expansion strides `u` at a fixed axis length.
pub fn ablate_stride<T: Scalar>(
    strides: &[Stride],
    seeds: &[u64],
    template: &AblationTemplate,
    gen: &dyn TokenGenerator,
    codebook: &Codebook<T>,
) -> Result<Vec<AblationRecord>> {
    let configs = strides
        .iter()
        .map(|&u| {
            let step = stride_to_step(template.side, u)?;
            Ok(Config { stride: u, plan: plan_for(template, step, template.extent)? })
        })
        .collect::<Result<Vec<_>>>()?;
    run(&configs, seeds, template, gen, codebook)
}

/// Seam metrics across output sizes `w'` (pixels along the expansion axis).
pub fn ablate_size<T: Scalar>(
    widths: &[usize],
    seeds: &[u64],
    template: &AblationTemplate,
    gen: &dyn TokenGenerator,
    codebook: &Codebook<T>,
) -> Result<Vec<AblationRecord>> {
    let q = codebook.patch_size();
    let step = stride_to_step(template.side, template.stride)?;
    let configs = widths
        .iter()
        .map(|&w| {
            if w % q != 0 {
                return Err(Error::Plan(format!("width {w} is not a multiple of the patch size {q}")));
            }
            let plan = plan_for(template, step, Extent::Tokens(w / q)).map_err(|e| match e {
                Error::Plan(_) => unreachable_width(w, q, template.side, step),
                other => other,
            })?;
            Ok(Config { stride: template.stride, plan })
        })
        .collect::<Result<Vec<_>>>()?;
    run(&configs, seeds, template, gen, codebook)
}

fn unreachable_width(w: usize, q: usize, side: usize, step: usize) -> Error {
    let tokens = w / q;
    let below = if tokens < side { side } else { side + (tokens - side) / step * step };
    let above = if tokens < side { side } else { below + step };
    Error::Plan(format!(
        "width {w}px ({tokens} tokens) unreachable from block {side} with step {step}; nearest reachable widths are {}px and {}px",
        below * q,
        above * q
    ))
}

fn run<T: Scalar>(
    configs: &[Config],
    seeds: &[u64],
    template: &AblationTemplate,
    gen: &dyn TokenGenerator,
    codebook: &Codebook<T>,
) -> Result<Vec<AblationRecord>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let prompt = encode_prompt(&template.prompt)?;
    let methods: &[Method] =
        if template.baseline { &[Method::NextCrop, Method::Independent] } else { &[Method::NextCrop] };
    let crop_side = template.side * codebook.patch_size();

    // groups[config][method] -> per-seed (tv, ssim, ms)
    let mut groups = Vec::with_capacity(configs.len());
    for cfg in configs {
        let mut per_method = Vec::with_capacity(methods.len());
        for &method in methods {
            let mut runs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let params = SamplingParams { seed, ..template.sampling };
                let engine = NextCrop::new(gen, params);
                let started = Instant::now();
                let (grid, _) = match method {
                    Method::NextCrop => engine.generate_panorama(&cfg.plan, &prompt)?,
                    Method::Independent => engine.baseline_independent(&cfg.plan, &prompt)?,
                };
                let ms = started.elapsed().as_secs_f64() * 1e3;
                let mut image = decode_tokens(&grid, codebook)?;
                if template.direction == Direction::Vertical {
                    image = image.transpose();
                }
                let report = evaluate_panorama::<T>(&image, crop_side, template.half_width)?;
                log::debug!("{method} u={} seed={seed}: tv {:.5}", format_stride(&cfg.stride), report.tv_mean);
                runs.push((report.tv_mean, report.ssim_mean, ms));
            }
            per_method.push(runs);
        }
        groups.push(per_method);
    }

    let q = codebook.patch_size();
    let mut records = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let (rows, cols) = cfg.plan.final_shape();
        let w_prime = if template.direction == Direction::Vertical { rows } else { cols } * q;
        for (mi, &method) in methods.iter().enumerate() {
            let runs = &groups[ci][mi];
            for (si, &seed) in seeds.iter().enumerate() {
                records.push(AblationRecord {
                    method: method.to_string(),
                    u: format_stride(&cfg.stride),
                    w_prime,
                    seed: seed.to_string(),
                    tv_mean: runs[si].0,
                    ssim_mean: runs[si].1,
                    coh: None,
                    wall_ms: runs[si].2,
                });
            }
            let n = runs.len() as f64;
            records.push(AblationRecord {
                method: method.to_string(),
                u: format_stride(&cfg.stride),
                w_prime,
                seed: "mean".into(),
                tv_mean: runs.iter().map(|r| r.0).sum::<f64>() / n,
                ssim_mean: runs.iter().map(|r| r.1).sum::<f64>() / n,
                coh: None,
                wall_ms: runs.iter().map(|r| r.2).sum::<f64>() / n,
            });
        }
    }
    fill_coh(&mut records, &template.weights)?;
    Ok(records)
}

/// Normalizes within each seed (and within the aggregate rows) across all
/// configurations and methods. Groups with a single member keep `coh` empty.
fn fill_coh(records: &mut [AblationRecord], weights: &CohWeights) -> Result<()> {
    let mut keys: Vec<String> = records.iter().map(|r| r.seed.clone()).collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].seed == key).collect();
        if idx.len() < 2 {
            continue;
        }
        let metrics: Vec<MethodMetrics> = idx
            .iter()
            .map(|&i| MethodMetrics::new(records[i].method.clone(), records[i].tv_mean, records[i].ssim_mean))
            .collect();
        for (&i, c) in idx.iter().zip(coh(&metrics, weights)?) {
            records[i].coh = Some(c);
        }
    }
    Ok(())
}

/// Writes records with a header row in the fixed column order.
pub fn write_csv<W: Write>(records: &[AblationRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["method", "u", "w_prime", "seed", "tv_mean", "ssim_mean", "coh", "wall_ms"]).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
