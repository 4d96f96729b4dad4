use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use log::info;
use nextcrop::formats::{decode_pmdl, decode_ptok, encode_ptok, encode_tiny, ModelFile};
use nextcrop::generators::{
    self as gens, encode_prompt, ConditioningContext, MarkovGenerator, StreamKey, TinyCausalModel, TinyConfig,
    TinyGenerator, TokenGenerator,
};
use nextcrop::metrics::{self, coh, evaluate_panorama, AblationTemplate, Extent, MethodMetrics};
use nextcrop::scheduler::{parse_stride, Direction, GenerationTrace, LayoutSpec, NextCrop};
use nextcrop::tokenizer::{build_codebook, decode_tokens};
use nextcrop::{Codebook64, Error, PixelImage, TokenGrid, TokenId};
use serde::Serialize;

use crate::config::{GeneratorKind, RunConfig};
use crate::output::{csv_bytes, write_atomic};

fn codebook(cfg: &RunConfig) -> nextcrop::Result<Codebook64> {
    let c = &cfg.codebook;
    build_codebook(c.size, c.dim, c.patch, c.seed)
}

fn generator(cfg: &RunConfig) -> anyhow::Result<Box<dyn TokenGenerator>> {
    let s = cfg.plan.block_side;
    match cfg.generator.kind {
        GeneratorKind::Markov => {
            let g =
                MarkovGenerator::with_locality(cfg.codebook.size, cfg.generator.order, s * s, cfg.generator.locality)?;
            Ok(Box::new(g))
        }
        GeneratorKind::Tiny => {
            let Some(path) = &cfg.generator.checkpoint else {
                return Err(Error::Config("the tiny generator needs a checkpoint".into()).into());
            };
            let bytes =
                std::fs::read(path).map_err(Error::Io).with_context(|| format!("reading {}", path.display()))?;
            let ModelFile::Tiny(model) = decode_pmdl(&bytes)? else {
                return Err(Error::Config(format!("{} is not a tiny model checkpoint", path.display())).into());
            };
            if model.config().vocab != cfg.codebook.size {
                return Err(Error::Config(format!(
                    "checkpoint vocabulary {} differs from codebook size {}",
                    model.config().vocab,
                    cfg.codebook.size
                ))
                .into());
            }
            Ok(Box::new(TinyGenerator::new(model)))
        }
    }
}

fn write_run(
    cfg: &RunConfig,
    out: &Path,
    grid: &TokenGrid,
    trace: &GenerationTrace,
    cb: &Codebook64,
) -> anyhow::Result<()> {
    let image = decode_tokens(grid, cb)?;
    write_atomic(&out.join("panorama.png"), &image.to_png_bytes()?)?;
    write_atomic(&out.join("panorama.ptok"), &encode_ptok(grid, cb.size())?)?;
    write_atomic(&out.join("trace.log"), trace.to_jsonl().as_bytes())?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    println!(
        "panorama {}x{} tokens -> {}x{} px, {} expansions, {:.1} ms (self-relative timing)",
        grid.rows(),
        grid.cols(),
        image.height(),
        image.width(),
        trace.iterations(),
        trace.total_millis()
    );
    Ok(())
}

pub fn generate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let plan = cfg.expansion_plan()?;
    let cb = codebook(cfg)?;
    let gen = generator(cfg)?;
    let prompt = encode_prompt(&cfg.prompt)?;
    let (grid, trace) = NextCrop::new(gen.as_ref(), cfg.sampling_params()).generate_panorama(&plan, &prompt)?;
    write_run(cfg, out, &grid, &trace, &cb)
}

pub fn layout(cfg: &RunConfig, layout_path: &Path, out: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(layout_path)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", layout_path.display()))?;
    let spec: LayoutSpec =
        toml::from_str(&text).map_err(|e| Error::Layout(format!("{}: {}", layout_path.display(), e.message())))?;
    let plan = cfg.expansion_plan()?;
    let cb = codebook(cfg)?;
    let gen = generator(cfg)?;
    let (grid, trace) = NextCrop::new(gen.as_ref(), cfg.sampling_params()).layout_generate(&plan, &spec, &cb)?;
    write_run(cfg, out, &grid, &trace, &cb)
}

fn read_png(path: &Path) -> anyhow::Result<PixelImage> {
    let bytes = std::fs::read(path).map_err(Error::Io).with_context(|| format!("reading {}", path.display()))?;
    PixelImage::from_png_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn guide(cfg: &RunConfig, guide: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let Some(path) = guide else {
        return generate(cfg, out);
    };
    let image = read_png(path)?;
    let plan = cfg.expansion_plan()?;
    let cb = codebook(cfg)?;
    let gen = generator(cfg)?;
    let prompt = encode_prompt(&cfg.prompt)?;
    let (grid, trace) =
        NextCrop::new(gen.as_ref(), cfg.sampling_params()).image_guided_generate(&plan, &image, Some(&prompt), &cb)?;
    write_run(cfg, out, &grid, &trace, &cb)
}

#[derive(Serialize)]
struct SeamRow<'a> {
    file: &'a str,
    seam_x: usize,
    tv: f64,
    ssim: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    file: &'a str,
    seams: usize,
    tv_mean: f64,
    tv_std: f64,
    ssim_mean: f64,
    ssim_std: f64,
    coh: Option<f64>,
}

fn load_panorama(path: &Path, cb: &Codebook64) -> anyhow::Result<PixelImage> {
    let is_ptok = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ptok"));
    if !is_ptok {
        return read_png(path);
    }
    let bytes = std::fs::read(path).map_err(Error::Io).with_context(|| format!("reading {}", path.display()))?;
    let (grid, k) = decode_ptok(&bytes).with_context(|| format!("decoding {}", path.display()))?;
    if k != cb.size() {
        bail!(Error::Codebook(format!(
            "{} was written for {k} codebook entries, config has {}",
            path.display(),
            cb.size()
        )));
    }
    Ok(decode_tokens(&grid, cb)?)
}

pub fn evaluate(cfg: &RunConfig, inputs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let cb = codebook(cfg)?;
    let mut seams = Vec::new();
    let mut reports = Vec::new();
    let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    for (path, name) in inputs.iter().zip(&names) {
        let mut image = load_panorama(path, &cb)?;
        if image.height() > image.width() {
            image = image.transpose();
        }
        let report = evaluate_panorama::<f64>(&image, cfg.crop_side(), cfg.evaluation.half_width)
            .with_context(|| format!("evaluating {name}"))?;
        for ((&x, &tv), &ss) in report.seams.iter().zip(&report.tv).zip(&report.ssim) {
            seams.push(SeamRow { file: name, seam_x: x, tv, ssim: ss });
        }
        reports.push(report);
    }
    let scores = if reports.len() >= 2 {
        let m: Vec<MethodMetrics> =
            names.iter().zip(&reports).map(|(n, r)| MethodMetrics::new(n.clone(), r.tv_mean, r.ssim_mean)).collect();
        coh(&m, &cfg.evaluation.weights)?.into_iter().map(Some).collect()
    } else {
        vec![None; reports.len()]
    };
    let summary: Vec<SummaryRow> = names
        .iter()
        .zip(&reports)
        .zip(&scores)
        .map(|((n, r), &c)| SummaryRow {
            file: n,
            seams: r.seams.len(),
            tv_mean: r.tv_mean,
            tv_std: r.tv_std,
            ssim_mean: r.ssim_mean,
            ssim_std: r.ssim_std,
            coh: c,
        })
        .collect();
    write_atomic(&out.join("seams.csv"), &csv_bytes(&["file", "seam_x", "tv", "ssim"], &seams)?)?;
    write_atomic(
        &out.join("metrics.csv"),
        &csv_bytes(&["file", "seams", "tv_mean", "tv_std", "ssim_mean", "ssim_std", "coh"], &summary)?,
    )?;
    for row in &summary {
        println!(
            "{}: {} seams, tv {:.6} (sd {:.6}), ssim {:.6} (sd {:.6}){}",
            row.file,
            row.seams,
            row.tv_mean,
            row.tv_std,
            row.ssim_mean,
            row.ssim_std,
            row.coh.map(|c| format!(", coh {c:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn ablate(
    cfg: &RunConfig,
    strides: Option<&str>,
    widths: Option<&str>,
    seeds: u64,
    baseline: bool,
    out: &Path,
) -> anyhow::Result<()> {
    if cfg.mode == Direction::Both {
        bail!(Error::Plan("ablations run along a single axis; use --mode horizontal or vertical".into()));
    }
    if seeds == 0 {
        bail!(Error::Config("--seeds must be at least 1".into()));
    }
    let cb = codebook(cfg)?;
    let gen = generator(cfg)?;
    let q = cfg.codebook.patch;
    let pixels = if cfg.mode == Direction::Vertical { cfg.plan.height } else { cfg.plan.width };
    let extent = match cfg.plan.iterations {
        Some(n) => Extent::Iterations(n),
        None if pixels % q == 0 => Extent::Tokens(pixels / q),
        None => bail!(Error::Plan(format!("{pixels}px is not a multiple of the patch size {q}"))),
    };
    let template = AblationTemplate {
        side: cfg.plan.block_side,
        direction: cfg.mode,
        stride: parse_stride(&cfg.plan.stride)?,
        extent,
        prompt: cfg.prompt.clone(),
        sampling: cfg.sampling_params(),
        half_width: cfg.evaluation.half_width,
        baseline,
        weights: cfg.evaluation.weights,
    };
    let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
    let records = match (strides, widths) {
        (Some(list), None) => {
            let parsed = split_list(list).map(parse_stride).collect::<nextcrop::Result<Vec<_>>>()?;
            metrics::ablate_stride(&parsed, &seed_list, &template, gen.as_ref(), &cb)?
        }
        (None, Some(list)) => {
            let parsed = split_list(list)
                .map(|w| w.parse::<usize>().map_err(|_| Error::Config(format!("bad width {w:?}"))))
                .collect::<nextcrop::Result<Vec<_>>>()?;
            metrics::ablate_size(&parsed, &seed_list, &template, gen.as_ref(), &cb)?
        }
        _ => bail!(Error::Config("pass exactly one of --strides or --widths".into())),
    };
    let mut bytes = Vec::new();
    metrics::write_csv(&records, &mut bytes)?;
    write_atomic(&out.join("ablation.csv"), &bytes)?;
    for r in records.iter().filter(|r| r.is_aggregate()) {
        println!(
            "{:<12} u={:<5} w'={:<6} tv {:.6} ssim {:.6} coh {} wall {:.1} ms",
            r.method,
            r.u,
            r.w_prime,
            r.tv_mean,
            r.ssim_mean,
            r.coh.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
            r.wall_ms
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// PTOK files; each grid is cut into raster-order windows of the context length.
    #[arg(long, value_name = "PATH", num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Number of Markov-sampled sequences to train on instead of files.
    #[arg(long, value_name = "COUNT")]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Context window; defaults to the block size s*s.
    #[arg(long)]
    context: Option<usize>,
    #[arg(long, default_value_t = 16)]
    model_dim: usize,
    #[arg(long, default_value_t = 32)]
    ff_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    init_std: f64,
}

fn corpus_from_files(paths: &[PathBuf], context: usize, vocab: usize) -> anyhow::Result<Vec<Vec<TokenId>>> {
    let mut corpus = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(Error::Io).with_context(|| format!("reading {}", path.display()))?;
        let (grid, k) = decode_ptok(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        if k > vocab {
            bail!(Error::Codebook(format!("{} uses {k} codebook entries, model has {vocab}", path.display())));
        }
        corpus.extend(grid.tokens().chunks(context).filter(|c| c.len() >= 2).map(<[TokenId]>::to_vec));
    }
    Ok(corpus)
}

fn synthetic_corpus(cfg: &RunConfig, count: usize, context: usize) -> anyhow::Result<Vec<Vec<TokenId>>> {
    let gen = MarkovGenerator::with_locality(cfg.codebook.size, cfg.generator.order, context, cfg.generator.locality)?;
    let prompt = encode_prompt(&cfg.prompt)?;
    let params = cfg.sampling_params();
    (0..count)
        .map(|i| {
            let ctx = ConditioningContext::new(Some(&prompt), &[], StreamKey::new(cfg.seed, i as u32, 0));
            Ok(gen.generate(&ctx, context, &params)?)
        })
        .collect()
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

pub fn train_tiny(cfg: &RunConfig, args: &TrainArgs, out: &Path) -> anyhow::Result<()> {
    let context = args.context.unwrap_or(cfg.plan.block_side * cfg.plan.block_side);
    let tiny = TinyConfig { context, vocab: cfg.codebook.size, model_dim: args.model_dim, ff_dim: args.ff_dim };
    let corpus = match (args.synthetic, args.corpus.is_empty()) {
        (Some(n), true) => synthetic_corpus(cfg, n, context)?,
        (None, false) => corpus_from_files(&args.corpus, context, tiny.vocab)?,
        _ => bail!(Error::Config("pass either --corpus files or --synthetic COUNT".into())),
    };
    let model = TinyCausalModel::<f64>::new(tiny, cfg.seed, args.init_std)?;
    info!("training on {} sequences for {} epochs", corpus.len(), args.epochs);
    let (trained, report) = gens::train_tiny(&model, &corpus, args.epochs, args.lr)?;
    write_atomic(&out.join("checkpoint.pmdl"), &encode_tiny(&trained)?)?;
    let rows: Vec<LossRow> = report.losses.iter().enumerate().map(|(epoch, &loss)| LossRow { epoch, loss }).collect();
    write_atomic(&out.join("loss.csv"), &csv_bytes(&["epoch", "loss"], &rows)?)?;
    println!(
        "trained {} sequences, {} epochs: loss {:.6} -> {:.6}",
        corpus.len(),
        args.epochs,
        report.losses[0],
        report.final_loss()
    );
    Ok(())
}
