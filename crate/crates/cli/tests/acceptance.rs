//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Timings are wall-clock on the current machine.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nextcrop::formats::{decode_pmdl, decode_ptok, encode_markov, encode_ptok, encode_tiny, ModelFile};
use nextcrop::generators::{
    markov_generator, nll_loss, train_tiny, ConditioningContext, SamplingParams, StreamKey, TinyConfig, TokenGenerator,
};
use nextcrop::metrics::{coh, extract_adjacent_crops, sign_test, ssim, tv_seam, MethodMetrics, SSIM_C1};
use nextcrop::scheduler::{StepKind, Window};
use nextcrop::tokenizer::{blend_boundary, blend_tokens, build_codebook, decode_tokens, encode_image, Codebook};
use nextcrop::{encode_prompt, ExpansionPlan, MarkovGenerator, NextCrop, PixelImage, TinyModel64, TokenGrid, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nextcrop"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = bin().args(args).current_dir(dir).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("nextcrop {args:?} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let s = elapsed.as_secs_f64();
    check(s < limit_s, format!("{detail}; {s:.2}s of {limit_s}s budget"))
}

// ---------------------------------------------------------------- shapes

fn shape_laws() -> Outcome {
    let started = Instant::now();
    let prompt = encode_prompt("pattern").unwrap();
    let mut cases = 0;
    for s in [4usize, 8] {
        let gen = MarkovGenerator::new(16, 1, s * s).unwrap();
        let nc = NextCrop::new(&gen, SamplingParams::with_seed(s as u64));
        for step in 1..s {
            for n in 1..=5 {
                let (v, _) = nc.generate_panorama(&ExpansionPlan::vertical(s, n, step).unwrap(), &prompt).unwrap();
                let (h, _) = nc.generate_panorama(&ExpansionPlan::horizontal(s, n, step).unwrap(), &prompt).unwrap();
                let want = s + (n - 1) * step;
                if (v.rows(), v.cols()) != (want, s) || (h.rows(), h.cols()) != (s, want) {
                    return Err(format!(
                        "s={s} step={step} n={n}: vertical {}x{}, horizontal {}x{}",
                        v.rows(),
                        v.cols(),
                        h.rows(),
                        h.cols()
                    ));
                }
                cases += 2;
            }
        }
    }
    within(started.elapsed(), 10.0, format!("{cases} plans"))
}

// ---------------------------------------------------------------- windows

/// Every request a generator receives, keyed by stream.
struct Recorder<'a> {
    inner: &'a dyn TokenGenerator,
    calls: Mutex<HashMap<StreamKey, Vec<TokenId>>>,
}

impl TokenGenerator for Recorder<'_> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }
    fn generate(
        &self,
        ctx: &ConditioningContext<'_>,
        count: usize,
        params: &SamplingParams,
    ) -> nextcrop::Result<Vec<TokenId>> {
        let previous = self.calls.lock().unwrap().insert(ctx.stream, ctx.prefix.to_vec());
        assert!(previous.is_none(), "stream {} reused", ctx.stream);
        self.inner.generate(ctx, count, params)
    }
}

/// Expected step: kind, grid shape before the step, row offset of the grid
/// inside the finished panorama, and the flat indices each window covers.
struct Expected {
    kind: StepKind,
    rows: usize,
    cols: usize,
    offset: usize,
    windows: Vec<Vec<usize>>,
}

/// Walks the plan cell by cell and keeps the cells a step is allowed to see:
/// the last `s - r` full rows for a vertical step, the last `s - c` cells of
/// each row for a horizontal step.
fn oracle(s: usize, v: Option<(usize, usize)>, h: Option<(usize, usize)>) -> Vec<Expected> {
    let mut out = vec![Expected { kind: StepKind::First, rows: 0, cols: s, offset: 0, windows: vec![vec![]] }];
    let mut height = s;
    if let Some((n, r)) = v {
        for _ in 1..n {
            let mut seen = Vec::new();
            for y in 0..height {
                for x in 0..s {
                    if y + s - r >= height {
                        seen.push(y * s + x);
                    }
                }
            }
            out.push(Expected { kind: StepKind::Vertical, rows: height, cols: s, offset: 0, windows: vec![seen] });
            height += r;
        }
    }
    if let Some((n, c)) = h {
        for band in 0..height / s {
            let mut width = s;
            for _ in 1..n {
                let mut rows = vec![Vec::new(); s];
                for (y, seen) in rows.iter_mut().enumerate() {
                    for x in 0..width {
                        if x + s - c >= width {
                            seen.push(y * width + x);
                        }
                    }
                }
                out.push(Expected {
                    kind: StepKind::Horizontal,
                    rows: s,
                    cols: width,
                    offset: band * s,
                    windows: rows,
                });
                width += c;
            }
        }
    }
    out
}

fn window_indices(w: &Window) -> Vec<usize> {
    (w.start..w.end).collect()
}

fn oracle_windows() -> Outcome {
    let started = Instant::now();
    let prompt = encode_prompt("architecture").unwrap();
    let (mut configs, mut steps, mut mismatches) = (0usize, 0usize, Vec::new());
    for s in 1..=8usize {
        let base = MarkovGenerator::new(16, 1, s * s).unwrap();
        let mut plans = Vec::new();
        for n in 1..=5 {
            for r in 1..s {
                plans.push((ExpansionPlan::vertical(s, n, r).unwrap(), Some((n, r)), None));
            }
            for c in 1..=s {
                plans.push((ExpansionPlan::horizontal(s, n, c).unwrap(), None, Some((n, c))));
            }
        }
        for nv in 1..=4 {
            for r in 1..s {
                if (s + (nv - 1) * r) % s != 0 {
                    continue;
                }
                for nh in 1..=4 {
                    for c in 1..=s {
                        plans.push((ExpansionPlan::both(s, nv, r, nh, c).unwrap(), Some((nv, r)), Some((nh, c))));
                    }
                }
            }
        }
        for (plan, v, h) in plans {
            configs += 1;
            let rec = Recorder { inner: &base, calls: Mutex::new(HashMap::new()) };
            let (grid, trace) = NextCrop::new(&rec, SamplingParams::with_seed(configs as u64))
                .generate_panorama(&plan, &prompt)
                .unwrap();
            let calls = rec.calls.into_inner().unwrap();
            let expected = oracle(s, v, h);
            let got: Vec<_> = trace.first.iter().chain(&trace.expansions).collect();
            let label = format!("s={s} v={v:?} h={h:?}");
            if got.len() != expected.len() {
                mismatches.push(format!("{label}: {} steps traced, oracle has {}", got.len(), expected.len()));
                continue;
            }
            for (e, g) in expected.iter().zip(&got) {
                steps += 1;
                let traced: Vec<Vec<usize>> = g.windows.iter().map(window_indices).collect();
                if g.kind != e.kind || (g.grid_rows, g.grid_cols) != (e.rows, e.cols) || traced != e.windows {
                    mismatches.push(format!("{label}: step {} differs", g.iteration));
                    continue;
                }
                // the generator must have been handed exactly those tokens
                for (window, key) in e.windows.iter().zip(&g.streams) {
                    let want: Vec<TokenId> =
                        window.iter().map(|&i| grid.get(e.offset + i / e.cols, i % e.cols).unwrap()).collect();
                    if calls.get(key) != Some(&want) {
                        mismatches.push(format!("{label}: stream {key} saw other tokens"));
                    }
                }
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(format!("{} mismatches, first: {}", mismatches.len(), mismatches[0]));
    }
    within(started.elapsed(), 30.0, format!("{configs} configurations, {steps} steps, 0 mismatches"))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut first: Option<(Vec<u8>, Vec<u8>)> = None;
    for i in 0..10 {
        let out = format!("run{i}");
        run_cli(&["generate", "--seed", "11", "--out", &out], dir.path())?;
        let png = std::fs::read(dir.path().join(&out).join("panorama.png")).unwrap();
        let ptok = std::fs::read(dir.path().join(&out).join("panorama.ptok")).unwrap();
        match &first {
            None => first = Some((png, ptok)),
            Some((p, t)) if *p == png && *t == ptok => {}
            Some(_) => return Err(format!("run {i} differs from run 0")),
        }
    }
    let gen = MarkovGenerator::new(256, 1, 32 * 32).unwrap();
    let prompt = encode_prompt("crowd").unwrap();
    let plan = ExpansionPlan::horizontal(32, 13, 24).unwrap();
    let cb = build_codebook::<f64>(256, 8, 16, 0).unwrap();
    for seed in 0..3 {
        let nc = NextCrop::new(&gen, SamplingParams::with_seed(seed));
        let (par, _) = nc.parallel_rows(true).generate_panorama(&plan, &prompt).unwrap();
        let (ser, _) = nc.parallel_rows(false).generate_panorama(&plan, &prompt).unwrap();
        let bytes =
            |g: &TokenGrid| (encode_ptok(g, 256).unwrap(), decode_tokens(g, &cb).unwrap().to_png_bytes().unwrap());
        if bytes(&par) != bytes(&ser) {
            return Err(format!("seed {seed}: parallel and serial rows differ"));
        }
    }
    Ok("10 CLI runs byte-identical; parallel == serial rows for 3 seeds".into())
}

// ---------------------------------------------------------------- coherence

fn coherence() -> Outcome {
    let started = Instant::now();
    let (s, step, n, seeds) = (16usize, 12usize, 6usize, 50u64);
    let cb = build_codebook::<f64>(256, 8, 16, 0).unwrap();
    let gen = MarkovGenerator::new(256, 1, s * s).unwrap();
    let prompt = encode_prompt("a seascape at dusk").unwrap();
    let plan = ExpansionPlan::horizontal(s, n, step).unwrap();
    let seam_tv = |g: &TokenGrid| -> f64 {
        let img = decode_tokens(g, &cb).unwrap();
        let pairs = extract_adjacent_crops(&img, s * 16).unwrap();
        pairs.iter().map(|p| tv_seam::<f64>(&img, p.seam_x, 8).unwrap()).sum::<f64>() / pairs.len() as f64
    };
    let (mut next, mut base) = (Vec::new(), Vec::new());
    for seed in 0..seeds {
        let nc = NextCrop::new(&gen, SamplingParams::with_seed(seed));
        next.push(seam_tv(&nc.generate_panorama(&plan, &prompt).unwrap().0));
        base.push(seam_tv(&nc.baseline_independent(&plan, &prompt).unwrap().0));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = next.iter().zip(&base).filter(|(a, b)| a < b).count();
    let p = sign_test(wins, seeds as usize);
    let detail = format!(
        "mean seam TV next-crop {:.5} vs independent {:.5}, wins {wins}/{seeds}, sign test p={p:.2e}",
        mean(&next),
        mean(&base)
    );
    if !(mean(&next) < mean(&base) && p < 0.01) {
        return Err(detail);
    }
    within(started.elapsed(), 120.0, detail)
}

// ---------------------------------------------------------------- strides

fn stride_robustness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[plan]\nblock_side = 16\nwidth = 1024\nheight = 256\n").unwrap();
    let seeds = 20;
    run_cli(
        &[
            "--config",
            "run.toml",
            "ablate",
            "--strides",
            "1,3/4,1/2,1/4,1/8",
            "--seeds",
            &seeds.to_string(),
            "--out",
            "abl",
        ],
        dir.path(),
    )?;
    let mut reader = csv::Reader::from_path(dir.path().join("abl/ablation.csv")).unwrap();
    let mut per_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut aggregates: BTreeMap<String, f64> = BTreeMap::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows += 1;
        let (u, seed, tv): (String, &str, f64) = (rec[1].to_string(), &rec[3], rec[4].parse().unwrap());
        if seed == "mean" {
            aggregates.insert(u, tv);
        } else {
            per_seed.entry(u).or_default().push(tv);
        }
    }
    if per_seed.len() != 5 || per_seed.values().any(|v| v.len() != seeds) || rows != 5 * seeds + 5 {
        return Err(format!("csv has {rows} rows over {} stride groups", per_seed.len()));
    }
    let studied = ["3/4", "1/2", "1/4", "1/8"];
    let means: Vec<f64> = studied.iter().map(|u| aggregates[*u]).collect();
    let spread = means.iter().copied().fold(f64::MIN, f64::max) - means.iter().copied().fold(f64::MAX, f64::min);
    let sd = studied
        .iter()
        .map(|u| {
            let v = &per_seed[*u];
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        })
        .fold(f64::MAX, f64::min);
    check(
        spread < sd,
        format!("spread of mean TV over u in {{3/4,1/2,1/4,1/8}} {spread:.5} vs smallest cross-seed sd {sd:.5}; {rows} csv rows"),
    )
}

// ---------------------------------------------------------------- metrics

fn metric_kernels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_identity: f64 = 0.0;
    for (h, w) in [(11, 11), (32, 48), (64, 64), (7, 20)] {
        let img = PixelImage::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]);
        worst_identity = worst_identity.max((ssim::<f64>(&img, &img).unwrap() - 1.0).abs());
    }
    if worst_identity > 1e-12 {
        return Err(format!("ssim(x,x) off by {worst_identity:e}"));
    }
    for rgb in [[0, 0, 0], [255, 255, 255], [13, 200, 77]] {
        let flat = PixelImage::filled(40, 64, rgb);
        for (x, w) in [(32, 8), (8, 8), (20, 3)] {
            let tv = tv_seam::<f64>(&flat, x, w).unwrap();
            if tv != 0.0 {
                return Err(format!("constant image tv {tv}"));
            }
        }
    }
    // a vertical step from a to b at the seam: one horizontal difference per
    // row and channel, over a band of 2w columns
    for (a, b, w) in [(0u8, 255u8, 8usize), (40, 90, 3), (200, 10, 5)] {
        let img = PixelImage::from_fn(24, 64, |_, x| if x < 32 { [a; 3] } else { [b; 3] });
        let want = f64::from(a.abs_diff(b)) / (255.0 * 2.0 * w as f64);
        let got = tv_seam::<f64>(&img, 32, w).unwrap();
        if (got - want).abs() > 1e-9 {
            return Err(format!("step edge {a}->{b}, w={w}: tv {got} vs {want}"));
        }
    }
    // constant images: variances and covariance vanish, so SSIM is the
    // luminance term (2ab + C1) / (a^2 + b^2 + C1)
    for (a, b) in [(0.0, 255.0), (100.0, 100.0), (30.0, 180.0)] {
        let x = PixelImage::filled(16, 16, [a as u8; 3]);
        let y = PixelImage::filled(16, 16, [b as u8; 3]);
        let want = (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        let got = ssim::<f64>(&x, &y).unwrap();
        if (got - want).abs() > 1e-9 {
            return Err(format!("constant pair {a}/{b}: ssim {got} vs {want}"));
        }
    }
    let methods = vec![
        MethodMetrics::new("best", 0.01, 0.9),
        MethodMetrics::new("mid", 0.02, 0.7),
        MethodMetrics::new("worst", 0.05, 0.4),
    ];
    let scores = coh(&methods, &Default::default()).unwrap();
    check(
        scores[0] == 0.0 && scores[2] == 1.0 && scores[1] > 0.0 && scores[1] < 1.0,
        format!("ssim identity error {worst_identity:.1e}; COH scores {scores:?}"),
    )
}

// ---------------------------------------------------------------- training

fn training() -> Outcome {
    let started = Instant::now();
    let cfg = TinyConfig { context: 6, vocab: 5, model_dim: 4, ff_dim: 6 };
    let model = TinyModel64::new(cfg, 3, 0.5).unwrap();
    let seq: Vec<TokenId> = [0u32, 3, 1, 4, 4, 2].iter().map(|&t| TokenId(t)).collect();
    let (_, grad) = model.loss_and_grad(&seq).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &g) in grad.iter().enumerate() {
        let mut plus = model.clone();
        plus.params_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[i] -= h;
        let numeric = (nll_loss(&plus, &seq).unwrap() - nll_loss(&minus, &seq).unwrap()) / (2.0 * h);
        worst = worst.max((numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-6));
    }
    if worst >= 1e-4 {
        return Err(format!("gradient check max relative error {worst:e}"));
    }
    let k = 256;
    let cfg = TinyConfig { context: 16, vocab: k, model_dim: 16, ff_dim: 32 };
    let model = TinyModel64::new(cfg, 1, 0.1).unwrap();
    let corpus = vec![vec![TokenId(42); 16]; 4];
    let (_, report) = train_tiny(&model, &corpus, 200, 0.05).unwrap();
    let target = 0.05 * (k as f64).ln();
    let detail = format!(
        "gradient max rel err {worst:.1e} over {} params; degenerate corpus loss {:.4} -> {:.4} (target {target:.4}, K={k})",
        model.params().len(),
        report.losses[0],
        report.final_loss()
    );
    if report.final_loss() >= target {
        return Err(detail);
    }
    within(started.elapsed(), 60.0, detail)
}

// ---------------------------------------------------------------- blending

fn blending() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cb = build_codebook::<f64>(256, 8, 16, 3).unwrap();
    for _ in 0..1000 {
        let a = TokenId(rng.random_range(0..256));
        let b = TokenId(rng.random_range(0..256));
        if blend_tokens(a, b, 1.0, &cb).unwrap() != b || blend_tokens(a, b, 0.0, &cb).unwrap() != a {
            return Err(format!("endpoint identity fails for {a:?} -> {b:?}"));
        }
    }
    // midpoint of two entries is equidistant from both
    let tie = Codebook::new(3, 3, 1, vec![5.0, 5.0, 5.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
    if blend_tokens(TokenId(2), TokenId(1), 0.5, &tie).unwrap() != TokenId(1) {
        return Err("tie did not resolve to the lower index".into());
    }
    let swapped = Codebook::new(3, 3, 1, vec![5.0, 5.0, 5.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    if blend_tokens(TokenId(2), TokenId(1), 0.5, &swapped).unwrap() != TokenId(1) {
        return Err("tie did not resolve to the lower index after reordering".into());
    }
    let d = cb.dim();
    for case in 0..1000 {
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let lambda: f64 = rng.random();
        let fwd = blend_boundary(&p, &c, lambda, &cb).unwrap();
        let back = blend_boundary(&c, &p, 1.0 - lambda, &cb).unwrap();
        if fwd != back {
            return Err(format!("swap symmetry fails in case {case} (lambda {lambda})"));
        }
    }
    Ok("1000 endpoint pairs, tie to lowest index, 1000 swap cases".into())
}

// ---------------------------------------------------------------- geometry

fn geometry() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    run_cli(&["generate", "--out", "g"], dir.path())?;
    let png = std::fs::read(dir.path().join("g/panorama.png")).unwrap();
    let img = PixelImage::from_png_bytes(&png).unwrap();
    let (grid, _) = decode_ptok(&std::fs::read(dir.path().join("g/panorama.ptok")).unwrap()).unwrap();
    if (img.height(), img.width()) != (512, 5120) || (grid.rows(), grid.cols()) != (32, 320) {
        return Err(format!("png {}x{}, grid {}x{}", img.height(), img.width(), grid.rows(), grid.cols()));
    }
    run_cli(&["evaluate", "g/panorama.png", "--out", "ev"], dir.path())?;
    let seams = csv::Reader::from_path(dir.path().join("ev/seams.csv")).unwrap().records().count();
    check(seams == 9, format!("512x5120 png from a 32x320 grid; {seams} seam records"))
}

// ---------------------------------------------------------------- round trips

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (rows, cols, k) = (rng.random_range(0..40), rng.random_range(0..40), rng.random_range(2..20000usize));
        let ids: Vec<u32> = (0..rows * cols).map(|_| rng.random_range(0..k as u32)).collect();
        let grid = TokenGrid::from_ids(rows, cols, &ids).unwrap();
        let bytes = encode_ptok(&grid, k).unwrap();
        let (back, k2) = decode_ptok(&bytes).unwrap();
        if back != grid || k2 != k || encode_ptok(&back, k2).unwrap() != bytes {
            return Err(format!("ptok {rows}x{cols} K={k} did not round-trip"));
        }
    }
    for seed in 0..5 {
        let tiny = TinyModel64::new(TinyConfig { context: 9, vocab: 12, model_dim: 6, ff_dim: 10 }, seed, 0.3).unwrap();
        let bytes = encode_tiny(&tiny).unwrap();
        let ModelFile::Tiny(back) = decode_pmdl(&bytes).unwrap() else {
            return Err("tiny decoded as another kind".into());
        };
        if encode_tiny(&back).unwrap() != bytes || back != tiny {
            return Err("tiny pmdl did not round-trip".into());
        }
        let prompt = encode_prompt(&format!("landscape {seed}")).unwrap();
        let chain = markov_generator(64, 1 + seed as usize % 3, Some(&prompt), 64).unwrap();
        let bytes = encode_markov(&chain).unwrap();
        let ModelFile::Markov(back) = decode_pmdl(&bytes).unwrap() else {
            return Err("markov decoded as another kind".into());
        };
        if encode_markov(&back).unwrap() != bytes {
            return Err("markov pmdl did not round-trip".into());
        }
    }
    let mut codebooks = 0;
    for (k, d, q, seed) in [(16, 3, 4, 0), (256, 8, 16, 0), (256, 8, 2, 9), (1024, 12, 3, 4)] {
        let cb = build_codebook::<f64>(k, d, q, seed).unwrap();
        if !cb.has_distinct_colors() {
            continue;
        }
        codebooks += 1;
        let ids: Vec<u32> = (0..10 * 14).map(|_| rng.random_range(0..k as u32)).collect();
        let grid = TokenGrid::from_ids(10, 14, &ids).unwrap();
        let again = encode_image(&decode_tokens(&grid, &cb).unwrap(), &cb).unwrap();
        if again != grid {
            return Err(format!("decode->encode changed a grid for K={k}, d={d}, q={q}"));
        }
    }
    check(codebooks >= 3, format!("200 ptok grids, 10 pmdl files, decode->encode on {codebooks} codebooks"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("shape laws", shape_laws),
        ("oracle window equivalence", oracle_windows),
        ("determinism", determinism),
        ("coherence improvement", coherence),
        ("stride robustness", stride_robustness),
        ("metric kernels", metric_kernels),
        ("training", training),
        ("blending identities", blending),
        ("geometry", geometry),
        ("round trips", round_trips),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {secs:>7.2}s  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<26} {secs:>7.2}s  {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
