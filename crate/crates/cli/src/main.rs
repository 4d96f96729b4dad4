mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nextcrop::scheduler::Direction;

use crate::config::{GeneratorKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "nextcrop", version, about = "Endless panoramas by next-crop prediction over token grids")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file (or the defaults).
#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// TOML run configuration; see `config --dump-defaults`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "MODE", value_parser = parse_direction)]
    mode: Option<Direction>,
    /// Expansion stride, e.g. 3/4 or 0.5.
    #[arg(long, global = true, value_name = "RATIONAL")]
    stride: Option<String>,
    #[arg(long, global = true, value_name = "PX")]
    width: Option<usize>,
    #[arg(long, global = true, value_name = "PX")]
    height: Option<usize>,
    /// Iterations per active axis, first block included.
    #[arg(long = "n", global = true, value_name = "COUNT")]
    iterations: Option<usize>,
    #[arg(long, global = true, value_name = "TEXT")]
    prompt: Option<String>,
    #[arg(long, global = true, value_name = "KIND", value_parser = parse_generator)]
    generator: Option<GeneratorKind>,
    /// PMDL checkpoint for the tiny generator.
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: nextcrop::Error| e.to_string())
}

fn parse_generator(s: &str) -> Result<GeneratorKind, String> {
    match s {
        "markov" => Ok(GeneratorKind::Markov),
        "tiny" => Ok(GeneratorKind::Tiny),
        other => Err(format!("unknown generator {other:?} (markov|tiny)")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a panorama from a single prompt.
    Generate,
    /// Generate with per-iteration prompts from a layout file.
    Layout {
        #[arg(long, value_name = "PATH")]
        layout: PathBuf,
    },
    /// Generate with an image prefilled into the first block.
    Guide {
        #[arg(long, value_name = "PATH")]
        guide: Option<PathBuf>,
    },
    /// Seam metrics for PNG or PTOK panoramas.
    Evaluate {
        #[arg(required = true, value_name = "FILE")]
        inputs: Vec<PathBuf>,
    },
    /// Stride or size ablation.
    Ablate {
        /// Comma-separated strides, e.g. "1,3/4,1/2,1/4,1/8".
        #[arg(long, conflicts_with = "widths")]
        strides: Option<String>,
        /// Comma-separated widths in pixels.
        #[arg(long)]
        widths: Option<String>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Include the independent-crop control arm.
        #[arg(long)]
        baseline: bool,
    },
    /// Train the tiny causal model.
    TrainTiny(commands::TrainArgs),
    /// Show configuration.
    Config {
        #[arg(long)]
        dump_defaults: bool,
    },
}

impl CommonArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = &self.stride {
            cfg.plan.stride = v.clone();
        }
        if let Some(v) = self.width {
            cfg.plan.width = v;
        }
        if let Some(v) = self.height {
            cfg.plan.height = v;
        }
        if let Some(v) = self.iterations {
            cfg.plan.iterations = Some(v);
        }
        if let Some(v) = &self.prompt {
            cfg.prompt = v.clone();
        }
        if let Some(v) = self.generator {
            cfg.generator.kind = v;
        }
        if let Some(v) = &self.checkpoint {
            cfg.generator.checkpoint = Some(v.clone());
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.common.resolve()?;
    let out = &cli.common.out;
    match cli.command {
        Command::Generate => commands::generate(&cfg, out),
        Command::Layout { layout } => commands::layout(&cfg, &layout, out),
        Command::Guide { guide } => commands::guide(&cfg, guide.as_deref(), out),
        Command::Evaluate { inputs } => commands::evaluate(&cfg, &inputs, out),
        Command::Ablate { strides, widths, seeds, baseline } => {
            commands::ablate(&cfg, strides.as_deref(), widths.as_deref(), seeds, baseline, out)
        }
        Command::TrainTiny(args) => commands::train_tiny(&cfg, &args, out),
        Command::Config { dump_defaults } => {
            let shown = if dump_defaults { RunConfig::default() } else { cfg };
            print!("{}", shown.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = output::classify(&err);
            eprintln!("error[{kind}]: {}", output::one_line(&err));
            ExitCode::from(code)
        }
    }
}
