use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsedict::{Error, Result};
use sparsedict_cli::commands::{self, InferMode, ProbeOptions, SynthOptions};
use sparsedict_cli::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "sparsedict", version, about = "Sparse dictionary learning with amortized inference")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// configuration file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// shipped hyperparameter preset, applied before the config file
    #[arg(long, global = true)]
    preset: Option<String>,
    /// override one key, e.g. `--set lambda=0.01` (repeatable, applied last)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads (0 = one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes checkpoints, metrics.csv and run.cfg
    Train,
    /// Codes for a dataset file, written as tensor `codes`
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// encoder output only (default)
        #[arg(long, conflicts_with = "fista")]
        amortized: bool,
        /// FISTA inference started from and pulled toward the encoder output
        #[arg(long)]
        fista: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Denoising table on the configured test set
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "sigma", default_values_t = vec![1.0])]
        sigmas: Vec<f64>,
    },
    /// Decoder atoms as one PGM grid
    Atoms {
        #[arg(long)]
        checkpoint: PathBuf,
        /// grid as ROWSxCOLS
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
    },
    /// Few-shot linear probe on frozen encoder features
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        samples_per_class: usize,
        /// number of consecutive seeds starting at --seed
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// also run the raw-input baselines
        #[arg(long)]
        baselines: bool,
    },
    /// Sparsity/PSNR trade-off over models trained at different lambdas
    Tradeoff {
        /// LAMBDA=CHECKPOINT (repeatable)
        #[arg(long = "model", value_parser = parse_model, required = true)]
        models: Vec<(f64, PathBuf)>,
    },
    /// Planted-dictionary synthetic dataset
    Synth {
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 30)]
        l: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once('x').ok_or("expected ROWSxCOLS")?;
    Ok((r.parse().map_err(|_| "bad row count")?, c.parse().map_err(|_| "bad column count")?))
}

fn parse_model(s: &str) -> std::result::Result<(f64, PathBuf), String> {
    let (l, p) = s.split_once('=').ok_or("expected LAMBDA=PATH")?;
    Ok((l.parse().map_err(|_| format!("bad lambda {l:?}"))?, PathBuf::from(p)))
}

fn resolve(g: &Global) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &g.preset {
        cfg.set("preset", p)?;
    }
    if let Some(path) = &g.config {
        if !path.exists() {
            return Err(Error::Config(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = g.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.global)?;
    if cfg.threads > 0 {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match cli.command {
        Command::Train => {
            commands::cmd_train(&cfg)?;
        }
        Command::Infer {
            checkpoint,
            input,
            fista,
            output,
            ..
        } => {
            let mode = if fista { InferMode::Fista } else { InferMode::Amortized };
            let output = output.unwrap_or_else(|| cfg.out_dir.join("codes.spck"));
            let summary = commands::cmd_infer(&cfg, &checkpoint, &input, mode, &output)?;
            println!("{summary}");
        }
        Command::Denoise { checkpoint, sigmas } => {
            let path = commands::cmd_denoise(&cfg, &checkpoint, &sigmas)?;
            println!("wrote {}", path.display());
        }
        Command::Atoms { checkpoint, grid } => {
            let path = commands::cmd_atoms(&cfg, &checkpoint, grid)?;
            println!("wrote {}", path.display());
        }
        Command::Probe {
            checkpoint,
            samples_per_class,
            seeds,
            epochs,
            lr,
            baselines,
        } => {
            let opts = ProbeOptions {
                samples_per_class,
                seeds,
                epochs,
                lr,
                baselines,
            };
            let (path, _) = commands::cmd_probe(&cfg, checkpoint.as_deref(), &opts)?;
            println!("wrote {}", path.display());
        }
        Command::Tradeoff { models } => {
            let path = commands::cmd_tradeoff(&cfg, &models)?;
            println!("wrote {}", path.display());
        }
        Command::Synth { d, l, k, n, noise } => {
            let (data, planted) = commands::cmd_synth(&cfg, &SynthOptions { d, l, k, n, noise })?;
            println!("wrote {} and {} (seed {})", data.display(), planted.display(), cfg.train.seed);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
