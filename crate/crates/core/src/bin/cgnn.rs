use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cgnn::config::ExperimentConfig;
use cgnn::experiment;
use cgnn::Error;

#[derive(Parser)]
#[command(name = "cgnn", version, about = "Node classification under label noise")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Drop the contrastive term.
    #[arg(long, global = true)]
    no_contr: bool,
    /// Disable label correction.
    #[arg(long, global = true)]
    no_corr: bool,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-partition dataset.
    Synth,
    /// Split and corrupt a dataset's train labels.
    Inject,
    /// Run the multi-seed training protocol.
    Train,
    /// Sweep the correction thresholds.
    Sweep,
    /// Evaluate a checkpoint.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load_config(g: &Global) -> cgnn::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config {
                key: "--config".into(),
                msg: format!("cannot read {}: {e}", path.display()),
            })?;
        cfg.merge_text(&text, path)?;
    }
    cfg.apply_overrides(&g.set)?;
    if let Some(seed) = g.seed {
        cfg.protocol.train.seed = seed;
        cfg.synth.seed = seed;
        cfg.noise.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if g.no_contr {
        cfg.protocol.train.use_contrastive = false;
    }
    if g.no_corr {
        cfg.protocol.train.use_correction = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command, cfg: &ExperimentConfig) -> cgnn::Result<()> {
    match command {
        Command::Synth => {
            experiment::cmd_synth(cfg)?;
        }
        Command::Inject => {
            experiment::cmd_inject(cfg)?;
        }
        Command::Train => {
            let summary = experiment::cmd_train(cfg)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Sweep => {
            let outcome = experiment::cmd_sweep(cfg)?;
            print!("{}", experiment::sweep_csv(&outcome.rows));
            println!("# spread {:.4}", outcome.spread);
        }
        Command::Eval { checkpoint } => {
            let report = experiment::cmd_eval(cfg, &checkpoint)?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli.global) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
