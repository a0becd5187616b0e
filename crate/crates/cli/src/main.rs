use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cadp::harness::{
    compare, export_attention, format_csv, format_table, resume_train, run_eval, run_name, run_root, run_train,
    split_pair, Mode, TrainConfig,
};

#[derive(Parser)]
#[command(name = "cadp", version, about = "Multi-agent value decomposition with advice exchange and self-pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a run; the directory defaults to $CADP_RUN_ROOT/<name>.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one setting, `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint inside the run directory.
        #[arg(long, conflicts_with_all = ["config", "set"])]
        resume: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "D")]
        mode: Mode,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump confidence matrices of greedy centralized episodes as CSV.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Last-k averaged evaluation across seeds, grouped by config.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long = "last-k", default_value_t = 1)]
        last_k: usize,
        /// Also write the summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn train(config: Option<PathBuf>, set: Vec<String>, out: Option<PathBuf>, resume: Option<PathBuf>) -> Result<()> {
    if let Some(ckpt) = resume {
        let dir = match out {
            Some(d) => d,
            None => ckpt
                .parent()
                .and_then(|p| p.parent())
                .context("cannot infer the run directory from the checkpoint path; pass --out")?
                .to_path_buf(),
        };
        let trainer = resume_train(&ckpt, &dir)?;
        println!("resumed run finished at step {} in {}", trainer.t_env, dir.display());
        return Ok(());
    }
    let mut pairs = Vec::new();
    if let Some(path) = &config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            pairs.push(split_pair(line)?);
        }
    }
    for s in &set {
        pairs.push(split_pair(s)?);
    }
    let cfg = TrainConfig::from_pairs(&pairs)?;
    let dir = out.unwrap_or_else(|| run_root().join(run_name(&cfg)));
    let trainer = run_train(cfg, &dir)?;
    println!("trained {} steps ({} episodes) into {}", trainer.t_env, trainer.episodes, dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, set, out, resume } => train(config, set, out, resume),
        Command::Eval { checkpoint, mode, episodes, seed } => {
            let s = run_eval(&checkpoint, mode, episodes, seed)?;
            println!(
                "mode {} episodes {} mean_return {:.6} std {:.6} win_rate {:.4} cross_agent_calls {}",
                s.mode, s.episodes, s.mean_return, s.std_return, s.win_rate, s.cross_agent_calls
            );
            if s.mode == Mode::Decentralized && s.cross_agent_calls != 0 {
                bail!("decentralized evaluation performed {} cross-agent calls", s.cross_agent_calls);
            }
            Ok(())
        }
        Command::ExportAttention { checkpoint, episodes, seed, out } => {
            match out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    export_attention(&checkpoint, episodes, seed, &mut w)?;
                    w.flush()?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut w = BufWriter::new(stdout.lock());
                    export_attention(&checkpoint, episodes, seed, &mut w)?;
                    w.flush()?;
                }
            }
            Ok(())
        }
        Command::Compare { dirs, last_k, csv } => {
            let (groups, warnings) = compare(&dirs, last_k)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", format_table(&groups));
            if let Some(path) = csv {
                std::fs::write(&path, format_csv(&groups))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
