use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use softnash_core::config::{ExperimentConfig, Lab};
use softnash_core::controller::{Mode, Softness};
use softnash_core::harness::{run_experiment, BatchResult, Execution};
use softnash_core::trial::{run_trial, TrialConfig};
use softnash_session::ServerConfig;

#[derive(Parser)]
#[command(name = "softnash", version, about = "Soft-Nash shared-control lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mode x seed sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        workers: Workers,
    },
    /// Simulate one trial and print its metrics as JSON.
    Trial {
        /// CLASSIC, NONE, NASH (with --tau) or NASH_<tau>.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        seed: u64,
        /// Write the per-step trace CSV into --out.
        #[arg(long)]
        dump_trace: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// CLASSIC, NASH over a softness grid, and NONE over seeds 1..=n.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,5,8")]
        tau_grid: Vec<f64>,
        #[arg(long, default_value_t = 12)]
        seeds: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Host interactive sessions over WebSocket at /ws.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Static UI bundle served under /.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "sessions")]
        trace_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "NASH_2")]
        mode: String,
    },
}

#[derive(Args)]
struct Workers {
    /// Worker threads; 0 picks one per core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

impl Workers {
    fn execution(&self) -> Execution {
        match self.parallel {
            1 => Execution::Sequential,
            #[cfg(feature = "parallel")]
            n => Execution::Parallel(n),
            #[cfg(not(feature = "parallel"))]
            _ => Execution::Sequential,
        }
    }
}

fn load(config: Option<&Path>) -> Result<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn report(batch: &BatchResult, out: &Path) {
    let failed = batch.rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} trials ({} failed) -> {}", batch.rows.len(), failed, out.display());
    match batch.best_mode {
        Some(m) => println!("best mode by balanced score: {m}"),
        None => println!("best mode by balanced score: none"),
    }
}

fn sweep(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<()> {
    let batch = run_experiment(cfg, exec)?;
    batch.write(out, &cfg.formats)?;
    report(&batch, out);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out, workers } => {
            let cfg = load(Some(&config))?;
            let out = out.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "out".into());
            sweep(&cfg, &out, workers.execution())
        }
        Command::Sweep { tau_grid, seeds, config, out, workers } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let mut cfg = load(config.as_deref())?;
            cfg.modes = std::iter::once(Ok(Mode::Classic))
                .chain(tau_grid.iter().map(|&t| Softness::new(t).map(Mode::Nash)))
                .chain(std::iter::once(Ok(Mode::None)))
                .collect::<Result<_, _>>()?;
            cfg.seeds = (1..=seeds).collect();
            sweep(&cfg, &out, workers.execution())
        }
        Command::Trial { mode, tau, seed, dump_trace, config, out } => {
            let cfg = load(config.as_deref())?;
            let mode = Mode::from_parts(&mode, tau)?;
            let lab = Arc::new(Lab::new(cfg.lab)?);
            let (rec, metrics) = run_trial(&TrialConfig::new(mode, seed, lab))?;
            if dump_trace {
                std::fs::create_dir_all(&out)?;
                let path = out.join(format!("trace_{mode}_seed{seed}.csv"));
                let mut w = BufWriter::new(File::create(&path)?);
                rec.write_csv(&mut w)?;
                w.flush()?;
                log::info!("trace written to {}", path.display());
            }
            let json = serde_json::json!({ "mode": mode, "tau": mode.tau(), "seed": seed, "metrics": metrics });
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(())
        }
        Command::Serve { port, host, config, assets, trace_dir, seed, mode } => {
            let cfg = load(config.as_deref())?;
            let server = ServerConfig {
                lab: Arc::new(Lab::new(cfg.lab)?),
                assets,
                trace_dir,
                seed,
                initial_mode: mode.parse()?,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                softnash_session::serve(listener, server).await?;
                Ok(())
            })
        }
    }
}
