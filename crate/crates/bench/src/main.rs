use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpadapt_bench::commands;
use dpadapt_bench::config::{self, AccountantConfig, EstimateConfig, ExperimentConfig, GenDataConfig, RunConfig};
use dpadapt_bench::io::{create_dir, write_json};
use dpadapt_bench::{BenchError, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dpadapt", version, about = "Private adaptive optimization experiments")]
struct Cli {
    /// JSON config for the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (CSV + JSON sidecar)
    GenData,
    /// One optimizer run; writes trace.csv and summary.json
    Run,
    /// Grid sweep over methods, ε, stepsizes and clipping bounds
    Sweep,
    /// Private per-coordinate scale estimate of a CSV dataset
    Estimate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// ε achieved by a run with the given sizes and noise scale
    Accountant {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Aggregate a results.csv into curves and a final-loss table
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
    },
    /// Run the Monte-Carlo verifier suite
    Verify {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
}

fn need_config(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| BenchError::config("this subcommand needs --config <path>"))
}

fn out_dir(cli: &Cli, fallback: Option<&Path>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn emit<T: Serialize>(cli: &Cli, file: &str, value: &T) -> Result<()> {
    if let Some(dir) = &cli.out {
        create_dir(dir)?;
        write_json(&dir.join(file), value)?;
    }
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => {
            let mut cfg: GenDataConfig = config::load(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let path = commands::gen_data(&cfg, &out_dir(cli, None))?;
            println!("{}", path.display());
        }
        Command::Run => {
            let mut cfg: RunConfig = config::load(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let summary = commands::run(&cfg, &out_dir(cli, None))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable summary"));
        }
        Command::Sweep => {
            let mut cfg: ExperimentConfig = config::load(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = out_dir(cli, cfg.output.as_deref());
            let summary = commands::sweep_to_dir(&cfg, &out)?;
            for b in &summary.best {
                println!(
                    "{:<20} eps={:<6} stepsize={:<6} B={:<8} median final loss {:.6} (rank {})",
                    b.method,
                    b.epsilon,
                    b.stepsize,
                    b.clip_bound.map_or("-".to_string(), |v| v.to_string()),
                    b.median_final_loss,
                    b.rank
                );
            }
        }
        Command::Estimate { data, r, epsilon, delta } => {
            let mut cfg = match &cli.config {
                Some(p) => config::load::<EstimateConfig>(p)?,
                None => EstimateConfig {
                    data: data.clone().ok_or_else(|| BenchError::config("estimate needs --data or --config"))?,
                    r: 2.0,
                    epsilon: 1.0,
                    delta: 1e-5,
                    seed: 0,
                },
            };
            if let Some(d) = data {
                cfg.data = d.clone();
            }
            cfg.r = r.unwrap_or(cfg.r);
            cfg.epsilon = epsilon.unwrap_or(cfg.epsilon);
            cfg.delta = delta.unwrap_or(cfg.delta);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            emit(cli, "estimate.json", &commands::estimate(&cfg)?)?;
        }
        Command::Accountant { n, batch, steps, scale, epsilon, delta } => {
            let mut cfg = match &cli.config {
                Some(p) => config::load::<AccountantConfig>(p)?,
                None => AccountantConfig {
                    n: n.ok_or_else(|| BenchError::config("accountant needs --n"))?,
                    batch: batch.ok_or_else(|| BenchError::config("accountant needs --batch"))?,
                    steps: steps.ok_or_else(|| BenchError::config("accountant needs --steps"))?,
                    scale: None,
                    epsilon: None,
                    delta: 1e-5,
                },
            };
            cfg.n = n.unwrap_or(cfg.n);
            cfg.batch = batch.unwrap_or(cfg.batch);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.scale = scale.or(cfg.scale);
            cfg.epsilon = epsilon.or(cfg.epsilon);
            cfg.delta = delta.unwrap_or(cfg.delta);
            emit(cli, "accountant.json", &commands::accountant(&cfg)?)?;
        }
        Command::Report { input, resamples } => {
            let out = out_dir(cli, input.parent());
            let summary = commands::report(input, &out, *resamples, cli.seed.unwrap_or(0))?;
            println!("wrote {} curve files and final.csv to {}", summary.curves.len(), out.display());
        }
        Command::Verify { trials } => {
            let reports = commands::lemma_suite(*trials, cli.seed.unwrap_or(0))?;
            emit(cli, "verify.json", &reports)?;
            if reports.iter().any(|r| !r.passed) {
                eprintln!("one or more verifiers failed");
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
