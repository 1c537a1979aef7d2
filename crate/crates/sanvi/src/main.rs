use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use sanvi::config::{Command, Estimator, RunConfig};
use sanvi::experiment::{run_bench, run_cluster, run_estimate, run_simulate};
use sanvi::formats::read_text;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Estimate,
    Cluster,
    Bench,
}

/// Latent-position estimation for generalized random dot product graphs.
///
/// Settings in --config are applied after the command-line flags and
/// override them.
#[derive(Debug, Parser)]
#[command(name = "sanvi", version)]
struct Cli {
    command: Cmd,
    /// sbm5, dcsbm2, curve2d or curve3d
    #[arg(long)]
    scenario: Option<String>,
    /// Edge list (estimate, cluster)
    #[arg(long)]
    input: Option<PathBuf>,
    /// `node_id class` file (cluster, optional for estimate)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Graph sizes, comma separated
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Subset of ase, ose, be, sanvi, mesle
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample self-loops in simulated graphs
    #[arg(long)]
    self_loops: bool,
    /// GMM components for `cluster`
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    chain_length: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
}

fn build_config(cli: Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        command: match cli.command {
            Cmd::Simulate => Command::Simulate,
            Cmd::Estimate => Command::Estimate,
            Cmd::Cluster => Command::Cluster,
            Cmd::Bench => Command::Bench,
        },
        input: cli.input,
        labels: cli.labels,
        d: cli.d,
        self_loops: cli.self_loops,
        tau: cli.tau,
        alpha0: cli.alpha0,
        beta1: cli.beta1,
        beta2: cli.beta2,
        batch: cli.batch,
        max_iters: cli.max_iters,
        chain_length: cli.chain_length,
        thin: cli.thin,
        burn_in: cli.burn_in,
        target_accept: cli.target_accept,
        ..RunConfig::default()
    };
    if let Some(s) = cli.scenario {
        cfg.scenario = s.parse()?;
    }
    if !cli.n.is_empty() {
        cfg.n = cli.n;
    }
    if let Some(r) = cli.reps {
        cfg.reps = r;
    }
    if !cli.estimators.is_empty() {
        cfg.estimators = cli.estimators.iter().map(|e| e.parse()).collect::<Result<Vec<Estimator>, _>>()?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(k) = cli.clusters {
        cfg.clusters = k;
    }
    if let Some(path) = cli.config {
        let text = read_text(&path)?;
        cfg.apply_text(&text).with_context(|| format!("reading {}", path.display()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &RunConfig) -> Result<usize> {
    let failed = match cfg.command {
        Command::Simulate => {
            let report = run_simulate(cfg, |rows| {
                for r in rows {
                    match r.sse {
                        Some(sse) => eprintln!("{} n={} rep={} {}: sse {sse:.4}", r.scenario, r.n, r.rep, r.estimator),
                        None => eprintln!("{} n={} rep={} {}: failed: {}", r.scenario, r.n, r.rep, r.estimator, r.error),
                    }
                }
            })?;
            for s in &report.summary {
                println!(
                    "{} n={} {:<6} mean sse {} (se {}) over {} reps",
                    s.scenario,
                    s.n,
                    s.estimator,
                    s.mean_sse.map_or("-".into(), |v| format!("{v:.4}")),
                    s.se_sse.map_or("-".into(), |v| format!("{v:.4}")),
                    s.reps_ok
                );
            }
            report.failures()
        }
        Command::Estimate => {
            let recs = run_estimate(cfg)?;
            for r in &recs {
                match r.seconds {
                    Some(s) => println!("{}: n={} d={} in {s:.2}s", r.estimator, r.n, r.d),
                    None => println!("{}: failed: {}", r.estimator, r.error),
                }
            }
            recs.iter().filter(|r| !r.error.is_empty()).count()
        }
        Command::Cluster => {
            let recs = run_cluster(cfg)?;
            println!("{}", serde_json::to_string_pretty(&recs)?);
            recs.iter().filter(|r| !r.error.is_empty()).count()
        }
        Command::Bench => {
            let report = run_bench(cfg, |r| match r.seconds {
                Some(s) => eprintln!("n={} rep={} {}: {s:.3}s", r.n, r.rep, r.estimator),
                None => eprintln!("n={} rep={} {}: failed: {}", r.n, r.rep, r.estimator, r.error),
            })?;
            for f in &report.fits {
                println!("{}: {:.4e} + {:.4e} n + {:.4e} n^2 (R^2 {:.4})", f.estimator, f.c0, f.c1, f.c2, f.r2);
            }
            report.rows.iter().filter(|r| !r.error.is_empty()).count()
        }
    };
    Ok(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli).and_then(|cfg| run(&cfg));
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{failed} estimator cell(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
