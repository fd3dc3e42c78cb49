use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use risfd::channel::{Scenario, SchemeKind};
use risfd::complexity::{complexity_row, format_table, DesignTemplate};
use risfd::drl::{train, write_trace, Environment};
use risfd::harness::{emit_csv, run_experiment, ExperimentConfig, ExperimentKind, Method, ResultRecord, Scale, Trial};
use risfd::numerics::RngStream;

/// Worker threads for parallel sweeps; defaults to all cores.
const WORKERS_ENV: &str = "RISFD_WORKERS";

#[derive(Parser)]
#[command(name = "risfd", version, about = "RIS-assisted full-duplex sum-rate experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; fields not given take full-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Single,
    Distributed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    S1,
    S2,
    S3,
}

#[derive(Subcommand)]
enum Command {
    /// Sum-rate versus surface position.
    DeploySweep,
    /// DRL and random-phase sum-rate versus number of elements.
    NSweep,
    /// Parameter and operation counts versus number of elements.
    Complexity,
    /// Train one agent and write its per-episode trace.
    TrainOnce {
        /// Total RIS elements; defaults to the first configured value.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Single)]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value_t = ScenarioArg::S1)]
        scenario: ScenarioArg,
    },
}

fn load_config(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path)?;
            c.kind = kind;
            c
        }
        None => ExperimentConfig::preset(
            kind,
            match common.scale {
                ScaleArg::Full => Scale::Full,
                ScaleArg::Desk => Scale::Desk,
            },
        ),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg.resolve()?)
}

fn output_path(cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn write_results(cfg: &ExperimentConfig, records: &[ResultRecord], path: &Path) -> Result<()> {
    emit_csv(records, path)?;
    cfg.write_sidecar(path)?;
    log::info!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run_sweep(common: &Common, kind: ExperimentKind, fallback: &str) -> Result<()> {
    let cfg = load_config(common, kind)?;
    let records = run_experiment(&cfg)?;
    write_results(&cfg, &records, &output_path(&cfg, fallback))
}

fn complexity(common: &Common) -> Result<()> {
    let cfg = load_config(common, ExperimentKind::ComplexitySweep)?;
    let records = run_experiment(&cfg)?;
    let c = &cfg.complexity;
    let proposed = DesignTemplate::proposed(c.hidden[0], c.hidden[1]);
    let rows = (c.n_min..=c.n_max)
        .map(|n| complexity_row(&proposed, &c.baseline, n))
        .collect::<risfd::Result<Vec<_>>>()?;
    print!("{}", format_table(&rows));
    write_results(&cfg, &records, &output_path(&cfg, "complexity.csv"))
}

fn train_once(common: &Common, n: Option<usize>, scheme: SchemeArg, scenario: ScenarioArg) -> Result<()> {
    let cfg = load_config(common, ExperimentKind::NSweep)?;
    let trial = Trial {
        kind: ExperimentKind::NSweep,
        method: Method::Drl,
        scheme: match scheme {
            SchemeArg::Single => SchemeKind::Single,
            SchemeArg::Distributed => SchemeKind::Distributed,
        },
        scenario: match scenario {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
            ScenarioArg::S3 => Scenario::S3,
        },
        n: n.unwrap_or(cfg.elements[0]),
        geometry: cfg.geometry,
        seed: cfg.seeds[0],
    };
    let budget = cfg.budget.to_budget()?;
    let ch = trial.drop(&cfg, 0)?;
    let outcome = train(
        |_| {
            Ok(Environment {
                channel: ch.clone(),
                budget,
                beamforming: cfg.beamforming,
            })
        },
        trial.n,
        &cfg.ddpg,
        &RngStream::new(trial.seed, 1),
    )?;
    let path = output_path(&cfg, "train_once.csv");
    let record = ResultRecord {
        kind: ExperimentKind::NSweep,
        scheme: format!("drl-{}", trial.scheme.label()),
        scenario: trial.scenario.label().into(),
        n: trial.n,
        d01: trial.geometry.d01,
        d02: trial.geometry.d02,
        seed: trial.seed,
        metric: "best_sum_rate".into(),
        value: outcome.best_reward,
        runtime_s: None,
    };
    write_results(&cfg, &[record], &path)?;
    let mut trace = path.into_os_string();
    trace.push(".trace.txt");
    write_trace(&outcome.trace, Path::new(&trace))?;
    println!("best sum-rate {:.6} bps/Hz", outcome.best_reward);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    configure_workers()?;
    match cli.command {
        Command::DeploySweep => run_sweep(&cli.common, ExperimentKind::DeploymentSweep, "deploy_sweep.csv"),
        Command::NSweep => run_sweep(&cli.common, ExperimentKind::NSweep, "n_sweep.csv"),
        Command::Complexity => complexity(&cli.common),
        Command::TrainOnce { n, scheme, scenario } => train_once(&cli.common, n, scheme, scenario),
    }
}
