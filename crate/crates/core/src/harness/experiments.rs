use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use crate::beamforming::{optimize_beamformers, BeamformingOptions};
use crate::channel::{realize_drop, ChannelRealization, DeploymentScheme, Geometry, Scenario, SchemeKind};
use crate::complexity::{complexity_row, DesignTemplate, Metric};
use crate::drl::{train, Environment};
use crate::error::Result;
use crate::numerics::RngStream;
use crate::sysmodel::{LinkBudget, PhaseConfig};

use super::output::{sort_records, ResultRecord};
use super::{ChannelMode, ExperimentConfig, ExperimentKind, SweepAxis};

const STREAM_CHANNEL: u64 = 0;
const STREAM_AGENT: u64 = 1;
const STREAM_RANDOM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Drl,
    Random,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Drl => "drl",
            Method::Random => "random",
        }
    }
}

/// One independent unit of work.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trial {
    pub kind: ExperimentKind,
    pub method: Method,
    pub scheme: SchemeKind,
    pub scenario: Scenario,
    pub n: usize,
    pub geometry: Geometry,
    pub seed: u64,
}

impl Trial {
    fn deployment(&self) -> Result<DeploymentScheme> {
        DeploymentScheme::new(self.scheme, self.n)
    }

    /// Channel drop for `episode`; schemes sharing a seed share the stream.
    pub fn drop(&self, cfg: &ExperimentConfig, episode: usize) -> Result<ChannelRealization> {
        let mut rng = RngStream::new(self.seed, STREAM_CHANNEL).derive(STREAM_CHANNEL, episode as u64);
        realize_drop(
            &mut rng,
            &cfg.channel,
            &self.geometry,
            &self.deployment()?,
            self.scenario,
            cfg.antennas(),
        )
    }

    fn scheme_label(&self) -> String {
        match self.kind {
            ExperimentKind::NSweep => format!("{}-{}", self.method.label(), self.scheme.label()),
            _ => self.scheme.label().to_string(),
        }
    }

    fn record(&self, metric: &str, value: f64, runtime_s: Option<f64>) -> ResultRecord {
        ResultRecord {
            kind: self.kind,
            scheme: self.scheme_label(),
            scenario: self.scenario.label().to_string(),
            n: self.n,
            d01: self.geometry.d01,
            d02: self.geometry.d02,
            seed: self.seed,
            metric: metric.to_string(),
            value,
            runtime_s,
        }
    }
}

/// Mean sum-rate over `trials` uniform phase draws, beamformers optimized per draw.
pub fn random_phase_baseline(
    ch: &ChannelRealization,
    budget: &LinkBudget,
    bf: &BeamformingOptions,
    rng: &mut RngStream,
    trials: usize,
) -> Result<f64> {
    if trials == 0 {
        return Err(crate::Error::Config("random baseline needs at least one trial".into()));
    }
    let n = ch.total_elements();
    let mut total = 0.0;
    for _ in 0..trials {
        let theta = PhaseConfig::new((0..n).map(|_| rng.uniform(-PI, PI)));
        total += optimize_beamformers(ch, &theta, budget, bf)?.sum_rate;
    }
    Ok(total / trials as f64)
}

/// Best DRL sum-rate or random-phase mean for one trial.
pub fn run_trial(cfg: &ExperimentConfig, trial: &Trial) -> Result<f64> {
    let budget = cfg.budget.to_budget()?;
    match trial.method {
        Method::Random => {
            let ch = trial.drop(cfg, 0)?;
            let mut rng = RngStream::new(trial.seed, STREAM_RANDOM);
            random_phase_baseline(&ch, &budget, &cfg.beamforming, &mut rng, cfg.random_trials)
        }
        Method::Drl => {
            let fixed = match cfg.channel_mode {
                ChannelMode::Fixed => Some(trial.drop(cfg, 0)?),
                ChannelMode::PerEpisode => None,
            };
            let factory = |episode: usize| -> Result<Environment> {
                let channel = match &fixed {
                    Some(ch) => ch.clone(),
                    None => trial.drop(cfg, episode)?,
                };
                Ok(Environment {
                    channel,
                    budget,
                    beamforming: cfg.beamforming,
                })
            };
            let rng = RngStream::new(trial.seed, STREAM_AGENT);
            Ok(train(factory, trial.n, &cfg.ddpg, &rng)?.best_reward)
        }
    }
}

fn run_trials(cfg: &ExperimentConfig, trials: &[Trial], metric: &str) -> Result<Vec<ResultRecord>> {
    let mut records = trials
        .par_iter()
        .map(|t| {
            let start = Instant::now();
            let value = run_trial(cfg, t)?;
            let runtime = cfg.record_runtime.then(|| start.elapsed().as_secs_f64());
            log::info!(
                "{} {} {} N={} d01={} d02={} seed={}: {value:.4}",
                t.method.label(),
                t.scheme.label(),
                t.scenario.label(),
                t.n,
                t.geometry.d01,
                t.geometry.d02,
                t.seed
            );
            Ok(t.record(metric, value, runtime))
        })
        .collect::<Result<Vec<_>>>()?;
    sort_records(&mut records);
    Ok(records)
}

/// Trains every (scheme, position, scenario, seed); one `best_sum_rate` record each.
pub fn run_deployment_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let n = cfg.elements[0];
    let mut trials = Vec::new();
    for &scheme in &cfg.schemes {
        for &p in &cfg.positions {
            let mut geometry = cfg.geometry;
            match (scheme, cfg.distributed_axis) {
                (SchemeKind::Distributed, SweepAxis::D02) => geometry.d02 = p,
                _ => geometry.d01 = p,
            }
            for &scenario in &cfg.scenarios {
                for &seed in &cfg.seeds {
                    trials.push(Trial {
                        kind: ExperimentKind::DeploymentSweep,
                        method: Method::Drl,
                        scheme,
                        scenario,
                        n,
                        geometry,
                        seed,
                    });
                }
            }
        }
    }
    run_trials(cfg, &trials, "best_sum_rate")
}

/// DRL and random-phase sum-rates for every (N, scenario, scheme, seed).
pub fn run_n_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let mut trials = Vec::new();
    for &n in &cfg.elements {
        for &scenario in &cfg.scenarios {
            for &scheme in &cfg.schemes {
                for method in [Method::Drl, Method::Random] {
                    for &seed in &cfg.seeds {
                        trials.push(Trial {
                            kind: ExperimentKind::NSweep,
                            method,
                            scheme,
                            scenario,
                            n,
                            geometry: cfg.geometry,
                            seed,
                        });
                    }
                }
            }
        }
    }
    run_trials(cfg, &trials, "sum_rate")
}

/// Proposed counts and reductions against the configured baseline for each N.
pub fn run_complexity_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let c = &cfg.complexity;
    let proposed = DesignTemplate::proposed(c.hidden[0], c.hidden[1]);
    let mut records = Vec::new();
    for n in c.n_min..=c.n_max {
        let row = complexity_row(&proposed, &c.baseline, n)?;
        let record = |metric: String, value: f64| ResultRecord {
            kind: ExperimentKind::ComplexitySweep,
            scheme: "proposed".into(),
            scenario: String::new(),
            n,
            d01: 0.0,
            d02: 0.0,
            seed: 0,
            metric,
            value,
            runtime_s: None,
        };
        for (i, m) in Metric::ALL.into_iter().enumerate() {
            records.push(record(format!("C_{}", m.label()), row.proposed.get(m) as f64));
            records.push(record(format!("reduction_{}", m.label()), row.reduction[i]));
        }
    }
    sort_records(&mut records);
    Ok(records)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    match cfg.kind {
        ExperimentKind::DeploymentSweep => run_deployment_sweep(cfg),
        ExperimentKind::NSweep => run_n_sweep(cfg),
        ExperimentKind::ComplexitySweep => run_complexity_sweep(cfg),
    }
}
