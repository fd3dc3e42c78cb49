//! Experiment configuration, sweeps over deployments and surface sizes,
//! and CSV output.

mod experiments;
mod output;

pub use experiments::{
    random_phase_baseline, run_complexity_sweep, run_deployment_sweep, run_experiment, run_n_sweep, run_trial,
    Method, Trial,
};
pub use output::{emit_csv, format_csv, parse_csv, read_csv, sort_records, ResultRecord, CSV_HEADER};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamforming::BeamformingOptions;
use crate::channel::{ChannelModel, Geometry, Scenario, SchemeKind};
use crate::complexity::DesignTemplate;
use crate::drl::DdpgConfig;
use crate::error::{Error, Result};
use crate::sysmodel::LinkBudget;

/// Antenna count used when a config leaves `antennas` unset.
pub const DEFAULT_ANTENNAS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DeploymentSweep,
    NSweep,
    ComplexitySweep,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::DeploymentSweep => "deployment-sweep",
            ExperimentKind::NSweep => "n-sweep",
            ExperimentKind::ComplexitySweep => "complexity-sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "deployment-sweep" => Ok(ExperimentKind::DeploymentSweep),
            "n-sweep" => Ok(ExperimentKind::NSweep),
            "complexity-sweep" => Ok(ExperimentKind::ComplexitySweep),
            other => Err(Error::Parse(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Full,
    Desk,
}

/// Which surface moves in a distributed deployment sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    #[default]
    D01,
    D02,
}

/// Channel draws over a training run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// One drop per seed, reused by every episode.
    #[default]
    Fixed,
    /// A fresh drop at the start of every episode.
    PerEpisode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub noise_dbm: f64,
    pub p_max_dbm: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            noise_dbm: -80.0,
            p_max_dbm: 15.0,
        }
    }
}

impl BudgetConfig {
    pub fn to_budget(&self) -> Result<LinkBudget> {
        LinkBudget::from_dbm(self.noise_dbm, self.p_max_dbm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityConfig {
    pub hidden: [usize; 2],
    pub n_min: usize,
    pub n_max: usize,
    pub baseline: DesignTemplate,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            hidden: [100, 45],
            n_min: 20,
            n_max: 60,
            baseline: DesignTemplate::assumed_baseline(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Transmit antennas per node; unset resolves to [`DEFAULT_ANTENNAS`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    pub seeds: Vec<u64>,
    /// Total RIS elements; the deployment sweep uses the first entry.
    pub elements: Vec<usize>,
    /// Surface offsets from S₁ in meters for the deployment sweep.
    pub positions: Vec<f64>,
    pub distributed_axis: SweepAxis,
    pub schemes: Vec<SchemeKind>,
    pub scenarios: Vec<Scenario>,
    /// Phase draws averaged by the random-phase baseline.
    pub random_trials: usize,
    pub channel_mode: ChannelMode,
    /// Adds wall-clock seconds per record; output is then not reproducible.
    pub record_runtime: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub geometry: Geometry,
    pub channel: ChannelModel,
    pub budget: BudgetConfig,
    pub beamforming: BeamformingOptions,
    pub ddpg: DdpgConfig,
    pub complexity: ComplexityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(ExperimentKind::NSweep, Scale::Full)
    }
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let (seeds, ddpg, positions, elements, random_trials) = match scale {
            Scale::Full => (
                (1..=10).collect(),
                DdpgConfig::full_scale(),
                (0..13).map(|k| 1.0 + 4.0 * k as f64).collect(),
                vec![20, 30, 40, 50, 60],
                1000,
            ),
            Scale::Desk => (
                (1..=5).collect(),
                DdpgConfig::desk(),
                vec![1.0, 13.0, 25.0, 37.0, 49.0],
                vec![8, 12, 16],
                100,
            ),
        };
        let elements = match kind {
            ExperimentKind::DeploymentSweep => vec![elements[0]],
            _ => elements,
        };
        let scenarios = match kind {
            ExperimentKind::NSweep => Scenario::ALL.to_vec(),
            _ => vec![Scenario::S1],
        };
        ExperimentConfig {
            kind,
            antennas: None,
            seeds,
            elements,
            positions,
            distributed_axis: SweepAxis::D01,
            schemes: vec![SchemeKind::Single, SchemeKind::Distributed],
            scenarios,
            random_trials,
            channel_mode: ChannelMode::Fixed,
            record_runtime: false,
            output: None,
            geometry: Geometry::default(),
            channel: ChannelModel::default(),
            budget: BudgetConfig::default(),
            beamforming: BeamformingOptions::default(),
            ddpg,
            complexity: ComplexityConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn antennas(&self) -> usize {
        self.antennas.unwrap_or(DEFAULT_ANTENNAS)
    }

    /// Fills defaulted fields and validates. An unset antenna count is logged.
    pub fn resolve(mut self) -> Result<Self> {
        if self.antennas.is_none() && self.kind != ExperimentKind::ComplexitySweep {
            log::warn!(
                "antennas not set in config; using M = {DEFAULT_ANTENNAS}. Set `antennas` explicitly to confirm."
            );
        }
        self.antennas.get_or_insert(DEFAULT_ANTENNAS);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas() == 0 {
            return Err(Error::Config("antennas must be positive".into()));
        }
        self.channel.validate()?;
        self.budget.to_budget()?;
        if self.kind == ExperimentKind::ComplexitySweep {
            let c = &self.complexity;
            if c.n_min == 0 || c.n_min > c.n_max {
                return Err(Error::Config(format!(
                    "complexity range {}..={} is empty or starts at 0",
                    c.n_min, c.n_max
                )));
            }
            return Ok(());
        }
        self.ddpg.validate()?;
        let nonempty = [
            ("seeds", self.seeds.is_empty()),
            ("elements", self.elements.is_empty()),
            ("schemes", self.schemes.is_empty()),
            ("scenarios", self.scenarios.is_empty()),
        ];
        for (name, empty) in nonempty {
            if empty {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
        }
        if self.kind == ExperimentKind::DeploymentSweep && self.positions.is_empty() {
            return Err(Error::Config("positions must not be empty".into()));
        }
        if self.random_trials == 0 {
            return Err(Error::Config("random_trials must be positive".into()));
        }
        Ok(())
    }

    /// Path of the resolved config written next to `csv`.
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        let mut name = csv.as_os_str().to_owned();
        name.push(".config.toml");
        PathBuf::from(name)
    }

    pub fn write_sidecar(&self, csv: &Path) -> Result<()> {
        let path = Self::sidecar_path(csv);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}
