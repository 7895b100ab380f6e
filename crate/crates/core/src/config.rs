//! Experiment configuration: one TOML file describing every stage of the
//! pipeline. All fields are required so a config file is a complete record of
//! the experiment; the shipped presets hold the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::PdGains;
use crate::datagen::SweepGrid;
use crate::dynamics::{FootLever, FrictionParams, ModelOptions};
use crate::error::{Error, Result};
use crate::neuralnet::{Activation, LmOptions, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::simulation::{ControlUpdate, SimConfig};
use crate::trajectory::{MovementMode, RomSpec};
use crate::DOF;

pub const SCHEMA_VERSION: u32 = 1;

const DESK_PRESET: &str = include_str!("../presets/desk.toml");
const FULL_PRESET: &str = include_str!("../presets/full.toml");

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 2] = ["desk", "full"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    /// Seeds the data split, network initialization, training subsample and noise.
    pub seed: u64,
    /// Worker threads for scenario sweeps; 0 uses every available core.
    pub workers: usize,
    pub model: ModelSection,
    pub rom: RomSection,
    pub grid: SweepGrid,
    pub datagen: DatagenSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
    pub evaluation: EvaluationSection,
    pub robustness: RobustnessSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub foot_lever: FootLever,
    pub rotor_inertia: f64,
    pub gravity: f64,
    pub friction: FrictionParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomSection {
    pub min_deg: [f64; DOF],
    pub max_deg: [f64; DOF],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSection {
    /// Simulation step, s.
    pub dt: f64,
    pub downsample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden layer widths (tanh); input and output widths are fixed.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub max_iterations: usize,
    pub patience: usize,
    pub mse_goal: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_max: f64,
    /// Training rows used per Gauss–Newton system; 0 uses the whole training split.
    pub row_budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kp: f64,
    pub kv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub friction: bool,
    pub substeps: usize,
    pub control_update: ControlUpdate,
}

/// Held-out scenario used to evaluate the trained controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// deg/s
    pub velocity: f64,
    /// inches
    pub height: f64,
    /// pounds
    pub weight: f64,
    pub modes: Vec<MovementMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSection {
    /// deg/s
    pub velocity: f64,
    pub modes: Vec<MovementMode>,
    /// Weight levels, run at `height`.
    pub weights: Vec<f64>,
    pub height: f64,
    /// Height levels, run at `weight`.
    pub heights: Vec<f64>,
    pub weight: f64,
    pub samples: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "desk" => DESK_PRESET,
            "full" => FULL_PRESET,
            other => return Err(Error::Config(format!("unknown preset {other:?}; available: {}", PRESETS.join(", ")))),
        };
        Self::from_toml(text, &PathBuf::from(format!("<preset {name}>")))
    }

    pub fn preset_text(name: &str) -> Option<&'static str> {
        match name {
            "desk" => Some(DESK_PRESET),
            "full" => Some(FULL_PRESET),
            _ => None,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model_options().validate_config()?;
        self.rom()?;
        self.grid.validate()?;
        if self.datagen.downsample < 1 {
            return Err(Error::Config("datagen.downsample must be at least 1".into()));
        }
        self.datagen_sim().validate()?;
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::Config("network.hidden must list positive layer widths".into()));
        }
        if self.training.max_iterations == 0 {
            return Err(Error::Config("training.max_iterations must be positive".into()));
        }
        self.gains()?;
        self.sim_config().validate()?;
        let e = &self.evaluation;
        check_subject("evaluation", e.velocity, e.height, e.weight)?;
        if e.modes.is_empty() {
            return Err(Error::Config("evaluation.modes must not be empty".into()));
        }
        let r = &self.robustness;
        check_subject("robustness", r.velocity, r.height, r.weight)?;
        if r.weights.len() < 2 || r.heights.len() < 2 {
            return Err(Error::Config("robustness needs at least two weights and two heights".into()));
        }
        for &v in r.weights.iter().chain(&r.heights) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("robustness levels must be positive, got {v}")));
            }
        }
        if r.samples < 2 {
            return Err(Error::Config("robustness.samples must be at least 2".into()));
        }
        Ok(())
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            foot_lever: self.model.foot_lever,
            rotor_inertia: self.model.rotor_inertia,
            gravity: self.model.gravity,
            friction: self.model.friction,
        }
    }

    pub fn rom(&self) -> Result<RomSpec> {
        RomSpec::from_degrees(self.rom.min_deg, self.rom.max_deg).map_err(|e| Error::Config(format!("rom: {e}")))
    }

    pub fn gains(&self) -> Result<PdGains> {
        PdGains::uniform(self.controller.kp, self.controller.kv)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![INPUT_WIDTH];
        sizes.extend(&self.network.hidden);
        sizes.push(OUTPUT_WIDTH);
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        let mut a = vec![Activation::Tanh; self.network.hidden.len()];
        a.push(Activation::Linear);
        a
    }

    pub fn lm_options(&self) -> LmOptions {
        let t = &self.training;
        LmOptions {
            max_iterations: t.max_iterations,
            patience: t.patience,
            mse_goal: t.mse_goal,
            lambda_init: t.lambda_init,
            lambda_factor: t.lambda_factor,
            lambda_max: t.lambda_max,
            row_budget: t.row_budget,
            normalize: true,
            seed: self.seed,
        }
    }

    /// Simulation settings for data generation (always frictionless).
    pub fn datagen_sim(&self) -> SimConfig {
        SimConfig { dt: self.datagen.dt, seed: Some(self.seed), ..SimConfig::default() }
    }

    /// Simulation settings for evaluating controllers.
    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            dt: s.dt,
            friction: s.friction,
            substeps: s.substeps,
            control_update: s.control_update,
            seed: Some(self.seed),
            ..SimConfig::default()
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }
}

fn check_subject(section: &str, velocity: f64, height: f64, weight: f64) -> Result<()> {
    for (name, v) in [("velocity", velocity), ("height", height), ("weight", weight)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{section}.{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

impl ModelOptions {
    fn validate_config(&self) -> Result<()> {
        if !(self.rotor_inertia.is_finite() && self.rotor_inertia >= 0.0) {
            return Err(Error::Config(format!("model.rotor_inertia must be nonnegative, got {}", self.rotor_inertia)));
        }
        if !self.gravity.is_finite() {
            return Err(Error::Config("model.gravity must be finite".into()));
        }
        self.friction.validate().map_err(|e| Error::Config(format!("model.friction: {e}")))
    }
}
