//! Training-data generation: sweep joint velocity, subject height, subject
//! weight and movement mode, run computed-torque control on the frictionless
//! model for every combination, and record desired trajectory, anthropometry
//! and commanded torque.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anthropometry::Subject;
use crate::control::{Controller, PdGains};
use crate::dynamics::{ModelOptions, RobotModel};
use crate::error::{Error, Result};
use crate::neuralnet::{Dataset, Row, INPUT_WIDTH, OUTPUT_WIDTH, ROW_WIDTH};
use crate::simulation::{simulate, SimConfig};
use crate::trajectory::{generate, MovementMode, RomSpec, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Peak joint velocities, deg/s.
    pub velocities: Vec<f64>,
    /// Subject heights, inches.
    pub heights: Vec<f64>,
    /// Subject weights, pounds.
    pub weights: Vec<f64>,
    pub modes: Vec<MovementMode>,
}

impl SweepGrid {
    /// Full sweep: 10 velocities × 5 heights × 11 weights × 2 modes.
    pub fn full() -> Self {
        SweepGrid {
            velocities: (1..=10).map(|k| 10.0 * k as f64).collect(),
            heights: vec![50.0, 55.0, 60.0, 70.0, 75.0],
            weights: (0..11).map(|k| 150.0 + 10.0 * k as f64).collect(),
            modes: MovementMode::ALL.to_vec(),
        }
    }

    /// 4 velocities × 3 heights × 4 weights × 2 modes spanning the same ranges.
    pub fn desk() -> Self {
        SweepGrid {
            velocities: vec![10.0, 40.0, 70.0, 100.0],
            heights: vec![50.0, 62.0, 75.0],
            weights: vec![150.0, 185.0, 215.0, 250.0],
            modes: MovementMode::ALL.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.velocities.len() * self.heights.len() * self.weights.len() * self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("velocities", &self.velocities), ("heights", &self.heights), ("weights", &self.weights)] {
            if list.is_empty() {
                return Err(Error::domain(format!("sweep grid has no {name}")));
            }
            if let Some(v) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::domain(format!("sweep grid {name} must be positive, got {v}")));
            }
        }
        if self.modes.is_empty() {
            return Err(Error::domain("sweep grid has no movement modes"));
        }
        Ok(())
    }
}

/// One grid point with its trajectory and subject model.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Position in grid order.
    pub index: usize,
    /// deg/s
    pub velocity: f64,
    pub subject: Subject,
    pub mode: MovementMode,
    pub trajectory: Trajectory,
    pub model: RobotModel,
}

impl Scenario {
    pub fn new(
        index: usize,
        velocity: f64,
        subject: Subject,
        mode: MovementMode,
        rom: &RomSpec,
        model_options: &ModelOptions,
    ) -> Result<Self> {
        let trajectory = generate(rom, velocity.to_radians(), mode)?;
        let model = RobotModel::from_subject(&subject, model_options)?;
        Ok(Scenario { index, velocity, subject, mode, trajectory, model })
    }

    pub fn label(&self) -> String {
        format!(
            "#{} {} {} deg/s, {} in, {} lb",
            self.index, self.mode, self.velocity, self.subject.height, self.subject.weight
        )
    }
}

/// Cartesian product of the grid, velocity-major, then height, weight, mode.
pub fn generate_grid(grid: &SweepGrid, rom: &RomSpec, model_options: &ModelOptions) -> Result<Vec<Scenario>> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.len());
    for &v in &grid.velocities {
        for &h in &grid.heights {
            for &w in &grid.weights {
                let subject = Subject::new(h, w)?;
                for &mode in &grid.modes {
                    out.push(Scenario::new(out.len(), v, subject, mode, rom, model_options)?);
                }
            }
        }
    }
    Ok(out)
}

/// Simulates computed-torque control of the frictionless model along the
/// scenario's trajectory; one row per simulation step.
pub fn run_scenario(s: &Scenario, cfg: &SimConfig, gains: &PdGains) -> Result<Dataset> {
    let cfg = SimConfig { friction: false, ..*cfg };
    let controller = Controller::ComputedTorque { gains: *gains, model: Arc::new(s.model.clone()) };
    let log = simulate(&s.model, &controller, &s.trajectory, &cfg)?;
    let rows = log
        .records
        .iter()
        .map(|r| {
            let mut row: Row = [0.0; ROW_WIDTH];
            row[..7].copy_from_slice(r.desired.theta.as_slice());
            row[7..14].copy_from_slice(r.desired.theta_dot.as_slice());
            row[14..21].copy_from_slice(r.desired.theta_ddot.as_slice());
            row[21] = s.subject.height;
            row[22] = s.subject.weight;
            row[INPUT_WIDTH..].copy_from_slice(r.command.total.as_slice());
            row
        })
        .collect();
    Ok(Dataset::new(rows))
}

/// Keeps every `factor`-th row, starting with the first.
pub fn downsample(data: &Dataset, factor: usize) -> Result<Dataset> {
    if factor < 1 {
        return Err(Error::domain("downsample factor must be at least 1"));
    }
    Ok(Dataset::new(data.rows.iter().step_by(factor).copied().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedScenario {
    pub index: usize,
    pub label: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenReport {
    pub scenarios: usize,
    pub raw_rows: usize,
    pub kept_rows: usize,
    pub downsample: usize,
    pub failed: Vec<FailedScenario>,
}

/// Runs every scenario on `workers` threads and concatenates the downsampled
/// rows in scenario order. Diverging scenarios are excluded and reported.
pub fn generate_dataset(
    scenarios: &[Scenario],
    cfg: &SimConfig,
    gains: &PdGains,
    factor: usize,
    workers: usize,
) -> Result<(Dataset, DatagenReport)> {
    if scenarios.is_empty() {
        return Err(Error::domain("no scenarios to run"));
    }
    if factor < 1 {
        return Err(Error::domain("downsample factor must be at least 1"));
    }
    cfg.validate()?;
    gains.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(usize, Dataset)>> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|s| {
                let raw = run_scenario(s, cfg, gains)?;
                Ok((raw.len(), downsample(&raw, factor)?))
            })
            .collect()
    });

    let mut data = Dataset::default();
    let mut report =
        DatagenReport { scenarios: scenarios.len(), raw_rows: 0, kept_rows: 0, downsample: factor, failed: Vec::new() };
    for (s, result) in scenarios.iter().zip(results) {
        match result {
            Ok((raw, kept)) => {
                report.raw_rows += raw;
                data.extend(kept);
            }
            Err(e @ Error::Numerical(_)) => {
                report.failed.push(FailedScenario { index: s.index, label: s.label(), message: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    report.kept_rows = data.len();
    if data.is_empty() {
        return Err(Error::numerical("every scenario failed; no data generated"));
    }
    Ok((data, report))
}

/// Pearson correlation of every input column with every torque column;
/// `out[i][k]` pairs input `i` with output `k`. Constant columns give 0.
pub fn feature_correlations(data: &Dataset) -> Vec<[f64; OUTPUT_WIDTH]> {
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..ROW_WIDTH).map(|c| data.rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let mut cov = vec![[0.0; OUTPUT_WIDTH]; INPUT_WIDTH];
    let mut var = [0.0; ROW_WIDTH];
    for r in &data.rows {
        let d: Vec<f64> = (0..ROW_WIDTH).map(|c| r[c] - mean[c]).collect();
        for c in 0..ROW_WIDTH {
            var[c] += d[c] * d[c];
        }
        for (i, row) in cov.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += d[i] * d[INPUT_WIDTH + k];
            }
        }
    }
    for (i, row) in cov.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            let denom = (var[i] * var[INPUT_WIDTH + k]).sqrt();
            *v = if denom > 0.0 { *v / denom } else { 0.0 };
        }
    }
    cov
}
