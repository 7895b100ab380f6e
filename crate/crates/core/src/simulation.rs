//! Fixed-step closed-loop simulation of the exoskeleton under a controller.
//!
//! The plant state is the stacked `(θ, θ̇)` 14-vector, advanced by classical
//! fourth-order Runge–Kutta. Every step is logged with the desired triplet,
//! the actual state, the torque command split, the friction torque and the
//! mechanical energy.
//!
//! Log CSV columns, in order: `t`, `theta_d1..7`, `dtheta_d1..7`,
//! `ddtheta_d1..7`, `theta1..7`, `dtheta1..7`, `ddtheta1..7`, `tau1..7`,
//! `tau_ff1..7`, `tau_fb1..7`, `tau_fric1..7`, `kinetic`, `potential`,
//! `energy`. Angles are radians, torques N·m, energies J.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::anthropometry::Subject;
use crate::control::{Controller, ControllerKind, Measured, TorqueCommand};
use crate::dynamics::{energy, forward_dynamics, joint_friction, EnergyReport, JointState, RobotModel};
use crate::error::{Error, Result};
use crate::trajectory::{MovementMode, Trajectory};
use crate::{JointVector, DOF};

/// Stacked plant state `(θ, θ̇)`.
pub type PlantState = SVector<f64, { 2 * DOF }>;

/// Any joint speed above this, rad/s, aborts a run.
pub const DIVERGENCE_SPEED: f64 = 1e3;

/// Time appended after the trajectory ends so the closed loop can settle, s.
pub const SETTLE_TIME: f64 = 1.0;

/// One classical Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<const N: usize, F>(mut f: F, x: &SVector<f64, N>, t: f64, dt: f64) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = finite(f(t, x)?, t)?;
    rk4_from(f, k1, x, t, dt)
}

fn finite<const N: usize>(k: SVector<f64, N>, t: f64) -> Result<SVector<f64, N>> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(k)
    } else {
        Err(Error::numerical(format!("non-finite state derivative at t = {t}")))
    }
}

/// Runge–Kutta step with the first stage already evaluated.
fn rk4_from<const N: usize, F>(
    mut f: F,
    k1: SVector<f64, N>,
    x: &SVector<f64, N>,
    t: f64,
    dt: f64,
) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {dt}")));
    }
    let h2 = 0.5 * dt;
    let k2 = finite(f(t + h2, &(x + k1 * h2))?, t + h2)?;
    let k3 = finite(f(t + h2, &(x + k2 * h2))?, t + h2)?;
    let k4 = finite(f(t + dt, &(x + k3 * dt))?, t + dt)?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

pub fn stack(theta: &JointVector, theta_dot: &JointVector) -> PlantState {
    let mut x = PlantState::zeros();
    x.fixed_rows_mut::<DOF>(0).copy_from(theta);
    x.fixed_rows_mut::<DOF>(DOF).copy_from(theta_dot);
    x
}

pub fn unstack(x: &PlantState) -> (JointVector, JointVector) {
    (x.fixed_rows::<DOF>(0).into_owned(), x.fixed_rows::<DOF>(DOF).into_owned())
}

/// When the controller output is recomputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlUpdate {
    /// At every integrator stage: a continuous-time control law.
    #[default]
    EveryStage,
    /// Once per logged step and held over it.
    ZeroOrderHold,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    /// Start on the desired trajectory.
    #[default]
    Matched,
    /// Desired start position plus an offset, at rest.
    Offset {
        offset: JointVector,
    },
    Explicit {
        theta: JointVector,
        theta_dot: JointVector,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Logging and control period, s.
    pub dt: f64,
    /// Run length, s; `None` means trajectory duration plus the settle time.
    pub duration: Option<f64>,
    /// Joint friction in the plant.
    pub friction: bool,
    pub initial: InitialState,
    /// Integrator steps per logged step; raise for the stiff friction model.
    pub substeps: usize,
    pub control_update: ControlUpdate,
    /// Recorded in the log metadata.
    pub seed: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            duration: None,
            friction: false,
            initial: InitialState::Matched,
            substeps: 1,
            control_update: ControlUpdate::EveryStage,
            seed: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d >= self.dt) {
                return Err(Error::Config(format!("duration must be at least dt, got {d}")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_length(&self, trajectory: &Trajectory) -> f64 {
        self.duration.unwrap_or(trajectory.duration + SETTLE_TIME)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub desired: JointState,
    pub actual: JointState,
    pub command: TorqueCommand,
    pub friction: JointVector,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetadata {
    pub format: String,
    pub version: u32,
    pub subject: Subject,
    pub controller: ControllerKind,
    pub trajectory: String,
    pub mode: MovementMode,
    /// rad/s
    pub peak_velocity: f64,
    pub config: SimConfig,
    pub steps: usize,
    pub seed: Option<u64>,
}

pub const LOG_FORMAT: &str = "exodyn-simlog";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub metadata: SimMetadata,
    pub records: Vec<SimRecord>,
}

/// Runs `controller` against `plant` along `trajectory`.
///
/// Records sit on the uniform grid `t_k = k·dt`, `k = 0..=round(duration/dt)`.
/// The logged acceleration is the forward-dynamics output under the logged command.
pub fn simulate(
    plant: &RobotModel,
    controller: &Controller,
    trajectory: &Trajectory,
    cfg: &SimConfig,
) -> Result<SimLog> {
    cfg.validate()?;
    plant.validate()?;
    controller.validate()?;

    let duration = cfg.run_length(trajectory);
    let steps = (duration / cfg.dt).round().max(1.0) as usize;
    let h = cfg.dt / cfg.substeps as f64;
    let start = trajectory.sample(0.0).state;
    let (theta0, theta_dot0) = match cfg.initial {
        InitialState::Matched => (start.theta, start.theta_dot),
        InitialState::Offset { offset } => (start.theta + offset, JointVector::zeros()),
        InitialState::Explicit { theta, theta_dot } => (theta, theta_dot),
    };
    let mut x = stack(&theta0, &theta_dot0);
    check_state(&x, 0.0)?;

    let command = |t: f64, x: &PlantState| -> Result<(TorqueCommand, JointState, JointVector)> {
        let (theta, theta_dot) = unstack(x);
        let desired = trajectory.sample(t).state;
        let cmd = controller.command(t, &desired, &Measured { theta, theta_dot })?;
        let acc = forward_dynamics(&theta, &theta_dot, &cmd.total, plant, cfg.friction)?;
        Ok((cmd, desired, acc))
    };
    let derivative = |x: &PlantState, acc: &JointVector| -> PlantState {
        let mut d = PlantState::zeros();
        d.fixed_rows_mut::<DOF>(0).copy_from(&x.fixed_rows::<DOF>(DOF));
        d.fixed_rows_mut::<DOF>(DOF).copy_from(acc);
        d
    };

    let mut records = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let (cmd, desired, acc) = command(t, &x)?;
        let (theta, theta_dot) = unstack(&x);
        let actual = JointState::new(theta, theta_dot, acc);
        records.push(SimRecord {
            t,
            desired,
            actual,
            command: cmd,
            friction: if cfg.friction { joint_friction(&theta_dot, plant) } else { JointVector::zeros() },
            energy: energy(&actual, plant),
        });
        if k == steps {
            break;
        }
        let mut k1 = Some(derivative(&x, &acc));
        for s in 0..cfg.substeps {
            let ts = t + s as f64 * h;
            let first = match k1.take() {
                Some(k1) => k1,
                None => match cfg.control_update {
                    ControlUpdate::EveryStage => derivative(&x, &command(ts, &x)?.2),
                    ControlUpdate::ZeroOrderHold => derivative(&x, &held_acc(&x, &cmd, plant, cfg)?),
                },
            };
            x = match cfg.control_update {
                ControlUpdate::EveryStage => {
                    rk4_from(|tt, xs| Ok(derivative(xs, &command(tt, xs)?.2)), first, &x, ts, h)?
                }
                ControlUpdate::ZeroOrderHold => {
                    rk4_from(|_, xs| Ok(derivative(xs, &held_acc(xs, &cmd, plant, cfg)?)), first, &x, ts, h)?
                }
            };
            check_state(&x, ts + h)?;
        }
    }

    Ok(SimLog {
        metadata: SimMetadata {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            subject: plant.subject,
            controller: controller.kind(),
            trajectory: trajectory.descriptor(),
            mode: trajectory.mode,
            peak_velocity: trajectory.peak_velocity,
            config: *cfg,
            steps,
            seed: cfg.seed,
        },
        records,
    })
}

fn held_acc(x: &PlantState, cmd: &TorqueCommand, plant: &RobotModel, cfg: &SimConfig) -> Result<JointVector> {
    let (theta, theta_dot) = unstack(x);
    forward_dynamics(&theta, &theta_dot, &cmd.total, plant, cfg.friction)
}

fn check_state(x: &PlantState, t: f64) -> Result<()> {
    let (theta, theta_dot) = unstack(x);
    if let Some((j, w)) = theta_dot.iter().enumerate().find(|(_, w)| !(w.abs() <= DIVERGENCE_SPEED)) {
        return Err(Error::numerical(format!(
            "simulation diverged at t = {t:.6} s: joint {} speed {w:.6e} rad/s exceeds {DIVERGENCE_SPEED:e}",
            j + 1
        )));
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical(format!("simulation produced non-finite angles at t = {t:.6} s")));
    }
    Ok(())
}

const GROUPS: [&str; 10] =
    ["theta_d", "dtheta_d", "ddtheta_d", "theta", "dtheta", "ddtheta", "tau", "tau_ff", "tau_fb", "tau_fric"];

pub fn log_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for g in GROUPS {
        h.extend((1..=DOF).map(|i| format!("{g}{i}")));
    }
    h.extend(["kinetic", "potential", "energy"].map(String::from));
    h
}

pub const LOG_WIDTH: usize = 1 + GROUPS.len() * DOF + 3;

impl SimRecord {
    fn groups(&self) -> [&JointVector; 10] {
        [
            &self.desired.theta,
            &self.desired.theta_dot,
            &self.desired.theta_ddot,
            &self.actual.theta,
            &self.actual.theta_dot,
            &self.actual.theta_ddot,
            &self.command.total,
            &self.command.feedforward,
            &self.command.feedback,
            &self.friction,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        let g = |k: usize| JointVector::from_column_slice(&v[1 + k * DOF..1 + (k + 1) * DOF]);
        let e = &v[1 + GROUPS.len() * DOF..];
        SimRecord {
            t: v[0],
            desired: JointState::new(g(0), g(1), g(2)),
            actual: JointState::new(g(3), g(4), g(5)),
            command: TorqueCommand { total: g(6), feedforward: g(7), feedback: g(8) },
            friction: g(9),
            energy: EnergyReport { kinetic: e[0], potential: e[1], total: e[2] },
        }
    }
}

impl SimLog {
    /// Path of the JSON metadata sidecar belonging to a log CSV.
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    pub fn to_csv(&self) -> String {
        let mut out = log_header().join(",");
        out.push('\n');
        for r in &self.records {
            write!(out, "{}", r.t).unwrap();
            for g in r.groups() {
                for v in g.iter() {
                    write!(out, ",{v}").unwrap();
                }
            }
            writeln!(out, ",{},{},{}", r.energy.kinetic, r.energy.potential, r.energy.total).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str, metadata: SimMetadata, path: &Path) -> Result<Self> {
        let parse_err = |row: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        let mut lines = text.lines().enumerate();
        let expected = log_header().join(",");
        match lines.next() {
            Some((_, h)) if h.trim_end() == expected => {}
            Some(_) => return Err(parse_err(1, 1, "unexpected header".into())),
            None => return Err(parse_err(1, 1, "missing header".into())),
        }
        let mut records = Vec::new();
        let mut values = Vec::with_capacity(LOG_WIDTH);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            values.clear();
            for (c, cell) in line.trim_end().split(',').enumerate() {
                let v: f64 =
                    cell.trim().parse().map_err(|_| parse_err(i + 1, c + 1, format!("not a number: {cell:?}")))?;
                values.push(v);
            }
            if values.len() != LOG_WIDTH {
                return Err(parse_err(
                    i + 1,
                    values.len().min(LOG_WIDTH) + 1,
                    format!("expected {LOG_WIDTH} columns, found {}", values.len()),
                ));
            }
            records.push(SimRecord::from_values(&values));
        }
        Ok(SimLog { metadata, records })
    }

    /// Writes the CSV at `path` and the metadata next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.metadata)?;
        std::fs::write(&side, json).map_err(|e| Error::io(side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let side = Self::sidecar_path(path);
        let meta_text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let metadata: SimMetadata = serde_json::from_str(&meta_text)?;
        if metadata.format != LOG_FORMAT || metadata.version != LOG_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported log format {} v{}",
                side.display(),
                metadata.format,
                metadata.version
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, metadata, path)
    }

    /// Largest absolute tracking error per joint, rad.
    pub fn max_abs_error(&self) -> JointVector {
        self.records.iter().fold(JointVector::zeros(), |acc, r| acc.sup(&(r.desired.theta - r.actual.theta).abs()))
    }

    pub fn final_state(&self) -> Option<&JointState> {
        self.records.last().map(|r| &r.actual)
    }
}
