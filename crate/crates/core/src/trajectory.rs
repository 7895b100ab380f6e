//! Rest-to-rest range-of-motion sweeps used as reference trajectories.
//!
//! Every joint travels min → max → min with two cycloidal segments, so
//! position, velocity and acceleration are available in closed form and the
//! velocity vanishes at every segment boundary.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::JointState;
use crate::error::{Error, Result};
use crate::{JointVector, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementMode {
    /// Joints move one after another, one at a time.
    Sequential,
    /// All joints start together.
    Simultaneous,
}

impl MovementMode {
    pub const ALL: [MovementMode; 2] = [MovementMode::Sequential, MovementMode::Simultaneous];

    pub fn as_str(&self) -> &'static str {
        match self {
            MovementMode::Sequential => "sequential",
            MovementMode::Simultaneous => "simultaneous",
        }
    }
}

impl std::fmt::Display for MovementMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Joint ranges of motion, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RomSpec {
    pub min: JointVector,
    pub max: JointVector,
}

impl RomSpec {
    pub fn from_degrees(min: [f64; DOF], max: [f64; DOF]) -> Result<Self> {
        let rom = RomSpec {
            min: JointVector::from(min.map(f64::to_radians)),
            max: JointVector::from(max.map(f64::to_radians)),
        };
        rom.validate()?;
        Ok(rom)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..DOF {
            if !(self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i]) {
                return Err(Error::domain(format!("joint {}: ROM minimum must be below maximum", i + 1)));
            }
        }
        Ok(())
    }
}

impl Default for RomSpec {
    /// Hip abd/add, hip flex/ext, hip rotation, knee flexion, knee rotation,
    /// ankle dorsi/plantar flexion, ankle inversion/eversion.
    fn default() -> Self {
        RomSpec::from_degrees(
            [-30.0, -20.0, -35.0, 0.0, -10.0, -40.0, -30.0],
            [30.0, 100.0, 35.0, 120.0, 10.0, 20.0, 20.0],
        )
        .expect("default ROM is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Sweep {
    start: f64,
    /// Duration of each of the two segments.
    leg: f64,
    lo: f64,
    hi: f64,
}

impl Sweep {
    fn end(&self) -> f64 {
        self.start + 2.0 * self.leg
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let tau = t - self.start;
        if tau <= 0.0 || tau >= 2.0 * self.leg {
            return (self.lo, 0.0, 0.0);
        }
        if tau < self.leg {
            cycloid(self.lo, self.hi, self.leg, tau)
        } else {
            cycloid(self.hi, self.lo, self.leg, tau - self.leg)
        }
    }
}

/// Cycloidal rest-to-rest motion from `a` to `b` over `duration`.
fn cycloid(a: f64, b: f64, duration: f64, tau: f64) -> (f64, f64, f64) {
    let u = tau / duration;
    let (s, c) = (TAU * u).sin_cos();
    let span = b - a;
    (a + span * (u - s / TAU), span / duration * (1.0 - c), span / (duration * duration) * TAU * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: MovementMode,
    /// rad/s
    pub peak_velocity: f64,
    /// Pause between consecutive joints in sequential mode, s.
    pub dwell: f64,
    pub duration: f64,
    sweeps: [Sweep; DOF],
}

/// Result of sampling; `clamped` marks a request outside `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: JointState,
    pub clamped: bool,
}

pub fn generate(rom: &RomSpec, peak_velocity: f64, mode: MovementMode) -> Result<Trajectory> {
    generate_with_dwell(rom, peak_velocity, mode, 0.0)
}

pub fn generate_with_dwell(rom: &RomSpec, peak_velocity: f64, mode: MovementMode, dwell: f64) -> Result<Trajectory> {
    rom.validate()?;
    if !(peak_velocity.is_finite() && peak_velocity > 0.0) {
        return Err(Error::domain(format!("peak velocity must be positive, got {peak_velocity}")));
    }
    if !(dwell.is_finite() && dwell >= 0.0) {
        return Err(Error::domain(format!("dwell must be nonnegative, got {dwell}")));
    }
    let mut sweeps = [Sweep { start: 0.0, leg: 0.0, lo: 0.0, hi: 0.0 }; DOF];
    let mut clock = 0.0;
    for (i, sweep) in sweeps.iter_mut().enumerate() {
        let (lo, hi) = (rom.min[i], rom.max[i]);
        // Cycloid peak speed is twice the mean speed.
        let leg = 2.0 * (hi - lo) / peak_velocity;
        let start = match mode {
            MovementMode::Sequential => clock,
            MovementMode::Simultaneous => 0.0,
        };
        *sweep = Sweep { start, leg, lo, hi };
        clock = sweep.end() + dwell;
    }
    let duration = sweeps.iter().map(Sweep::end).fold(0.0, f64::max);
    Ok(Trajectory { mode, peak_velocity, dwell, duration, sweeps })
}

impl Trajectory {
    pub fn start(&self) -> JointVector {
        JointVector::from_fn(|i, _| self.sweeps[i].lo)
    }

    pub fn sample(&self, t: f64) -> Sample {
        let clamped = !(0.0..=self.duration).contains(&t);
        let tc = t.clamp(0.0, self.duration);
        let mut state = JointState::at_rest(JointVector::zeros());
        for (i, sweep) in self.sweeps.iter().enumerate() {
            let (p, v, a) = sweep.eval(tc);
            state.theta[i] = p;
            state.theta_dot[i] = v;
            state.theta_ddot[i] = a;
        }
        Sample { state, clamped }
    }

    /// Start and end times of joint `i`'s excursion.
    pub fn joint_window(&self, i: usize) -> (f64, f64) {
        (self.sweeps[i].start, self.sweeps[i].end())
    }

    pub fn descriptor(&self) -> String {
        format!(
            "{} {:.3} deg/s, dwell {} s, duration {:.6} s",
            self.mode,
            self.peak_velocity.to_degrees(),
            self.dwell,
            self.duration
        )
    }

    /// CSV with columns `t`, 7 positions, 7 velocities, 7 accelerations.
    pub fn to_csv(&self, dt: f64) -> Result<String> {
        if !(dt > 0.0) {
            return Err(Error::domain("sampling step must be positive"));
        }
        let mut out = String::from("t");
        for prefix in ["theta_d", "dtheta_d", "ddtheta_d"] {
            for j in 1..=DOF {
                write!(out, ",{prefix}{j}").unwrap();
            }
        }
        out.push('\n');
        let steps = (self.duration / dt).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let s = self.sample(t).state;
            write!(out, "{t}").unwrap();
            for v in s.theta.iter().chain(&s.theta_dot).chain(&s.theta_ddot) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path, dt: f64) -> Result<()> {
        std::fs::write(path, self.to_csv(dt)?).map_err(|e| Error::io(path, e))
    }
}
