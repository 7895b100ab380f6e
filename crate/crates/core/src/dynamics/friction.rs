use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coulomb + viscous + Stribeck joint friction.
///
/// Only the four primary parameters are stored; the Stribeck and Coulomb
/// velocity thresholds are always derived from the breakaway velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    /// Coulomb torque `T_C`, N·m.
    pub coulomb: f64,
    /// Breakaway torque `T_brk`, N·m.
    pub breakaway: f64,
    /// Breakaway velocity `omega_brk`, rad/s.
    pub breakaway_velocity: f64,
    /// Viscous coefficient, N·m/(rad/s).
    pub viscous: f64,
}

impl Default for FrictionParams {
    /// Peak torque 100 N·m: `T_C = 0.1·T_peak`, `T_brk = 0.15·T_peak`.
    fn default() -> Self {
        const PEAK: f64 = 100.0;
        FrictionParams { coulomb: 0.1 * PEAK, breakaway: 0.15 * PEAK, breakaway_velocity: 0.01, viscous: 5.0 }
    }
}

impl FrictionParams {
    pub fn stribeck_velocity(&self) -> f64 {
        self.breakaway_velocity * std::f64::consts::SQRT_2
    }

    pub fn coulomb_velocity(&self) -> f64 {
        self.breakaway_velocity / 10.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.coulomb >= 0.0
            && self.breakaway >= self.coulomb
            && self.breakaway_velocity > 0.0
            && self.viscous >= 0.0
            && [self.coulomb, self.breakaway, self.breakaway_velocity, self.viscous].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid friction parameters {self:?}")))
        }
    }
}

/// Friction torque opposing joint velocity `omega` (rad/s), N·m.
pub fn friction_torque(omega: f64, p: &FrictionParams) -> f64 {
    let x = omega / p.stribeck_velocity();
    let stribeck = (2.0 * std::f64::consts::E).sqrt() * (p.breakaway - p.coulomb) * (-x * x).exp() * x;
    stribeck + p.coulomb * (omega / p.coulomb_velocity()).tanh() + p.viscous * omega
}
