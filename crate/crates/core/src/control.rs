//! Joint torque controllers: computed torque, plain PD, and learned
//! feedforward plus PD feedback.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anthropometry::Subject;
use crate::dynamics::{inverse_dynamics, JointState, RobotModel};
use crate::error::{Error, Result};
use crate::neuralnet::{Mlp, INPUT_WIDTH, OUTPUT_WIDTH};
use crate::JointVector;

/// Diagonal PD gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: JointVector,
    pub kv: JointVector,
}

impl PdGains {
    pub fn new(kp: JointVector, kv: JointVector) -> Result<Self> {
        let g = PdGains { kp, kv };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(kp: f64, kv: f64) -> Result<Self> {
        PdGains::new(JointVector::repeat(kp), JointVector::repeat(kv))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().chain(&self.kv).all(|g| g.is_finite() && *g > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("PD gains must be positive".into()))
        }
    }

    /// `Kp·e + Kv·ė` for position error `e` and velocity error `ė`.
    pub fn apply(&self, e: &JointVector, e_dot: &JointVector) -> JointVector {
        self.kp.component_mul(e) + self.kv.component_mul(e_dot)
    }
}

impl Default for PdGains {
    /// Kp = 3000, Kv = 250 on every joint.
    fn default() -> Self {
        PdGains { kp: JointVector::repeat(3000.0), kv: JointVector::repeat(250.0) }
    }
}

/// Controller output split into its model/feedforward and feedback parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueCommand {
    pub total: JointVector,
    pub feedforward: JointVector,
    pub feedback: JointVector,
}

impl TorqueCommand {
    pub fn from_parts(feedforward: JointVector, feedback: JointVector) -> Self {
        TorqueCommand { total: feedforward + feedback, feedforward, feedback }
    }
}

/// Measured joint positions and velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub theta: JointVector,
    pub theta_dot: JointVector,
}

/// `τ = M(θ)[θ̈_d + Kv ė + Kp e] + V(θ, θ̇) + G(θ)`.
///
/// The feedforward part is `M θ̈_d + V + G`, the feedback part `M (Kv ė + Kp e)`.
pub fn ctc_torque(desired: &JointState, actual: &Measured, gains: &PdGains, model: &RobotModel) -> TorqueCommand {
    let e = desired.theta - actual.theta;
    let e_dot = desired.theta_dot - actual.theta_dot;
    let feedforward = inverse_dynamics(&JointState::new(actual.theta, actual.theta_dot, desired.theta_ddot), model);
    let correction = gains.apply(&e, &e_dot);
    let feedback = crate::dynamics::mass_matrix_product(&actual.theta, &correction, model);
    TorqueCommand::from_parts(feedforward, feedback)
}

pub fn pd_torque(desired: &JointState, actual: &Measured, gains: &PdGains) -> TorqueCommand {
    let e = desired.theta - actual.theta;
    let e_dot = desired.theta_dot - actual.theta_dot;
    TorqueCommand::from_parts(JointVector::zeros(), gains.apply(&e, &e_dot))
}

/// Piecewise-constant random torque, uniform in `±amplitude`, redrawn every `hold` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedNoise {
    pub amplitude: f64,
    pub hold: f64,
    pub seed: u64,
}

impl BoundedNoise {
    pub fn at(&self, t: f64) -> JointVector {
        let slot = (t.max(0.0) / self.hold).floor() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(slot);
        JointVector::from_fn(|_, _| rng.gen_range(-self.amplitude..=self.amplitude))
    }
}

/// Source of the feedforward torque in the hybrid controller.
#[derive(Debug, Clone)]
pub enum Feedforward {
    Disabled,
    Network(Arc<Mlp>),
    /// Stand-in signal for stability experiments.
    Noise(BoundedNoise),
}

#[derive(Debug, Clone)]
pub struct HybridConfig {
    pub gains: PdGains,
    pub feedforward: Feedforward,
    pub subject: Subject,
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        self.subject.validate()?;
        match &self.feedforward {
            Feedforward::Network(mlp) => {
                if mlp.input_width() != INPUT_WIDTH || mlp.output_width() != OUTPUT_WIDTH {
                    return Err(Error::Config(format!(
                        "feedforward network must map {INPUT_WIDTH} inputs to {OUTPUT_WIDTH} outputs, got {} -> {}",
                        mlp.input_width(),
                        mlp.output_width()
                    )));
                }
                mlp.validate()
            }
            Feedforward::Noise(n) if !(n.amplitude >= 0.0 && n.hold > 0.0) => {
                Err(Error::Config("noise feedforward needs amplitude ≥ 0 and hold > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Network input row: desired position, velocity, acceleration, height, weight.
pub fn network_input(desired: &JointState, subject: &Subject) -> [f64; INPUT_WIDTH] {
    let mut x = [0.0; INPUT_WIDTH];
    x[..7].copy_from_slice(desired.theta.as_slice());
    x[7..14].copy_from_slice(desired.theta_dot.as_slice());
    x[14..21].copy_from_slice(desired.theta_ddot.as_slice());
    x[21] = subject.height;
    x[22] = subject.weight;
    x
}

pub fn hybrid_torque(t: f64, desired: &JointState, actual: &Measured, cfg: &HybridConfig) -> Result<TorqueCommand> {
    let feedforward = match &cfg.feedforward {
        Feedforward::Disabled => JointVector::zeros(),
        Feedforward::Network(mlp) => {
            let y = mlp.forward(&network_input(desired, &cfg.subject))?;
            if y.len() != OUTPUT_WIDTH {
                return Err(Error::Config(format!("feedforward network yields {} outputs", y.len())));
            }
            JointVector::from_column_slice(&y)
        }
        Feedforward::Noise(noise) => noise.at(t),
    };
    let feedback = pd_torque(desired, actual, &cfg.gains).feedback;
    Ok(TorqueCommand::from_parts(feedforward, feedback))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Passive,
    ComputedTorque,
    Pd,
    Hybrid,
}

#[derive(Debug, Clone)]
pub enum Controller {
    /// Zero torque; the plant swings freely.
    Passive,
    ComputedTorque {
        gains: PdGains,
        model: Arc<RobotModel>,
    },
    Pd {
        gains: PdGains,
    },
    Hybrid(HybridConfig),
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Passive => "passive",
            ControllerKind::ComputedTorque => "computed_torque",
            ControllerKind::Pd => "pd",
            ControllerKind::Hybrid => "hybrid",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Passive => ControllerKind::Passive,
            Controller::ComputedTorque { .. } => ControllerKind::ComputedTorque,
            Controller::Pd { .. } => ControllerKind::Pd,
            Controller::Hybrid(_) => ControllerKind::Hybrid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Controller::Passive => Ok(()),
            Controller::ComputedTorque { gains, model } => {
                gains.validate()?;
                model.validate()
            }
            Controller::Pd { gains } => gains.validate(),
            Controller::Hybrid(cfg) => cfg.validate(),
        }
    }

    pub fn command(&self, t: f64, desired: &JointState, actual: &Measured) -> Result<TorqueCommand> {
        match self {
            Controller::Passive => Ok(TorqueCommand::from_parts(JointVector::zeros(), JointVector::zeros())),
            Controller::ComputedTorque { gains, model } => Ok(ctc_torque(desired, actual, gains, model)),
            Controller::Pd { gains } => Ok(pd_torque(desired, actual, gains)),
            Controller::Hybrid(cfg) => hybrid_torque(t, desired, actual, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{decompose, ModelOptions};
    use crate::neuralnet::mlp_init;

    fn model() -> RobotModel {
        RobotModel::from_subject(&Subject::new(65.0, 190.0).unwrap(), &ModelOptions::default()).unwrap()
    }

    fn desired() -> JointState {
        JointState::new(
            JointVector::from_fn(|i, _| 0.1 * i as f64 - 0.2),
            JointVector::from_fn(|i, _| 0.3 - 0.05 * i as f64),
            JointVector::from_fn(|i, _| 1.0 - 0.4 * i as f64),
        )
    }

    #[test]
    fn ctc_without_error_is_inverse_dynamics() {
        let m = model();
        let d = desired();
        let cmd = ctc_torque(&d, &Measured { theta: d.theta, theta_dot: d.theta_dot }, &PdGains::default(), &m);
        assert_eq!(cmd.total, inverse_dynamics(&d, &m));
        assert_eq!(cmd.feedback, JointVector::zeros());
    }

    #[test]
    fn ctc_with_zero_gains_ignores_error() {
        let m = model();
        let d = desired();
        let actual = Measured { theta: d.theta.add_scalar(0.05), theta_dot: d.theta_dot.add_scalar(-0.2) };
        let zero = PdGains { kp: JointVector::zeros(), kv: JointVector::zeros() };
        let cmd = ctc_torque(&d, &actual, &zero, &m);
        let terms = decompose(&actual.theta, &actual.theta_dot, &m);
        let expected = terms.mass * d.theta_ddot + terms.coriolis + terms.gravity;
        assert!((cmd.total - expected).abs().max() < 1e-9);
    }

    #[test]
    fn ctc_feedback_is_mass_weighted_pd() {
        let m = model();
        let d = desired();
        let actual = Measured { theta: d.theta.add_scalar(0.01), theta_dot: d.theta_dot.add_scalar(0.1) };
        let g = PdGains::default();
        let cmd = ctc_torque(&d, &actual, &g, &m);
        let mm = decompose(&actual.theta, &actual.theta_dot, &m).mass;
        let expected = mm * g.apply(&(d.theta - actual.theta), &(d.theta_dot - actual.theta_dot));
        assert!((cmd.feedback - expected).abs().max() < 1e-9);
        assert_eq!(cmd.total, cmd.feedforward + cmd.feedback);
    }

    #[test]
    fn pd_reference_values() {
        let g = PdGains::default();
        let d = JointState::at_rest(JointVector::zeros());
        let zero = pd_torque(&d, &Measured { theta: d.theta, theta_dot: d.theta_dot }, &g);
        assert_eq!(zero.total, JointVector::zeros());

        let mut theta = JointVector::zeros();
        theta[0] = -0.1;
        let cmd = pd_torque(&d, &Measured { theta, theta_dot: JointVector::zeros() }, &g);
        assert!((cmd.total[0] - 300.0).abs() < 1e-12);
        assert_eq!(cmd.feedforward, JointVector::zeros());

        let mut vel = JointVector::zeros();
        vel[2] = -1.0;
        let cmd = pd_torque(&d, &Measured { theta: JointVector::zeros(), theta_dot: vel }, &g);
        assert_eq!(cmd.total[2], 250.0);
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(PdGains::uniform(3000.0, 0.0).is_err());
        assert!(PdGains::uniform(-1.0, 250.0).is_err());
        assert!(PdGains::uniform(3000.0, 250.0).is_ok());
    }

    #[test]
    fn hybrid_without_feedforward_is_pd() {
        let d = desired();
        let actual = Measured { theta: d.theta.add_scalar(0.02), theta_dot: d.theta_dot };
        let cfg = HybridConfig {
            gains: PdGains::default(),
            feedforward: Feedforward::Disabled,
            subject: Subject::new(60.0, 180.0).unwrap(),
        };
        assert_eq!(hybrid_torque(0.0, &d, &actual, &cfg).unwrap(), pd_torque(&d, &actual, &cfg.gains));
    }

    #[test]
    fn hybrid_with_exact_feedforward_has_no_feedback_at_zero_error() {
        // A network whose output is pinned to the required torque through its output bias.
        let m = model();
        let d = desired();
        let required = inverse_dynamics(&d, &m);
        let mut mlp = mlp_init(0);
        mlp.set_params(&vec![0.0; mlp.param_count()]).unwrap();
        mlp.output_norm.mean = required.as_slice().to_vec();
        let cfg = HybridConfig {
            gains: PdGains::default(),
            feedforward: Feedforward::Network(Arc::new(mlp)),
            subject: m.subject,
        };
        cfg.validate().unwrap();
        let cmd = hybrid_torque(0.0, &d, &Measured { theta: d.theta, theta_dot: d.theta_dot }, &cfg).unwrap();
        assert_eq!(cmd.feedback, JointVector::zeros());
        assert_eq!(cmd.total, required);
    }

    #[test]
    fn hybrid_rejects_wrong_network_shape() {
        let mlp = crate::neuralnet::Mlp::new(
            &[22, 5, 7],
            &[crate::neuralnet::Activation::Tanh, crate::neuralnet::Activation::Linear],
            0,
        )
        .unwrap();
        let cfg = HybridConfig {
            gains: PdGains::default(),
            feedforward: Feedforward::Network(Arc::new(mlp)),
            subject: Subject::new(60.0, 180.0).unwrap(),
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let d = desired();
        assert!(hybrid_torque(0.0, &d, &Measured { theta: d.theta, theta_dot: d.theta_dot }, &cfg).is_err());
    }

    #[test]
    fn noise_is_bounded_and_piecewise_constant() {
        let n = BoundedNoise { amplitude: 40.0, hold: 0.05, seed: 9 };
        assert_eq!(n.at(0.01), n.at(0.049));
        assert_ne!(n.at(0.01), n.at(0.051));
        for k in 0..500 {
            assert!(n.at(k as f64 * 0.013).abs().max() <= 40.0);
        }
    }
}
