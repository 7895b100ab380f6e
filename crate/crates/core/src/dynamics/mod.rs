//! Rigid-body dynamics of the exoskeleton chain.
//!
//! Inverse dynamics is the recursive Newton–Euler algorithm over the modified
//! DH frames. The mass matrix, Coriolis and gravity terms are all recovered
//! from it, so every dynamic quantity shares one code path.

mod friction;

pub use friction::{friction_torque, FrictionParams};

use nalgebra::{Cholesky, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::anthropometry::{segment_parameters, SegmentSetSi, Subject, GRAVITY};
use crate::error::{Error, Result};
use crate::kinematics::{lower_extremity_dh, DhRow};
use crate::{JointVector, DOF};

pub type MassMatrix = SMatrix<f64, DOF, DOF>;

/// Condition number above which the mass matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub theta: JointVector,
    pub theta_dot: JointVector,
    pub theta_ddot: JointVector,
}

impl JointState {
    pub fn new(theta: JointVector, theta_dot: JointVector, theta_ddot: JointVector) -> Self {
        JointState { theta, theta_dot, theta_ddot }
    }

    pub fn at_rest(theta: JointVector) -> Self {
        JointState::new(theta, JointVector::zeros(), JointVector::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.theta_dot).chain(&self.theta_ddot).all(|v| v.is_finite())
    }
}

/// Inertial parameters of one link, expressed in the link's DH frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    pub com: Vector3<f64>,
    /// Inertia about the center of mass, kg·m².
    pub inertia: Matrix3<f64>,
}

impl Link {
    pub fn massless() -> Self {
        Link { mass: 0.0, com: Vector3::zeros(), inertia: Matrix3::zeros() }
    }
}

/// Which anthropometric length drives the ankle-to-last-axis lever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FootLever {
    #[default]
    FootLength,
    FootCom,
    AnkleHeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub foot_lever: FootLever,
    /// Reflected actuator inertia added to every joint, kg·m².
    pub rotor_inertia: f64,
    /// m/s², acting along -x of the base frame (the direction of the straight leg).
    pub gravity: f64,
    pub friction: FrictionParams,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            foot_lever: FootLever::FootLength,
            rotor_inertia: 0.5,
            gravity: GRAVITY,
            friction: FrictionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub subject: Subject,
    pub segments: SegmentSetSi,
    pub dh: [DhRow; DOF],
    pub links: [Link; DOF],
    pub rotor_inertia: JointVector,
    /// Gravitational acceleration in the base frame, m/s².
    pub gravity: Vector3<f64>,
    pub friction: [FrictionParams; DOF],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTerms {
    pub mass: MassMatrix,
    pub coriolis: JointVector,
    pub gravity: JointVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

fn diag(d: [f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::from(d))
}

impl RobotModel {
    /// Builds the chain for one subject. Thigh, shank and foot ride on
    /// links 3, 5 and 7; the remaining links only carry joint axes.
    pub fn from_subject(subject: &Subject, opts: &ModelOptions) -> Result<Self> {
        let seg = segment_parameters(subject)?;
        seg.check_invariants()?;
        let si = seg.to_si();
        let lever = match opts.foot_lever {
            FootLever::FootLength => si.foot.length,
            FootLever::FootCom => si.foot.com,
            FootLever::AnkleHeight => si.ankle_height,
        };
        let dh = lower_extremity_dh(si.thigh.length, si.shank.length, lever);

        let mut links = [Link::massless(); DOF];
        // Frames 3 and 5 sit at the distal joint with z pointing back to the proximal one.
        links[2] = Link {
            mass: si.thigh.mass,
            com: Vector3::new(0.0, 0.0, si.thigh.length - si.thigh.com),
            inertia: diag(si.thigh.inertia),
        };
        links[4] = Link {
            mass: si.shank.mass,
            com: Vector3::new(0.0, 0.0, si.shank.length - si.shank.com),
            inertia: diag(si.shank.inertia),
        };
        // Frame 7 sits `lever` out along the foot; the foot runs back towards the ankle.
        links[6] = Link {
            mass: si.foot.mass,
            com: Vector3::new(si.foot.com - lever, 0.0, 0.0),
            inertia: diag(si.foot.inertia),
        };

        let model = RobotModel {
            subject: *subject,
            segments: si,
            dh,
            links,
            rotor_inertia: JointVector::repeat(opts.rotor_inertia),
            gravity: Vector3::new(-opts.gravity, 0.0, 0.0),
            friction: [opts.friction; DOF],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass.is_finite() && link.mass >= 0.0) {
                return Err(Error::domain(format!("link {}: negative mass", i + 1)));
            }
            let sym = (link.inertia - link.inertia.transpose()).abs().max();
            let min_eig = link.inertia.symmetric_eigenvalues().min();
            if sym > 1e-12 || min_eig < -1e-12 {
                return Err(Error::domain(format!(
                    "link {}: inertia tensor not symmetric positive semidefinite",
                    i + 1
                )));
            }
        }
        if self.links.iter().all(|l| l.mass == 0.0) {
            return Err(Error::domain("model carries no mass"));
        }
        if self.rotor_inertia.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::domain("rotor inertia must be nonnegative"));
        }
        for f in &self.friction {
            f.validate()?;
        }
        Ok(())
    }

    /// Same model with gravity switched off.
    pub fn without_gravity(&self) -> Self {
        RobotModel { gravity: Vector3::zeros(), ..self.clone() }
    }

    fn frames(&self, theta: &JointVector) -> ([Matrix3<f64>; DOF], [Vector3<f64>; DOF]) {
        let mut rot = [Matrix3::identity(); DOF];
        let mut pos = [Vector3::zeros(); DOF];
        for i in 0..DOF {
            let row = &self.dh[i];
            let (st, ct) = (theta[i] + row.theta_offset).sin_cos();
            let (sa, ca) = row.alpha_prev.sin_cos();
            #[rustfmt::skip]
            let r = Matrix3::new(
                ct,      -st,      0.0,
                st * ca,  ct * ca, -sa,
                st * sa,  ct * sa,  ca,
            );
            rot[i] = r;
            pos[i] = Vector3::new(row.a_prev, -sa * row.d, ca * row.d);
        }
        (rot, pos)
    }

    /// Newton–Euler recursion. `with_gravity = false` drops the base
    /// acceleration, which yields `M(θ)·θ̈ + V(θ, θ̇)`.
    fn rnea(
        &self,
        theta: &JointVector,
        theta_dot: &JointVector,
        theta_ddot: &JointVector,
        with_gravity: bool,
    ) -> JointVector {
        let (rot, pos) = self.frames(theta);
        let z = Vector3::z();
        let mut w = Vector3::zeros();
        let mut wd = Vector3::zeros();
        let mut vd = if with_gravity { -self.gravity } else { Vector3::zeros() };
        let mut force = [Vector3::zeros(); DOF];
        let mut moment = [Vector3::zeros(); DOF];

        for i in 0..DOF {
            let rt = rot[i].transpose();
            let p = pos[i];
            let w_parent = rt * w;
            let wd_i = rt * wd + w_parent.cross(&(z * theta_dot[i])) + z * theta_ddot[i];
            let vd_i = rt * (wd.cross(&p) + w.cross(&w.cross(&p)) + vd);
            let w_i = w_parent + z * theta_dot[i];

            let link = &self.links[i];
            let vcd = wd_i.cross(&link.com) + w_i.cross(&w_i.cross(&link.com)) + vd_i;
            force[i] = link.mass * vcd;
            moment[i] = link.inertia * wd_i + w_i.cross(&(link.inertia * w_i));

            w = w_i;
            wd = wd_i;
            vd = vd_i;
        }

        let mut tau = JointVector::zeros();
        let mut f = Vector3::zeros();
        let mut n = Vector3::zeros();
        for i in (0..DOF).rev() {
            let (f_child, n_child, p_child) = if i + 1 < DOF {
                (rot[i + 1] * f, rot[i + 1] * n, pos[i + 1])
            } else {
                (Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
            };
            let com = self.links[i].com;
            n = moment[i] + n_child + com.cross(&force[i]) + p_child.cross(&f_child);
            f = force[i] + f_child;
            tau[i] = n.z + self.rotor_inertia[i] * theta_ddot[i];
        }
        tau
    }

    fn mass_matrix_unchecked(&self, theta: &JointVector) -> MassMatrix {
        let zero = JointVector::zeros();
        let mut m = MassMatrix::zeros();
        for i in 0..DOF {
            let mut e = JointVector::zeros();
            e[i] = 1.0;
            m.set_column(i, &self.rnea(theta, &zero, &e, false));
        }
        m
    }
}

/// Frictionless joint torques `M(θ)θ̈ + V(θ, θ̇) + G(θ)`.
pub fn inverse_dynamics(state: &JointState, model: &RobotModel) -> JointVector {
    model.rnea(&state.theta, &state.theta_dot, &state.theta_ddot, true)
}

pub fn gravity_vector(theta: &JointVector, model: &RobotModel) -> JointVector {
    let zero = JointVector::zeros();
    model.rnea(theta, &zero, &zero, true)
}

pub fn mass_matrix(theta: &JointVector, model: &RobotModel) -> MassMatrix {
    model.mass_matrix_unchecked(theta)
}

/// `M(θ)·v` without forming the mass matrix.
pub fn mass_matrix_product(theta: &JointVector, v: &JointVector, model: &RobotModel) -> JointVector {
    model.rnea(theta, &JointVector::zeros(), v, false)
}

pub fn decompose(theta: &JointVector, theta_dot: &JointVector, model: &RobotModel) -> DynamicsTerms {
    let zero = JointVector::zeros();
    DynamicsTerms {
        mass: model.mass_matrix_unchecked(theta),
        coriolis: model.rnea(theta, theta_dot, &zero, false),
        gravity: gravity_vector(theta, model),
    }
}

/// Per-joint friction torques at joint velocities `theta_dot`.
pub fn joint_friction(theta_dot: &JointVector, model: &RobotModel) -> JointVector {
    JointVector::from_fn(|i, _| friction_torque(theta_dot[i], &model.friction[i]))
}

/// Joint accelerations under applied torques `tau`, with joint friction when `friction` is set.
pub fn forward_dynamics(
    theta: &JointVector,
    theta_dot: &JointVector,
    tau: &JointVector,
    model: &RobotModel,
    friction: bool,
) -> Result<JointVector> {
    let m = model.mass_matrix_unchecked(theta);
    let bias = model.rnea(theta, theta_dot, &JointVector::zeros(), true);
    let mut rhs = tau - bias;
    if friction {
        rhs -= joint_friction(theta_dot, model);
    }
    let chol = Cholesky::new(m).ok_or_else(|| {
        Error::numerical(format!("mass matrix is not positive definite at θ = {}", theta.transpose()))
    })?;
    // (max/min diagonal of L)² bounds the condition number from below.
    let l = chol.l_dirty().diagonal();
    let cond = (l.max() / l.min()).powi(2);
    if !(cond.is_finite() && cond <= MAX_CONDITION) {
        return Err(Error::numerical(format!(
            "mass matrix ill-conditioned (cond ≥ {cond:.3e}) at θ = {}",
            theta.transpose()
        )));
    }
    let acc = chol.solve(&rhs);
    if acc.iter().all(|a| a.is_finite()) {
        Ok(acc)
    } else {
        Err(Error::numerical(format!("non-finite acceleration at θ = {}", theta.transpose())))
    }
}

/// Kinetic and potential energy of the chain; the potential reference is zero at the base origin.
pub fn energy(state: &JointState, model: &RobotModel) -> EnergyReport {
    let (rot, pos) = model.frames(&state.theta);
    let qd = &state.theta_dot;
    let z = Vector3::z();
    let mut w = Vector3::zeros();
    let mut v = Vector3::zeros();
    let mut r_world = Matrix3::identity();
    let mut p_world = Vector3::zeros();
    let mut kinetic = 0.0;
    let mut potential = 0.0;

    for i in 0..DOF {
        let rt = rot[i].transpose();
        let v_i = rt * (v + w.cross(&pos[i]));
        let w_i = rt * w + z * qd[i];
        p_world += r_world * pos[i];
        r_world *= rot[i];

        let link = &model.links[i];
        let v_c = v_i + w_i.cross(&link.com);
        kinetic += 0.5 * link.mass * v_c.norm_squared() + 0.5 * w_i.dot(&(link.inertia * w_i));
        kinetic += 0.5 * model.rotor_inertia[i] * qd[i] * qd[i];
        let com_world = p_world + r_world * link.com;
        potential -= link.mass * model.gravity.dot(&com_world);

        w = w_i;
        v = v_i;
    }
    EnergyReport { kinetic, potential, total: kinetic + potential }
}
