//! Modified Denavit–Hartenberg frames of the 7-DOF lower-extremity chain.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotModel;
use crate::{JointVector, DOF};

/// One row of a modified DH table (Craig convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    /// Added to the joint variable, rad.
    pub theta_offset: f64,
    /// Link offset `d_i`, m.
    pub d: f64,
    /// Link length `a_{i-1}`, m.
    pub a_prev: f64,
    /// Link twist `alpha_{i-1}`, rad.
    pub alpha_prev: f64,
}

/// Chain used by the exoskeleton: hip (3 joints), knee (2), ankle (2).
///
/// `thigh` and `shank` are the hip-to-knee and knee-to-ankle offsets; `foot`
/// is the lever from the ankle to the last joint axis.
pub fn lower_extremity_dh(thigh: f64, shank: f64, foot: f64) -> [DhRow; DOF] {
    let row = |theta_offset, d, a_prev, alpha_prev| DhRow { theta_offset, d, a_prev, alpha_prev };
    [
        // hip abduction/adduction
        row(0.0, 0.0, 0.0, 0.0),
        // hip flexion/extension
        row(-FRAC_PI_2, 0.0, 0.0, -FRAC_PI_2),
        // hip internal/external rotation, frame sits at the knee
        row(0.0, -thigh, 0.0, -FRAC_PI_2),
        // knee flexion/extension
        row(0.0, 0.0, 0.0, FRAC_PI_2),
        // knee internal rotation, frame sits at the ankle
        row(0.0, -shank, 0.0, -FRAC_PI_2),
        // ankle dorsiflexion/plantarflexion
        row(-FRAC_PI_2, 0.0, 0.0, FRAC_PI_2),
        // ankle inversion/eversion
        row(0.0, 0.0, foot, -FRAC_PI_2),
    ]
}

/// Rigid transform stored as a 4×4 homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousTransform(pub Matrix4<f64>);

impl HomogeneousTransform {
    pub fn identity() -> Self {
        HomogeneousTransform(Matrix4::identity())
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        HomogeneousTransform(m)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn compose(&self, other: &Self) -> Self {
        HomogeneousTransform(self.0 * other.0)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// Largest deviation from a proper rigid transform: orthonormality of
    /// the rotation block, unit determinant and the `[0 0 0 1]` bottom row.
    pub fn rigidity_defect(&self) -> f64 {
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = (r.determinant() - 1.0).abs();
        let row = self.0.row(3);
        let bottom = row[0].abs().max(row[1].abs()).max(row[2].abs()).max((row[3] - 1.0).abs());
        ortho.max(det).max(bottom)
    }
}

/// Link transform `^{i-1}T_i` for joint angle `theta` (offset applied here).
pub fn dh_transform(row: &DhRow, theta: f64) -> HomogeneousTransform {
    let (st, ct) = (theta + row.theta_offset).sin_cos();
    let (sa, ca) = row.alpha_prev.sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        ct,      -st,      0.0,  row.a_prev,
        st * ca,  ct * ca, -sa,  -sa * row.d,
        st * sa,  ct * sa,  ca,   ca * row.d,
        0.0,      0.0,      0.0,  1.0,
    );
    HomogeneousTransform(m)
}

/// Per-link transforms and their ordered product base→last link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPose {
    pub links: [HomogeneousTransform; DOF],
    pub composite: HomogeneousTransform,
}

impl ChainPose {
    /// Base-frame pose of every link frame (`^0T_1`, `^0T_2`, ...).
    pub fn cumulative(&self) -> [HomogeneousTransform; DOF] {
        let mut out = [HomogeneousTransform::identity(); DOF];
        let mut acc = HomogeneousTransform::identity();
        for (o, link) in out.iter_mut().zip(&self.links) {
            acc = acc.compose(link);
            *o = acc;
        }
        out
    }
}

pub fn chain_pose(theta: &JointVector, rows: &[DhRow; DOF]) -> ChainPose {
    let links: [HomogeneousTransform; DOF] = std::array::from_fn(|i| dh_transform(&rows[i], theta[i]));
    let composite = links.iter().fold(HomogeneousTransform::identity(), |acc, t| acc.compose(t));
    ChainPose { links, composite }
}

pub fn forward_kinematics(theta: &JointVector, model: &RobotModel) -> ChainPose {
    chain_pose(theta, &model.dh)
}
