//! Tracking-error statistics, torque decomposition summaries, controller
//! comparison, and the one-way ANOVA robustness study.

mod anova;

pub use anova::{
    f_tail_probability, ln_gamma, normality, one_way_anova, regularized_incomplete_beta, AnovaTable, Normality,
    CONVENTIONAL_SIGNIFICANCE, STRICT_SIGNIFICANCE,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::ControllerKind;
use crate::error::{Error, Result};
use crate::simulation::SimLog;
use crate::DOF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointError {
    /// Largest |desired − actual|, rad.
    pub max_abs: f64,
    pub max_abs_deg: f64,
    /// Signed error at the time of the maximum, rad.
    pub max_signed: f64,
    pub rms: f64,
    pub rms_deg: f64,
    pub time_of_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub joints: Vec<JointError>,
    /// 1-based joint with the largest error.
    pub worst_joint: usize,
}

impl TrackingReport {
    pub const CSV_HEADER: &'static str = "joint,max_abs_rad,max_abs_deg,max_signed_rad,rms_rad,rms_deg,time_of_max_s";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, j) in self.joints.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                j.max_abs,
                j.max_abs_deg,
                j.max_signed,
                j.rms,
                j.rms_deg,
                j.time_of_max
            )
            .unwrap();
        }
        out
    }

    pub fn to_text(&self, title: &str) -> String {
        let mut out = format!("{title}\n{:<6} {:>12} {:>12} {:>10}\n", "joint", "max [deg]", "rms [deg]", "t_max [s]");
        for (i, j) in self.joints.iter().enumerate() {
            writeln!(
                out,
                "{:<6} {:>12.6} {:>12.6} {:>10.3}",
                i + 1,
                j.max_signed.to_degrees(),
                j.rms_deg,
                j.time_of_max
            )
            .unwrap();
        }
        writeln!(out, "largest error on joint {}", self.worst_joint).unwrap();
        out
    }
}

/// Per-joint max and RMS of `desired − actual` position over the whole log.
pub fn tracking_errors(log: &SimLog) -> Result<TrackingReport> {
    if log.records.is_empty() {
        return Err(Error::domain("cannot summarize an empty simulation log"));
    }
    let n = log.records.len() as f64;
    let joints: Vec<JointError> = (0..DOF)
        .map(|j| {
            let (mut max_abs, mut max_signed, mut t_max, mut sq) = (0.0f64, 0.0, log.records[0].t, 0.0);
            for r in &log.records {
                let e = r.desired.theta[j] - r.actual.theta[j];
                sq += e * e;
                if e.abs() > max_abs {
                    max_abs = e.abs();
                    max_signed = e;
                    t_max = r.t;
                }
            }
            let rms = (sq / n).sqrt();
            JointError {
                max_abs,
                max_abs_deg: max_abs.to_degrees(),
                max_signed,
                rms,
                rms_deg: rms.to_degrees(),
                time_of_max: t_max,
            }
        })
        .collect();
    let worst_joint = joints
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, j)| if j.max_abs > best.1 { (i, j.max_abs) } else { best })
        .0
        + 1;
    Ok(TrackingReport { joints, worst_joint })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueShare {
    pub feedforward_rms: f64,
    pub feedback_rms: f64,
    pub total_rms: f64,
    /// `feedback_rms / total_rms`; 0 when the total vanishes.
    pub feedback_ratio: f64,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for v in values {
        sq += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

/// RMS of the feedforward, feedback and total torque per joint of a hybrid-controller log.
pub fn torque_decomposition(log: &SimLog) -> Result<Vec<TorqueShare>> {
    if log.metadata.controller != ControllerKind::Hybrid {
        return Err(Error::domain(format!(
            "torque decomposition needs a hybrid-controller log, got {}",
            log.metadata.controller
        )));
    }
    if log.records.is_empty() {
        return Err(Error::domain("cannot summarize an empty simulation log"));
    }
    Ok((0..DOF)
        .map(|j| {
            let feedforward_rms = rms(log.records.iter().map(|r| r.command.feedforward[j]));
            let feedback_rms = rms(log.records.iter().map(|r| r.command.feedback[j]));
            let total_rms = rms(log.records.iter().map(|r| r.command.total[j]));
            let feedback_ratio = if total_rms > 0.0 { feedback_rms / total_rms } else { 0.0 };
            TorqueShare { feedforward_rms, feedback_rms, total_rms, feedback_ratio }
        })
        .collect())
}

pub fn torque_shares_csv(shares: &[TorqueShare]) -> String {
    let mut out = String::from("joint,feedforward_rms,feedback_rms,total_rms,feedback_ratio\n");
    for (i, s) in shares.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", i + 1, s.feedforward_rms, s.feedback_rms, s.total_rms, s.feedback_ratio)
            .unwrap();
    }
    out
}

/// Side-by-side comparison of a reference and a candidate run over one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub trajectory: String,
    pub reference: ControllerKind,
    pub candidate: ControllerKind,
    pub reference_errors: TrackingReport,
    pub candidate_errors: TrackingReport,
    /// Per-joint RMS of the commanded total torque, N·m.
    pub reference_torque_rms: Vec<f64>,
    pub candidate_torque_rms: Vec<f64>,
}

pub fn compare_logs(reference: &SimLog, candidate: &SimLog) -> Result<Comparison> {
    let same_grid = reference.records.len() == candidate.records.len()
        && reference.records.iter().zip(&candidate.records).all(|(a, b)| a.t == b.t && a.desired == b.desired);
    if reference.metadata.trajectory != candidate.metadata.trajectory || !same_grid {
        return Err(Error::domain(format!(
            "logs follow different trajectories: {:?} vs {:?}",
            reference.metadata.trajectory, candidate.metadata.trajectory
        )));
    }
    let torque = |log: &SimLog| (0..DOF).map(|j| rms(log.records.iter().map(|r| r.command.total[j]))).collect();
    Ok(Comparison {
        trajectory: reference.metadata.trajectory.clone(),
        reference: reference.metadata.controller,
        candidate: candidate.metadata.controller,
        reference_errors: tracking_errors(reference)?,
        candidate_errors: tracking_errors(candidate)?,
        reference_torque_rms: torque(reference),
        candidate_torque_rms: torque(candidate),
    })
}

/// CSV with one row per joint per comparison.
pub fn compare_csv(comparisons: &[Comparison]) -> String {
    let mut out = String::from(
        "trajectory,joint,reference,candidate,ref_max_deg,cand_max_deg,diff_max_deg,ref_rms_deg,cand_rms_deg,ref_torque_rms,cand_torque_rms\n",
    );
    for c in comparisons {
        for j in 0..DOF {
            let (r, k) = (&c.reference_errors.joints[j], &c.candidate_errors.joints[j]);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.trajectory,
                j + 1,
                c.reference,
                c.candidate,
                r.max_abs_deg,
                k.max_abs_deg,
                k.max_abs_deg - r.max_abs_deg,
                r.rms_deg,
                k.rms_deg,
                c.reference_torque_rms[j],
                c.candidate_torque_rms[j]
            )
            .unwrap();
        }
    }
    out
}

pub fn compare_text(comparisons: &[Comparison]) -> String {
    let mut out = String::new();
    for c in comparisons {
        writeln!(out, "{} — {} vs {}", c.trajectory, c.reference, c.candidate).unwrap();
        writeln!(
            out,
            "{:<6} {:>14} {:>14} {:>12} {:>14} {:>14}",
            "joint",
            format!("{} max[deg]", short(c.reference)),
            format!("{} max[deg]", short(c.candidate)),
            "diff[deg]",
            format!("{} τrms", short(c.reference)),
            format!("{} τrms", short(c.candidate))
        )
        .unwrap();
        for j in 0..DOF {
            let (r, k) = (&c.reference_errors.joints[j], &c.candidate_errors.joints[j]);
            writeln!(
                out,
                "{:<6} {:>14.6} {:>14.6} {:>12.6} {:>14.3} {:>14.3}",
                j + 1,
                r.max_abs_deg,
                k.max_abs_deg,
                k.max_abs_deg - r.max_abs_deg,
                c.reference_torque_rms[j],
                c.candidate_torque_rms[j]
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

fn short(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Passive => "passive",
        ControllerKind::ComputedTorque => "ctc",
        ControllerKind::Pd => "pd",
        ControllerKind::Hybrid => "hybrid",
    }
}

/// Default samples per group in the robustness study.
pub const ROBUSTNESS_SAMPLES: usize = 4001;

/// Signed tracking errors of joint `joint` (0-based) at `count` evenly spaced
/// times across `window` (seconds), each taken from the nearest record.
pub fn error_samples(log: &SimLog, joint: usize, window: (f64, f64), count: usize) -> Result<Vec<f64>> {
    if log.records.is_empty() {
        return Err(Error::domain("cannot sample an empty simulation log"));
    }
    if joint >= DOF || count < 2 || !(window.0 <= window.1) {
        return Err(Error::domain(format!("invalid error sampling: joint {joint}, window {window:?}, count {count}")));
    }
    let dt = log.metadata.config.dt;
    let last = log.records.len() - 1;
    Ok((0..count)
        .map(|i| {
            let t = window.0 + (window.1 - window.0) * i as f64 / (count - 1) as f64;
            let r = &log.records[((t / dt).round().max(0.0) as usize).min(last)];
            r.desired.theta[joint] - r.actual.theta[joint]
        })
        .collect())
}

/// Result of testing one joint's tracking error across subject groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAnova {
    pub joint: usize,
    pub table: AnovaTable,
    /// Share of the total variation explained by the factor, `SS_between / SS_total`.
    pub eta_squared: f64,
    pub normality: Vec<Normality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessStudy {
    /// What varies between groups, e.g. `weight`.
    pub factor: String,
    /// Factor value of each group.
    pub levels: Vec<f64>,
    pub samples_per_group: usize,
    pub joints: Vec<JointAnova>,
}

impl RobustnessStudy {
    /// One ANOVA per joint over logs that differ only in `factor`. Joint `j`
    /// is sampled over `windows[j]`, the part of the run where it moves.
    pub fn from_logs(
        factor: &str,
        levels: &[f64],
        logs: &[SimLog],
        windows: &[(f64, f64); DOF],
        samples_per_group: usize,
    ) -> Result<Self> {
        if levels.len() != logs.len() {
            return Err(Error::Shape { expected: levels.len(), actual: logs.len() });
        }
        let joints = (0..DOF)
            .map(|j| {
                let groups: Vec<Vec<f64>> =
                    logs.iter().map(|l| error_samples(l, j, windows[j], samples_per_group)).collect::<Result<_>>()?;
                let table = one_way_anova(&groups)?;
                Ok(JointAnova {
                    joint: j + 1,
                    eta_squared: if table.ss_total > 0.0 { table.ss_between / table.ss_total } else { 0.0 },
                    table,
                    normality: groups.iter().map(|g| normality(g)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(RobustnessStudy { factor: factor.into(), levels: levels.to_vec(), samples_per_group, joints })
    }

    /// Whether no joint shows a significant effect at `alpha`.
    pub fn insensitive_at(&self, alpha: f64) -> bool {
        self.joints.iter().all(|j| j.table.p > alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("factor,joint,{},eta_squared\n", AnovaTable::CSV_HEADER);
        for j in &self.joints {
            writeln!(out, "{},{},{},{}", self.factor, j.joint, j.table.csv_row(), j.eta_squared).unwrap();
        }
        out
    }

    pub fn to_text(&self) -> String {
        let levels: Vec<String> = self.levels.iter().map(|v| format!("{v}")).collect();
        let mut out = format!(
            "Tracking error variation with {} ({}), {} samples per group\n\n",
            self.factor,
            levels.join(", "),
            self.samples_per_group
        );
        for j in &self.joints {
            out.push_str(&j.table.to_text(&format!("Joint {}", j.joint)));
            let verdict = |alpha: f64| if j.table.p > alpha { "not significant" } else { "significant" };
            writeln!(
                out,
                "  α = {STRICT_SIGNIFICANCE}: {}; α = {CONVENTIONAL_SIGNIFICANCE}: {}",
                verdict(STRICT_SIGNIFICANCE),
                verdict(CONVENTIONAL_SIGNIFICANCE)
            )
            .unwrap();
            let worst_skew = j.normality.iter().map(|n| n.skewness.abs()).fold(0.0, f64::max);
            let worst_kurt = j.normality.iter().map(|n| n.excess_kurtosis.abs()).fold(0.0, f64::max);
            writeln!(out, "  effect size η² = {:.3e}", j.eta_squared).unwrap();
            writeln!(
                out,
                "  normality screen: max |skewness| {worst_skew:.3}, max |excess kurtosis| {worst_kurt:.3}\n"
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anthropometry::Subject;
    use crate::control::TorqueCommand;
    use crate::dynamics::{EnergyReport, JointState};
    use crate::simulation::{SimConfig, SimMetadata, SimRecord, LOG_FORMAT, LOG_VERSION};
    use crate::trajectory::MovementMode;
    use crate::JointVector;

    fn log_with(controller: ControllerKind, n: usize, err: impl Fn(usize) -> JointVector) -> SimLog {
        let records = (0..n)
            .map(|k| {
                let desired = JointState::at_rest(JointVector::repeat(0.1));
                let actual = JointState::at_rest(desired.theta - err(k));
                SimRecord {
                    t: k as f64 * 1e-3,
                    desired,
                    actual,
                    command: TorqueCommand::from_parts(JointVector::repeat(10.0), JointVector::repeat(1.0)),
                    friction: JointVector::zeros(),
                    energy: EnergyReport { kinetic: 0.0, potential: 0.0, total: 0.0 },
                }
            })
            .collect();
        SimLog {
            metadata: SimMetadata {
                format: LOG_FORMAT.into(),
                version: LOG_VERSION,
                subject: Subject::new(60.0, 180.0).unwrap(),
                controller,
                trajectory: "synthetic".into(),
                mode: MovementMode::Sequential,
                peak_velocity: 1.0,
                config: SimConfig::default(),
                steps: n.saturating_sub(1),
                seed: None,
            },
            records,
        }
    }

    #[test]
    fn perfect_tracking_is_all_zero() {
        let r = tracking_errors(&log_with(ControllerKind::Hybrid, 10, |_| JointVector::zeros())).unwrap();
        assert!(r.joints.iter().all(|j| j.max_abs == 0.0 && j.rms == 0.0));
    }

    #[test]
    fn injected_spike_is_located() {
        let spike = 0.26f64.to_radians();
        let log = log_with(ControllerKind::Hybrid, 100, |k| {
            let mut e = JointVector::repeat(1e-4);
            if k == 42 {
                e[3] = spike;
            }
            e
        });
        let r = tracking_errors(&log).unwrap();
        assert_eq!(r.worst_joint, 4);
        assert!((r.joints[3].max_abs_deg - 0.26).abs() < 1e-12);
        assert!((r.joints[3].time_of_max - 0.042).abs() < 1e-12);
        assert!(r.joints.iter().all(|j| j.max_abs >= j.rms));
        assert!(r.to_text("t").contains("largest error on joint 4"));
    }

    #[test]
    fn constant_error_rms_equals_max() {
        let r = tracking_errors(&log_with(ControllerKind::Pd, 50, |_| JointVector::repeat(-0.01))).unwrap();
        for j in &r.joints {
            assert!((j.rms - 0.01).abs() < 1e-15 && (j.max_abs - 0.01).abs() < 1e-15);
            assert!((j.max_signed + 0.01).abs() < 1e-15);
        }
        assert!(tracking_errors(&log_with(ControllerKind::Pd, 0, |_| JointVector::zeros())).is_err());
    }

    #[test]
    fn decomposition_needs_hybrid_log() {
        assert!(torque_decomposition(&log_with(ControllerKind::Pd, 5, |_| JointVector::zeros())).is_err());
        let shares = torque_decomposition(&log_with(ControllerKind::Hybrid, 5, |_| JointVector::zeros())).unwrap();
        for s in shares {
            assert!((s.feedback_ratio - 1.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_feedback_gives_zero_ratio() {
        let mut log = log_with(ControllerKind::Hybrid, 5, |_| JointVector::zeros());
        for r in &mut log.records {
            r.command = TorqueCommand::from_parts(JointVector::repeat(3.0), JointVector::zeros());
        }
        assert!(torque_decomposition(&log).unwrap().iter().all(|s| s.feedback_ratio == 0.0));
    }

    #[test]
    fn identical_logs_compare_to_zero_difference() {
        let log = log_with(ControllerKind::Hybrid, 20, |k| JointVector::repeat(k as f64 * 1e-5));
        let c = compare_logs(&log, &log).unwrap();
        assert_eq!(c.reference_errors, c.candidate_errors);
        let csv = compare_csv(&[c]);
        assert!(csv.lines().skip(1).all(|l| l.split(',').nth(6) == Some("0")));
        let mut other = log.clone();
        other.metadata.trajectory = "other".into();
        assert!(compare_logs(&log, &other).is_err());
    }

    #[test]
    fn robustness_study_on_identical_groups() {
        let logs: Vec<SimLog> = (0..3)
            .map(|_| log_with(ControllerKind::Hybrid, 30, |k| JointVector::repeat((k as f64).sin() * 1e-3)))
            .collect();
        let windows = [(0.0, 0.029); DOF];
        let study = RobustnessStudy::from_logs("weight", &[150.0, 200.0, 250.0], &logs, &windows, 30).unwrap();
        assert!(study.joints.iter().all(|j| j.table.f.abs() < 1e-9 && (j.table.p - 1.0).abs() < 1e-9));
        assert!(study.insensitive_at(CONVENTIONAL_SIGNIFICANCE));
        assert!(study.to_text().contains("Prob>F"));
        assert!(study.joints.iter().all(|j| j.eta_squared == 0.0));
        assert!(RobustnessStudy::from_logs("weight", &[1.0], &logs, &windows, 30).is_err());
    }

    #[test]
    fn error_samples_span_the_window() {
        let log = log_with(ControllerKind::Hybrid, 101, |k| JointVector::repeat(k as f64));
        let s = error_samples(&log, 2, (0.01, 0.05), 5).unwrap();
        assert_eq!(s, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(error_samples(&log, 0, (0.0, 9.0), 2).unwrap(), vec![0.0, 100.0]);
        assert!(error_samples(&log, 7, (0.0, 0.1), 5).is_err());
    }
}
