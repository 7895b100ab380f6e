//! End-to-end experiment: generate data, train the network, simulate the
//! held-out scenario under computed-torque and hybrid control, and analyze.
//!
//! Every artifact lands in one output directory together with
//! `manifest.json`, which is rewritten after each stage so an interrupted
//! run still documents what it produced. Outputs carry no timestamps, so a
//! rerun with the same configuration is byte-identical.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_csv, compare_logs, compare_text, torque_decomposition, torque_shares_csv, tracking_errors, Comparison,
    RobustnessStudy, CONVENTIONAL_SIGNIFICANCE, STRICT_SIGNIFICANCE,
};
use crate::anthropometry::Subject;
use crate::config::ExperimentConfig;
use crate::control::{Controller, Feedforward, HybridConfig};
use crate::datagen::{feature_correlations, generate_dataset, generate_grid, DatagenReport};
use crate::dynamics::RobotModel;
use crate::error::{Error, Result};
use crate::neuralnet::{
    header, history_csv, split_dataset, train_lm, Dataset, Mlp, StopReason, INPUT_WIDTH, OUTPUT_WIDTH,
};
use crate::plot::{Plot, Scale, Series};
use crate::simulation::{simulate, SimLog};
use crate::trajectory::{generate, MovementMode, Trajectory};
use crate::DOF;

pub const MANIFEST_FORMAT: &str = "exodyn-manifest";
pub const MANIFEST_VERSION: u32 = 1;

pub const STAGES: [&str; 4] = ["gen-data", "train", "simulate", "analyze"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub experiment: String,
    pub seed: u64,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            experiment: cfg.name.clone(),
            seed: cfg.seed,
            complete: false,
            stages: STAGES
                .iter()
                .map(|s| StageRecord {
                    name: s.to_string(),
                    status: StageStatus::Pending,
                    artifacts: vec![],
                    error: None,
                })
                .collect(),
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_file(&out.join("manifest.json"), &(serde_json::to_string_pretty(self)? + "\n"))
    }

    pub fn read(out: &Path) -> Result<Self> {
        let path = out.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Collects the files a stage writes, relative to the output directory.
struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Artifacts { dir, names: Vec::new() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        write_file(&self.path(name), text)?;
        self.names.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn log(&mut self, name: &str, log: &SimLog) -> Result<()> {
        let path = self.path(name);
        log.write(&path)?;
        self.names.push(name.into());
        self.names.push(SimLog::sidecar_path(Path::new(name)).display().to_string());
        Ok(())
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Generates, downsamples and writes the training data.
pub fn stage_gen_data(
    cfg: &ExperimentConfig,
    out: &Path,
    workers: usize,
) -> Result<(Dataset, DatagenReport, Vec<String>)> {
    ensure_dir(out)?;
    let scenarios = generate_grid(&cfg.grid, &cfg.rom()?, &cfg.model_options())?;
    let (data, report) =
        generate_dataset(&scenarios, &cfg.datagen_sim(), &cfg.gains()?, cfg.datagen.downsample, workers)?;
    for f in &report.failed {
        eprintln!("warning: scenario {} excluded: {}", f.label, f.message);
    }
    let mut a = Artifacts::new(out);
    a.text("dataset.csv", &data.to_csv())?;
    a.json("datagen_report.json", &report)?;
    let corr = feature_correlations(&data);
    let names = header();
    let mut csv = String::from("input");
    for k in 0..OUTPUT_WIDTH {
        csv += &format!(",{}", names[INPUT_WIDTH + k]);
    }
    csv.push('\n');
    for (i, row) in corr.iter().enumerate() {
        csv += &names[i];
        for v in row {
            csv += &format!(",{v}");
        }
        csv.push('\n');
    }
    a.text("correlations.csv", &csv)?;
    Ok((data, report, a.names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub train_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
    pub parameters: usize,
    pub trials: usize,
    pub best_iteration: usize,
    pub stop: StopReason,
    /// Standardized-unit MSEs at the returned weights.
    pub train_mse: f64,
    pub validation_mse: f64,
    pub test_mse: f64,
    /// MSEs in (N·m)².
    pub train_mse_raw: f64,
    pub validation_mse_raw: f64,
    pub test_mse_raw: f64,
}

/// Splits 70/15/15, trains with Levenberg–Marquardt and writes the model.
pub fn stage_train(cfg: &ExperimentConfig, data: &Dataset, out: &Path) -> Result<(Mlp, TrainingSummary, Vec<String>)> {
    ensure_dir(out)?;
    let split = split_dataset(data, cfg.seed)?;
    let init = Mlp::new(&cfg.layer_sizes(), &cfg.activations(), cfg.seed)?;
    let outcome = train_lm(&init, &split, &cfg.lm_options())?;
    let best = outcome
        .history
        .iter()
        .rev()
        .find(|r| r.accepted && r.iteration == outcome.best_iteration)
        .copied()
        .unwrap_or(outcome.history[0]);
    let summary = TrainingSummary {
        train_rows: split.train.len(),
        validation_rows: split.validation.len(),
        test_rows: split.test.len(),
        parameters: outcome.mlp.param_count(),
        trials: outcome.history.len() - 1,
        best_iteration: outcome.best_iteration,
        stop: outcome.stop,
        train_mse: best.train_mse,
        validation_mse: best.validation_mse,
        test_mse: best.test_mse,
        train_mse_raw: best.train_mse_raw,
        validation_mse_raw: best.validation_mse_raw,
        test_mse_raw: best.test_mse_raw,
    };
    let mut a = Artifacts::new(out);
    a.text("model.json", &(outcome.mlp.to_json()? + "\n"))?;
    a.text("training_history.csv", &history_csv(&outcome.history))?;
    a.json("training_summary.json", &summary)?;
    let accepted: Vec<_> = outcome.history.iter().filter(|r| r.accepted).collect();
    let curve = |name: &str, f: fn(&crate::neuralnet::TrainRecord) -> f64| {
        Series::new(name, accepted.iter().map(|r| (r.iteration as f64, f(r))).collect())
    };
    let plot = Plot {
        title: "Training performance",
        x_label: "iteration",
        y_label: "MSE (standardized)",
        y_scale: Scale::Log10,
    };
    a.text(
        "training_curve.svg",
        &plot.render(&[
            curve("train", |r| r.train_mse),
            curve("validation", |r| r.validation_mse),
            curve("test", |r| r.test_mse),
        ]),
    )?;
    Ok((outcome.mlp, summary, a.names))
}

/// Subject model and trajectory of a run at `velocity` deg/s.
pub fn scenario_parts(
    cfg: &ExperimentConfig,
    velocity: f64,
    subject: Subject,
    mode: MovementMode,
) -> Result<(RobotModel, Trajectory)> {
    let model = RobotModel::from_subject(&subject, &cfg.model_options())?;
    let trajectory = generate(&cfg.rom()?, velocity.to_radians(), mode)?;
    Ok((model, trajectory))
}

pub fn hybrid_controller(cfg: &ExperimentConfig, mlp: Arc<Mlp>, subject: Subject) -> Result<Controller> {
    Ok(Controller::Hybrid(HybridConfig { gains: cfg.gains()?, feedforward: Feedforward::Network(mlp), subject }))
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub mode: MovementMode,
    pub ctc: SimLog,
    pub hybrid: SimLog,
}

/// Runs computed-torque and hybrid control on the held-out scenario for every evaluation mode.
pub fn stage_simulate(
    cfg: &ExperimentConfig,
    mlp: Arc<Mlp>,
    out: &Path,
    workers: usize,
) -> Result<(Vec<EvaluationRun>, Vec<String>)> {
    ensure_dir(out)?;
    let e = &cfg.evaluation;
    let subject = Subject::new(e.height, e.weight)?;
    let sim = cfg.sim_config();
    let gains = cfg.gains()?;
    let jobs: Vec<(MovementMode, bool)> = e.modes.iter().flat_map(|&m| [(m, false), (m, true)]).collect();
    let logs: Vec<Result<SimLog>> = with_pool(workers, || {
        jobs.par_iter()
            .map(|&(mode, hybrid)| {
                let (model, trajectory) = scenario_parts(cfg, e.velocity, subject, mode)?;
                let controller = if hybrid {
                    hybrid_controller(cfg, mlp.clone(), subject)?
                } else {
                    Controller::ComputedTorque { gains, model: Arc::new(model.clone()) }
                };
                simulate(&model, &controller, &trajectory, &sim)
            })
            .collect()
    })?;
    let mut logs = logs.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let mut a = Artifacts::new(out);
    let mut runs = Vec::new();
    for &mode in &e.modes {
        let (ctc, hybrid) = (logs.next().unwrap(), logs.next().unwrap());
        a.log(&format!("sim_ctc_{mode}.csv"), &ctc)?;
        a.log(&format!("sim_hybrid_{mode}.csv"), &hybrid)?;
        runs.push(EvaluationRun { mode, ctc, hybrid });
    }
    Ok((runs, a.names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub mode: MovementMode,
    pub hybrid_max_error_deg: Vec<f64>,
    pub hybrid_rms_error_deg: Vec<f64>,
    pub ctc_max_error_deg: Vec<f64>,
    /// RMS feedback / RMS total torque per joint, hybrid controller.
    pub feedback_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub mode: MovementMode,
    pub factor: String,
    pub p: Vec<f64>,
    pub eta_squared: Vec<f64>,
    pub insensitive_at_strict: bool,
    pub insensitive_at_conventional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub evaluation: Vec<EvaluationSummary>,
    pub robustness: Vec<RobustnessSummary>,
}

fn joint_series(log: &SimLog, f: impl Fn(&crate::simulation::SimRecord, usize) -> f64) -> Vec<Series> {
    (0..DOF)
        .map(|j| Series::new(format!("joint {}", j + 1), log.records.iter().map(|r| (r.t, f(r, j))).collect()))
        .collect()
}

/// Runs the hybrid controller over subject levels of one factor.
pub fn robustness_study(
    cfg: &ExperimentConfig,
    mlp: Arc<Mlp>,
    mode: MovementMode,
    factor: &str,
    workers: usize,
) -> Result<RobustnessStudy> {
    let r = &cfg.robustness;
    let (levels, subjects): (Vec<f64>, Vec<Result<Subject>>) = match factor {
        "weight" => r.weights.iter().map(|&w| (w, Subject::new(r.height, w))).unzip(),
        "height" => r.heights.iter().map(|&h| (h, Subject::new(h, r.weight))).unzip(),
        other => return Err(Error::domain(format!("unknown robustness factor {other:?}"))),
    };
    let subjects = subjects.into_iter().collect::<Result<Vec<_>>>()?;
    let sim = cfg.sim_config();
    let logs: Vec<Result<SimLog>> = with_pool(workers, || {
        subjects
            .par_iter()
            .map(|&s| {
                let (model, trajectory) = scenario_parts(cfg, r.velocity, s, mode)?;
                simulate(&model, &hybrid_controller(cfg, mlp.clone(), s)?, &trajectory, &sim)
            })
            .collect()
    })?;
    let logs = logs.into_iter().collect::<Result<Vec<_>>>()?;
    let trajectory = generate(&cfg.rom()?, r.velocity.to_radians(), mode)?;
    let windows = std::array::from_fn(|j| trajectory.joint_window(j));
    RobustnessStudy::from_logs(factor, &levels, &logs, &windows, r.samples)
}

/// Tracking, torque-share, comparison and robustness reports.
pub fn stage_analyze(
    cfg: &ExperimentConfig,
    mlp: Arc<Mlp>,
    runs: &[EvaluationRun],
    out: &Path,
    workers: usize,
) -> Result<(AnalysisSummary, Vec<String>)> {
    ensure_dir(out)?;
    let mut a = Artifacts::new(out);
    let mut evaluation = Vec::new();
    let mut comparisons: Vec<Comparison> = Vec::new();
    for run in runs {
        let mode = run.mode;
        let hybrid = tracking_errors(&run.hybrid)?;
        let ctc = tracking_errors(&run.ctc)?;
        let shares = torque_decomposition(&run.hybrid)?;
        a.text(&format!("tracking_hybrid_{mode}.csv"), &hybrid.to_csv())?;
        a.text(&format!("tracking_ctc_{mode}.csv"), &ctc.to_csv())?;
        a.text(&format!("torque_shares_{mode}.csv"), &torque_shares_csv(&shares))?;
        let title = format!("Hybrid tracking error, {mode} movement");
        a.text(
            &format!("errors_{mode}.svg"),
            &Plot { title: &title, x_label: "time [s]", y_label: "error [deg]", y_scale: Scale::Linear }
                .render(&joint_series(&run.hybrid, |r, j| (r.desired.theta[j] - r.actual.theta[j]).to_degrees())),
        )?;
        let title = format!("PD contribution, {mode} movement");
        a.text(
            &format!("feedback_{mode}.svg"),
            &Plot { title: &title, x_label: "time [s]", y_label: "torque [N·m]", y_scale: Scale::Linear }
                .render(&joint_series(&run.hybrid, |r, j| r.command.feedback[j])),
        )?;
        let title = format!("Predicted torque, {mode} movement");
        a.text(
            &format!("feedforward_{mode}.svg"),
            &Plot { title: &title, x_label: "time [s]", y_label: "torque [N·m]", y_scale: Scale::Linear }
                .render(&joint_series(&run.hybrid, |r, j| r.command.feedforward[j])),
        )?;
        comparisons.push(compare_logs(&run.ctc, &run.hybrid)?);
        evaluation.push(EvaluationSummary {
            mode,
            hybrid_max_error_deg: hybrid.joints.iter().map(|j| j.max_abs_deg).collect(),
            hybrid_rms_error_deg: hybrid.joints.iter().map(|j| j.rms_deg).collect(),
            ctc_max_error_deg: ctc.joints.iter().map(|j| j.max_abs_deg).collect(),
            feedback_ratio: shares.iter().map(|s| s.feedback_ratio).collect(),
        });
    }
    if !comparisons.is_empty() {
        a.text("comparison.csv", &compare_csv(&comparisons))?;
        a.text("comparison.txt", &compare_text(&comparisons))?;
    }

    let mut robustness = Vec::new();
    for &mode in &cfg.robustness.modes {
        for factor in ["weight", "height"] {
            let study = robustness_study(cfg, mlp.clone(), mode, factor, workers)?;
            a.text(&format!("anova_{factor}_{mode}.csv"), &study.to_csv())?;
            a.text(&format!("anova_{factor}_{mode}.txt"), &format!("{mode} movement\n{}", study.to_text()))?;
            robustness.push(RobustnessSummary {
                mode,
                factor: factor.into(),
                p: study.joints.iter().map(|j| j.table.p).collect(),
                eta_squared: study.joints.iter().map(|j| j.eta_squared).collect(),
                insensitive_at_strict: study.insensitive_at(STRICT_SIGNIFICANCE),
                insensitive_at_conventional: study.insensitive_at(CONVENTIONAL_SIGNIFICANCE),
            });
        }
    }
    let summary = AnalysisSummary { evaluation, robustness };
    a.json("analysis_summary.json", &summary)?;
    Ok((summary, a.names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub datagen: DatagenReport,
    pub training: TrainingSummary,
    pub analysis: AnalysisSummary,
}

/// Runs every stage in order, recording progress in `manifest.json`.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<PipelineSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new(cfg);
    manifest.write(out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml()?)?;

    fn finish<T>(manifest: &mut Manifest, out: &Path, stage: usize, result: Result<(T, Vec<String>)>) -> Result<T> {
        let record = &mut manifest.stages[stage];
        let value = match result {
            Ok((value, artifacts)) => {
                record.status = StageStatus::Complete;
                record.artifacts = artifacts;
                Ok(value)
            }
            Err(e) => {
                record.status = StageStatus::Failed;
                record.error = Some(e.to_string());
                Err(e)
            }
        };
        manifest.write(out)?;
        value
    }

    let (data, datagen) =
        finish(&mut manifest, out, 0, stage_gen_data(cfg, out, workers).map(|(d, r, a)| ((d, r), a)))?;
    let (mlp, training) = finish(&mut manifest, out, 1, stage_train(cfg, &data, out).map(|(m, s, a)| ((m, s), a)))?;
    drop(data);
    let mlp = Arc::new(mlp);
    let runs = finish(&mut manifest, out, 2, stage_simulate(cfg, mlp.clone(), out, workers))?;
    let analysis = finish(&mut manifest, out, 3, stage_analyze(cfg, mlp, &runs, out, workers))?;
    manifest.complete = true;
    manifest.write(out)?;
    let summary = PipelineSummary { datagen, training, analysis };
    write_file(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(summary)
}
