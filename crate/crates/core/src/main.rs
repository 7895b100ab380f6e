use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exodyn::analysis::{
    compare_csv, compare_logs, compare_text, one_way_anova, torque_decomposition, torque_shares_csv, tracking_errors,
};
use exodyn::anthropometry::{segment_parameters, Subject};
use exodyn::config::ExperimentConfig;
use exodyn::control::{BoundedNoise, Controller, Feedforward, HybridConfig};
use exodyn::dynamics::{decompose, inverse_dynamics, JointState, RobotModel};
use exodyn::kinematics::forward_kinematics;
use exodyn::neuralnet::{Dataset, Mlp};
use exodyn::pipeline::{ensure_dir, run_pipeline, scenario_parts, stage_gen_data, stage_train};
use exodyn::simulation::{InitialState, SimLog};
use exodyn::trajectory::{generate, MovementMode};
use exodyn::{Error, JointVector, Result, DOF};

// Like print!/println!, but a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! sayln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Lower-extremity exoskeleton dynamics, control and learning toolkit.
#[derive(Parser)]
#[command(name = "exodyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment parameters for a subject.
    Anthro {
        #[command(flatten)]
        subject: SubjectArgs,
        /// Report SI units instead of inches/pounds.
        #[arg(long)]
        si: bool,
        #[arg(long)]
        json: bool,
    },
    /// Pose of the last joint frame for joint angles.
    Fk {
        #[command(flatten)]
        subject: SubjectArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Seven joint angles, degrees, comma separated.
        #[arg(long, value_parser = parse_joints, allow_hyphen_values = true)]
        theta: JointVector,
        #[arg(long)]
        json: bool,
    },
    /// Inverse dynamics and its mass / Coriolis / gravity decomposition.
    Dynamics {
        #[command(flatten)]
        subject: SubjectArgs,
        #[command(flatten)]
        config: ConfigArgs,
        /// Joint angles, degrees.
        #[arg(long, value_parser = parse_joints, allow_hyphen_values = true)]
        theta: JointVector,
        /// Joint velocities, deg/s.
        #[arg(long, value_parser = parse_joints, allow_hyphen_values = true, default_value = "0,0,0,0,0,0,0")]
        theta_dot: JointVector,
        /// Joint accelerations, deg/s².
        #[arg(long, value_parser = parse_joints, allow_hyphen_values = true, default_value = "0,0,0,0,0,0,0")]
        theta_ddot: JointVector,
        #[arg(long)]
        json: bool,
    },
    /// Sample a reference trajectory to CSV.
    Trajectory {
        #[command(flatten)]
        config: ConfigArgs,
        /// Peak joint velocity, deg/s.
        #[arg(long)]
        velocity: f64,
        #[arg(long, value_enum, default_value = "sequential")]
        mode: ModeArg,
        /// Sample period, s.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate training data over the configured sweep grid.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured downsample factor.
        #[arg(long)]
        downsample: Option<usize>,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Train the network on a dataset.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset CSV written by gen-data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one controller on one subject and trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        /// Trained network, required for the hybrid controller.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Replace the network feedforward by bounded random torque of this amplitude, N·m.
        #[arg(long)]
        noise: Option<f64>,
        /// Peak joint velocity, deg/s (default: evaluation velocity).
        #[arg(long)]
        velocity: Option<f64>,
        /// Subject height, inches (default: evaluation subject).
        #[arg(long)]
        height: Option<f64>,
        /// Subject weight, pounds (default: evaluation subject).
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long, value_enum, default_value = "sequential")]
        mode: ModeArg,
        /// Enable plant friction (overrides the config).
        #[arg(long)]
        friction: bool,
        /// Integrator substeps per control step (overrides the config).
        #[arg(long)]
        substeps: Option<usize>,
        /// Initial position offset from the trajectory start, degrees.
        #[arg(long, value_parser = parse_joints, allow_hyphen_values = true)]
        offset: Option<JointVector>,
        /// Run length, s (default: trajectory plus settle time).
        #[arg(long)]
        duration: Option<f64>,
        /// Log CSV; metadata is written next to it as JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tracking and torque reports for a simulation log.
    Analyze {
        /// Log CSV written by simulate.
        #[arg(long)]
        log: PathBuf,
        /// Directory for CSV reports; text goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-way ANOVA over groups of samples.
    Anova {
        /// Comma-separated samples of one group; repeat for each group.
        #[arg(long = "group", value_parser = parse_list, allow_hyphen_values = true)]
        groups: Vec<Vec<f64>>,
        /// CSV with a header and one group per column (alternative to --group).
        #[arg(long, conflicts_with = "groups")]
        csv: Option<PathBuf>,
    },
    /// Generate data, train, simulate and analyze in one run.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Compare reference and candidate logs over the same trajectories.
    Compare {
        /// Reference log CSV (e.g. computed torque); repeat per movement mode.
        #[arg(long, required = true)]
        reference: Vec<PathBuf>,
        /// Candidate log CSV (e.g. hybrid), paired with --reference in order.
        #[arg(long, required = true)]
        candidate: Vec<PathBuf>,
        /// Write CSV here; text goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a shipped configuration preset.
    Preset {
        #[arg(value_parser = ["desk", "full"])]
        name: String,
    },
}

#[derive(Args)]
struct SubjectArgs {
    /// Height, inches.
    #[arg(long)]
    height: f64,
    /// Weight, pounds.
    #[arg(long)]
    weight: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset to use when no --config is given.
    #[arg(long, default_value = "desk")]
    preset: String,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => ExperimentConfig::preset(&self.preset),
        }
    }
}

#[derive(Args)]
struct WorkerArgs {
    /// Worker threads (default: config value).
    #[arg(long, env = "EXODYN_WORKERS")]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn resolve(&self, cfg: &ExperimentConfig) -> usize {
        match self.workers {
            Some(0) | None => cfg.worker_count(),
            Some(n) => n,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Simultaneous,
}

impl From<ModeArg> for MovementMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequential => MovementMode::Sequential,
            ModeArg::Simultaneous => MovementMode::Simultaneous,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    Ctc,
    Pd,
    Hybrid,
    Passive,
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}"))).collect()
}

fn parse_joints(s: &str) -> std::result::Result<JointVector, String> {
    let v = parse_list(s)?;
    if v.len() != DOF {
        return Err(format!("expected {DOF} comma-separated values, got {}", v.len()));
    }
    Ok(JointVector::from_column_slice(&v))
}

fn deg(v: &JointVector) -> JointVector {
    v.map(f64::to_radians)
}

fn fmt_vec(v: &JointVector) -> String {
    v.iter().map(|x| format!("{x:>12.6}")).collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn model_for(config: &ConfigArgs, subject: &SubjectArgs) -> Result<RobotModel> {
    let cfg = config.load()?;
    RobotModel::from_subject(&Subject::new(subject.height, subject.weight)?, &cfg.model_options())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Anthro { subject, si, json } => {
            let s = Subject::new(subject.height, subject.weight)?;
            let seg = segment_parameters(&s)?;
            if si {
                let si = seg.to_si();
                if json {
                    sayln!("{}", serde_json::to_string_pretty(&si)?);
                } else {
                    sayln!("segment  mass[kg]  length[m]  com[m]  Ixx,Iyy,Izz[kg·m²]");
                    for (name, p) in [("thigh", &si.thigh), ("shank", &si.shank), ("foot", &si.foot)] {
                        sayln!("{name:<8} {:>8.4} {:>10.4} {:>7.4}  {:.5?}", p.mass, p.length, p.com, p.inertia);
                    }
                    sayln!("ankle height {:.4} m", si.ankle_height);
                }
            } else if json {
                sayln!("{}", serde_json::to_string_pretty(&seg)?);
            } else {
                sayln!("stature ratio {:.6}, body density {:.6}", seg.stature_ratio, seg.body_density);
                sayln!("segment  mass[lb]  length[in]  com[in]  Ixx,Iyy,Izz[lb·in²]");
                for (name, p) in [("thigh", &seg.thigh), ("shank", &seg.shank), ("foot", &seg.foot)] {
                    sayln!("{name:<8} {:>8.4} {:>11.4} {:>8.4}  {:.4?}", p.mass, p.length, p.com, p.inertia);
                }
                sayln!("ankle height {:.4} in", seg.ankle_height);
            }
        }
        Command::Fk { subject, config, theta, json } => {
            let model = model_for(&config, &subject)?;
            let pose = forward_kinematics(&deg(&theta), &model);
            let m = pose.composite.0;
            if json {
                let rows: Vec<Vec<f64>> = (0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()).collect();
                sayln!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                for r in 0..4 {
                    sayln!("{:>12.6} {:>12.6} {:>12.6} {:>12.6}", m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]);
                }
            }
        }
        Command::Dynamics { subject, config, theta, theta_dot, theta_ddot, json } => {
            let model = model_for(&config, &subject)?;
            let state = JointState::new(deg(&theta), deg(&theta_dot), deg(&theta_ddot));
            let tau = inverse_dynamics(&state, &model);
            let terms = decompose(&state.theta, &state.theta_dot, &model);
            if json {
                #[derive(serde::Serialize)]
                struct Out<'a> {
                    torque: &'a JointVector,
                    terms: &'a exodyn::dynamics::DynamicsTerms,
                }
                sayln!("{}", serde_json::to_string_pretty(&Out { torque: &tau, terms: &terms })?);
            } else {
                sayln!("torque   {}", fmt_vec(&tau));
                sayln!("coriolis {}", fmt_vec(&terms.coriolis));
                sayln!("gravity  {}", fmt_vec(&terms.gravity));
                sayln!("mass matrix");
                for r in 0..DOF {
                    sayln!("         {}", fmt_vec(&terms.mass.row(r).transpose()));
                }
            }
        }
        Command::Trajectory { config, velocity, mode, dt, out } => {
            let cfg = config.load()?;
            let traj = generate(&cfg.rom()?, velocity.to_radians(), mode.into())?;
            traj.write_csv(&out, dt)?;
            eprintln!("{} -> {}", traj.descriptor(), out.display());
        }
        Command::GenData { config, out, downsample, workers } => {
            let mut cfg = config.load()?;
            if let Some(d) = downsample {
                cfg.datagen.downsample = d;
                cfg.validate()?;
            }
            let (_, report, _) = stage_gen_data(&cfg, &out, workers.resolve(&cfg))?;
            sayln!(
                "{} scenarios, {} failed, {} raw rows, {} kept (every {})",
                report.scenarios,
                report.failed.len(),
                report.raw_rows,
                report.kept_rows,
                report.downsample
            );
        }
        Command::Train { config, data, out } => {
            let cfg = config.load()?;
            let dataset = Dataset::read(&data)?;
            let (_, summary, _) = stage_train(&cfg, &dataset, &out)?;
            sayln!(
                "{} parameters, stop {:?} at best iteration {}; test MSE {:.4e} (N·m)²",
                summary.parameters,
                summary.stop,
                summary.best_iteration,
                summary.test_mse_raw
            );
        }
        Command::Simulate {
            config,
            controller,
            model,
            noise,
            velocity,
            height,
            weight,
            mode,
            friction,
            substeps,
            offset,
            duration,
            out,
        } => {
            let cfg = config.load()?;
            let e = &cfg.evaluation;
            let subject = Subject::new(height.unwrap_or(e.height), weight.unwrap_or(e.weight))?;
            let (plant, trajectory) = scenario_parts(&cfg, velocity.unwrap_or(e.velocity), subject, mode.into())?;
            let gains = cfg.gains()?;
            let ctrl = match controller {
                ControllerArg::Ctc => Controller::ComputedTorque { gains, model: Arc::new(plant.clone()) },
                ControllerArg::Pd => Controller::Pd { gains },
                ControllerArg::Passive => Controller::Passive,
                ControllerArg::Hybrid => {
                    let feedforward = match (noise, &model) {
                        (Some(amplitude), _) => {
                            Feedforward::Noise(BoundedNoise { amplitude, hold: 0.05, seed: cfg.seed })
                        }
                        (None, Some(path)) => Feedforward::Network(Arc::new(Mlp::load(path)?)),
                        (None, None) => {
                            return Err(Error::Config("the hybrid controller needs --model or --noise".into()))
                        }
                    };
                    Controller::Hybrid(HybridConfig { gains, feedforward, subject })
                }
            };
            let mut sim = cfg.sim_config();
            sim.friction |= friction;
            if let Some(s) = substeps {
                sim.substeps = s;
            }
            sim.duration = duration;
            if let Some(o) = offset {
                sim.initial = InitialState::Offset { offset: deg(&o) };
            }
            let log = exodyn::simulation::simulate(&plant, &ctrl, &trajectory, &sim)?;
            log.write(&out)?;
            let report = tracking_errors(&log)?;
            say!("{}", report.to_text(&format!("{} — {}", log.metadata.controller, log.metadata.trajectory)));
        }
        Command::Analyze { log, out } => {
            let log = SimLog::read(&log)?;
            let report = tracking_errors(&log)?;
            say!("{}", report.to_text(&format!("{} — {}", log.metadata.controller, log.metadata.trajectory)));
            let shares = torque_decomposition(&log).ok();
            if let Some(shares) = &shares {
                sayln!("joint  feedforward_rms  feedback_rms  feedback_ratio");
                for (j, s) in shares.iter().enumerate() {
                    sayln!(
                        "{:<6} {:>15.4} {:>13.4} {:>15.4}",
                        j + 1,
                        s.feedforward_rms,
                        s.feedback_rms,
                        s.feedback_ratio
                    );
                }
            }
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write(&dir.join("tracking.csv"), &report.to_csv())?;
                if let Some(shares) = &shares {
                    write(&dir.join("torque_shares.csv"), &torque_shares_csv(shares))?;
                }
            }
        }
        Command::Anova { groups, csv } => {
            let groups = match csv {
                Some(path) => read_columns(&path)?,
                None => groups,
            };
            let table = one_way_anova(&groups)?;
            say!("{}", table.to_text("One-way ANOVA"));
        }
        Command::Pipeline { config, out, workers } => {
            let cfg = config.load()?;
            let summary = run_pipeline(&cfg, &out, workers.resolve(&cfg))?;
            for e in &summary.analysis.evaluation {
                let max = e.hybrid_max_error_deg.iter().cloned().fold(0.0, f64::max);
                sayln!("{}: hybrid max tracking error {max:.4} deg", e.mode);
            }
            for r in &summary.analysis.robustness {
                let min_p = r.p.iter().cloned().fold(1.0, f64::min);
                sayln!("{} {}: smallest ANOVA p {min_p:.4}", r.mode, r.factor);
            }
            sayln!("artifacts in {}", out.display());
        }
        Command::Compare { reference, candidate, out } => {
            if reference.len() != candidate.len() {
                return Err(Error::domain("give one --candidate per --reference"));
            }
            let comparisons = reference
                .iter()
                .zip(&candidate)
                .map(|(r, c)| compare_logs(&SimLog::read(r)?, &SimLog::read(c)?))
                .collect::<Result<Vec<_>>>()?;
            say!("{}", compare_text(&comparisons));
            if let Some(path) = out {
                write(&path, &compare_csv(&comparisons))?;
            }
        }
        Command::Preset { name } => {
            say!("{}", ExperimentConfig::preset_text(&name).expect("validated by clap"));
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let width = match lines.next() {
        Some((_, h)) => h.split(',').count(),
        None => return Err(Error::Parse { path: path.into(), row: 1, column: 1, message: "missing header".into() }),
    };
    let mut cols = vec![Vec::new(); width];
    for (i, line) in lines {
        for (c, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            if c >= width {
                return Err(Error::Parse {
                    path: path.into(),
                    row: i + 1,
                    column: c + 1,
                    message: "too many columns".into(),
                });
            }
            let v = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row: i + 1,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}
