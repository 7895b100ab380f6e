//! Levenberg–Marquardt training on standardized inputs and targets.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, SplitDataset, INPUT_WIDTH, OUTPUT_WIDTH};
use super::mlp::{Affine, Mlp};
use crate::error::{Error, Result};

/// Rows per Jacobian block handed to the matrix product.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Consecutive non-improving validation checks before stopping.
    pub patience: usize,
    /// Stop once the standardized training MSE reaches this value.
    pub mse_goal: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_max: f64,
    /// Training rows used to build `JᵀJ`; larger training splits are
    /// subsampled once, uniformly, with `seed`.
    pub row_budget: usize,
    /// Fit input/target standardization on the training split before training.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 300,
            patience: 6,
            mse_goal: 0.0,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            lambda_max: 1e10,
            row_budget: 6000,
            normalize: true,
            seed: 0,
        }
    }
}

/// One LM trial. MSEs are given both in standardized target units (the
/// optimized objective) and in the targets' own units, (N·m)² for torques.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub test_mse: f64,
    pub train_mse_raw: f64,
    pub validation_mse_raw: f64,
    pub test_mse_raw: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    ValidationPatience,
    MseGoal,
    DampingLimit,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights at the best validation MSE.
    pub mlp: Mlp,
    pub history: Vec<TrainRecord>,
    pub best_iteration: usize,
    pub stop: StopReason,
}

/// Standardized copy of a dataset, flattened row-major.
struct Standardized {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
}

impl Standardized {
    fn new(data: &Dataset, rows: impl Iterator<Item = usize>, mlp: &Mlp) -> Self {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut zx = [0.0; INPUT_WIDTH];
        let mut zy = [0.0; OUTPUT_WIDTH];
        let mut n = 0;
        for i in rows {
            mlp.input_norm.normalize(data.inputs(i), &mut zx);
            mlp.output_norm.normalize(data.targets(i), &mut zy);
            x.extend_from_slice(&zx);
            y.extend_from_slice(&zy);
            n += 1;
        }
        Standardized { x, y, n }
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.x[i * INPUT_WIDTH..(i + 1) * INPUT_WIDTH]
    }

    fn target(&self, i: usize) -> &[f64] {
        &self.y[i * OUTPUT_WIDTH..(i + 1) * OUTPUT_WIDTH]
    }

    /// (standardized MSE, raw-unit MSE); NaN for an empty set.
    fn mse(&self, mlp: &Mlp) -> (f64, f64) {
        if self.n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let scale = &mlp.output_norm.scale;
        let (mut s, mut raw) = (0.0, 0.0);
        for i in 0..self.n {
            let out = mlp.forward_normalized(self.input(i));
            for (k, (o, t)) in out.iter().zip(self.target(i)).enumerate() {
                let r = t - o;
                s += r * r;
                raw += r * r * scale[k] * scale[k];
            }
        }
        let denom = (self.n * OUTPUT_WIDTH) as f64;
        (s / denom, raw / denom)
    }
}

fn check_shape(mlp: &Mlp) -> Result<()> {
    if mlp.input_width() != INPUT_WIDTH {
        return Err(Error::Shape { expected: INPUT_WIDTH, actual: mlp.input_width() });
    }
    if mlp.output_width() != OUTPUT_WIDTH {
        return Err(Error::Shape { expected: OUTPUT_WIDTH, actual: mlp.output_width() });
    }
    Ok(())
}

/// Accumulates `JᵀJ` and `Jᵀr` over the working set.
fn normal_equations(mlp: &Mlp, set: &Standardized) -> (DMatrix<f64>, DVector<f64>) {
    let p = mlp.param_count();
    let mut jtj = DMatrix::<f64>::zeros(p, p);
    let mut jtr = DVector::<f64>::zeros(p);
    let mut grad = vec![0.0; OUTPUT_WIDTH * p];
    let mut start = 0;
    while start < set.n {
        let end = (start + CHUNK_ROWS).min(set.n);
        let cols = (end - start) * OUTPUT_WIDTH;
        // Column c holds the gradient of residual c; nalgebra is column-major,
        // so each gradient is written contiguously.
        let mut jt = DMatrix::<f64>::zeros(p, cols);
        let mut r = DVector::<f64>::zeros(cols);
        for (local, i) in (start..end).enumerate() {
            let trace = mlp.trace(set.input(i));
            mlp.jacobian_normalized_into(&trace, &mut grad);
            let out = trace.layers.last().unwrap();
            for k in 0..OUTPUT_WIDTH {
                let c = local * OUTPUT_WIDTH + k;
                jt.column_mut(c).copy_from_slice(&grad[k * p..(k + 1) * p]);
                r[c] = set.target(i)[k] - out[k];
            }
        }
        let j = jt.transpose();
        jtj.gemm(1.0, &jt, &j, 1.0);
        jtr.gemv(1.0, &jt, &r, 1.0);
        start = end;
    }
    (jtj, jtr)
}

pub fn train_lm(initial: &Mlp, split: &SplitDataset, opts: &LmOptions) -> Result<TrainOutcome> {
    check_shape(initial)?;
    if split.train.is_empty() {
        return Err(Error::domain("training split is empty"));
    }
    if !(opts.lambda_init > 0.0 && opts.lambda_factor > 1.0 && opts.lambda_max >= opts.lambda_init) {
        return Err(Error::Config(format!("invalid damping schedule {opts:?}")));
    }
    let mut mlp = initial.clone();
    if opts.normalize {
        let train = &split.train;
        mlp.input_norm = Affine::fit(INPUT_WIDTH, (0..train.len()).map(|i| train.inputs(i)));
        mlp.output_norm = Affine::fit(OUTPUT_WIDTH, (0..train.len()).map(|i| train.targets(i)));
    }

    let working_rows: Vec<usize> = if opts.row_budget > 0 && split.train.len() > opts.row_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = rand::seq::index::sample(&mut rng, split.train.len(), opts.row_budget).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..split.train.len()).collect()
    };
    let work = Standardized::new(&split.train, working_rows.into_iter(), &mlp);
    let validation = Standardized::new(&split.validation, 0..split.validation.len(), &mlp);
    let test = Standardized::new(&split.test, 0..split.test.len(), &mlp);
    let has_validation = validation.n > 0;

    let mut params = DVector::from_vec(mlp.params());
    let p = params.len();
    let (mut train_mse, mut train_raw) = work.mse(&mlp);
    let (mut val_mse, mut val_raw) = validation.mse(&mlp);
    let (mut test_mse, mut test_raw) = test.mse(&mlp);
    let mut lambda = opts.lambda_init;

    let record = |iteration, train: (f64, f64), val: (f64, f64), tst: (f64, f64), lambda, accepted| TrainRecord {
        iteration,
        train_mse: train.0,
        validation_mse: val.0,
        test_mse: tst.0,
        train_mse_raw: train.1,
        validation_mse_raw: val.1,
        test_mse_raw: tst.1,
        lambda,
        accepted,
    };
    let mut history = vec![record(0, (train_mse, train_raw), (val_mse, val_raw), (test_mse, test_raw), lambda, true)];

    let score = |train: f64, val: f64| if has_validation { val } else { train };
    let mut best = (score(train_mse, val_mse), params.clone(), 0usize);
    let mut stale = 0usize;
    let mut stop = StopReason::MaxIterations;

    if !train_mse.is_finite() {
        stop = StopReason::NonFinite;
    } else if train_mse <= opts.mse_goal {
        stop = StopReason::MseGoal;
    } else {
        'outer: for iteration in 1..=opts.max_iterations {
            let (jtj, jtr) = normal_equations(&mlp, &work);
            loop {
                let mut a = jtj.clone();
                for d in 0..p {
                    a[(d, d)] += lambda;
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&jtr),
                    None => DVector::from_element(p, f64::NAN),
                };
                let candidate = &params + &step;
                let finite = candidate.iter().all(|v| v.is_finite());
                let (cand_mse, cand_raw) = if finite {
                    mlp.set_params(candidate.as_slice())?;
                    work.mse(&mlp)
                } else {
                    (f64::NAN, f64::NAN)
                };

                if cand_mse.is_finite() && cand_mse < train_mse {
                    params = candidate;
                    (train_mse, train_raw) = (cand_mse, cand_raw);
                    (val_mse, val_raw) = validation.mse(&mlp);
                    (test_mse, test_raw) = test.mse(&mlp);
                    lambda = (lambda / opts.lambda_factor).max(f64::MIN_POSITIVE);
                    history.push(record(
                        iteration,
                        (train_mse, train_raw),
                        (val_mse, val_raw),
                        (test_mse, test_raw),
                        lambda,
                        true,
                    ));
                    let s = score(train_mse, val_mse);
                    if !s.is_finite() {
                        stop = StopReason::NonFinite;
                        break 'outer;
                    }
                    if s < best.0 {
                        best = (s, params.clone(), iteration);
                        stale = 0;
                    } else {
                        stale += 1;
                    }
                    if train_mse <= opts.mse_goal {
                        stop = StopReason::MseGoal;
                        break 'outer;
                    }
                    if has_validation && stale >= opts.patience {
                        stop = StopReason::ValidationPatience;
                        break 'outer;
                    }
                    break;
                }

                mlp.set_params(params.as_slice())?;
                history.push(record(
                    iteration,
                    (
                        if cand_mse.is_finite() { cand_mse } else { f64::MAX },
                        if cand_raw.is_finite() { cand_raw } else { f64::MAX },
                    ),
                    (val_mse, val_raw),
                    (test_mse, test_raw),
                    lambda,
                    false,
                ));
                lambda *= opts.lambda_factor;
                if lambda > opts.lambda_max {
                    stop = StopReason::DampingLimit;
                    break 'outer;
                }
            }
        }
    }

    mlp.set_params(best.1.as_slice())?;
    Ok(TrainOutcome { mlp, history, best_iteration: best.2, stop })
}

/// Training curve as CSV, one row per trial.
pub fn history_csv(history: &[TrainRecord]) -> String {
    let mut out = String::from(
        "iteration,train_mse,validation_mse,test_mse,train_mse_raw,validation_mse_raw,test_mse_raw,lambda,accepted\n",
    );
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.train_mse,
            r.validation_mse,
            r.test_mse,
            r.train_mse_raw,
            r.validation_mse_raw,
            r.test_mse_raw,
            r.lambda,
            u8::from(r.accepted)
        )
        .unwrap();
    }
    out
}

pub fn write_history(path: &Path, history: &[TrainRecord]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}
