//! Dense torque estimator and its Levenberg–Marquardt trainer.

mod dataset;
mod lm;
mod mlp;

pub use dataset::{header, split_dataset, Dataset, Row, SplitDataset, INPUT_WIDTH, OUTPUT_WIDTH, ROW_WIDTH};
pub use lm::{history_csv, train_lm, write_history, LmOptions, StopReason, TrainOutcome, TrainRecord};
pub use mlp::{mlp_init, Activation, Affine, Layer, Mlp, DEFAULT_SIZES};
