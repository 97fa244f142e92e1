//! Experiment orchestration: configuration, training, evaluation,
//! streaming and self-verification.

pub mod commands;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod optim;
pub mod train;
pub mod verify;

pub use commands::{cmd_eval, cmd_gen, cmd_stream, cmd_train, cmd_verify, EvalTarget};
pub use config::{ExperimentConfig, OptimizerConfig, OptimizerKind, PathsConfig};
pub use eval::{evaluate, evaluate_model, Model, ModelEval, Predictor};
pub use metrics::{read_metrics, Accuracy, Cell, MetricsRecord, MetricsWriter};
pub use optim::Optimizer;
pub use train::{train, TrainOutcome, Trainer};
pub use verify::{run_verify, SuiteReport, VerifyOptions, VerifyReport};
