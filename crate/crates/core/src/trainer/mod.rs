//! Optimizers, trust-region calibration and the training loop.

pub mod checkpoint;
pub mod config;
pub mod optim;
pub mod run;
pub mod trace;
pub mod trust;

pub use checkpoint::Checkpoint;
pub use config::{MeshConfig, OptimizerConfig, OptimizerKind, RunConfig, TrustConfig};
pub use optim::{Adam, Lbfgs, LbfgsStep};
pub use run::{StepRecord, TrainOutcome, Trainer};
pub use trace::{read_trace, write_trace, TraceRow, TRACE_COLUMNS};
pub use trust::{gradient_spread, SigmaMode, TrustRegion, SIGMA_FLOOR, WIDTH_FLOOR};
