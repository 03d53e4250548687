//! Class-imbalance-aware semi-supervised learning on a small reverse-mode
//! autodiff core.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

pub mod augment;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod prob;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use autodiff::{Shape, Tape, Var};
pub use error::{Error, Result};
pub use losses::{Blending, ClassFrequencyTable, ConsistencyConfig, ConsistencyKind, SupervisedLoss};
pub use metrics::MetricsReport;
pub use model::Mlp;
pub use prob::ProbVector;
pub use scalar::Scalar;
pub use trainer::{train, TrainConfig, TrainData, TrainOutcome};

pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type Mlp64 = Mlp<f64>;
pub type Mlp32 = Mlp<f32>;
pub type FrequencyTable64 = ClassFrequencyTable<f64>;
