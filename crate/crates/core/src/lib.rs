//! Robust classification on long-tailed, label-noisy data with a meta-learned
//! dynamic loss.
//!
//! The loss combines a label corrector, which mixes each given label with the
//! classifier's prediction according to the sample's loss-rank bin within its
//! class, and a margin generator, which adds a learned per-class offset to the
//! logits. Both are trained by differentiating a clean, balanced meta loss
//! through a virtual SGD step of the classifier.

pub mod classifier;
pub mod data;
pub mod dynamic;
pub mod error;
pub mod nn;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod trainer;

pub use classifier::Classifier;
pub use data::{LabeledDataset, Provenance};
pub use dynamic::{LabelCorrector, MarginGenerator, RankAssignment};
pub use error::{Error, Result};
pub use numeric::{Graph, Matrix, Var};
pub use sampling::EpochSplit;
pub use trainer::{Baseline, SamplerKind, TrainConfig, TrainOutcome, TrainState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
