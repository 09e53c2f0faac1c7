//! Decomposed adversarial learned inference on small dense problems.
//!
//! A generator `G: z -> x`, an encoder `E: x -> q(z|x)` and a discriminator
//! `D` are trained jointly. `D` plays an adversarial game against `G`, while
//! `G` and `E` together minimize the game loss plus `λ` times the negative
//! log-likelihood of each prior draw `z` under `q(z | G(z))`.
//!
//! Everything runs on a small define-by-run autodiff tape ([`autodiff`]) with
//! `f64` dense matrices, so training is deterministic for a fixed seed.

pub mod autodiff;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synthdata;

pub use autodiff::{Activation, Matrix, NodeId, Tape};
pub use error::{Error, Result};
pub use metrics::{evaluate, evaluate_full, EvalSettings, Evaluation, Losses, MetricsRecord};
pub use model::{
    prior_log_constant, train_step, ArchConfig, GaussianPosterior, ModelBundle, ModelConfig,
    Network, Optimizers, StepReport, TrainSettings, VariantKind,
};
pub use nn::{MlpSpec, ParamStore};
pub use optim::{AdamConfig, AdamState, Decay};
pub use synthdata::{make_grid, GridMixture, MixtureConfig};
