//! Seeded random streams.
//!
//! A run seed is expanded into independent ChaCha8 streams, one per purpose,
//! so that e.g. evaluating more often never shifts the training draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Matrix;

pub type RunRng = ChaCha8Rng;

/// Purpose of a random stream. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Parameter initialization.
    Init = 0,
    /// Real minibatches.
    Data = 1,
    /// Prior draws during training.
    Latent = 2,
    /// Evaluation; re-created from scratch for every evaluation.
    Eval = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
