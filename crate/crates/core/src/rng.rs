//! Seeded Gaussian streams.
//!
//! Every random quantity is drawn from a ChaCha20 stream identified by a
//! `(seed, stream)` pair. ChaCha is counter based, so distinct stream ids give
//! independent sequences and any member can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Matrix, Vector};

/// Stream identifiers. Member streams are offset by the member index.
pub mod stream {
    pub const TRUTH: u64 = 1;
    pub const CONTROL_OBS: u64 = 2;
    pub const CONTROL_BACKGROUND: u64 = 3;
    pub const SKETCH: u64 = 4;
    pub const LANCZOS: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const MEMBER_OBS_BASE: u64 = 1 << 32;
    pub const MEMBER_BACKGROUND_BASE: u64 = 2 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_vector(seed: u64, stream: u64, len: usize) -> Vector {
    let mut rng = stream_rng(seed, stream);
    Vector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)))
}

/// Column-major fill, so column `j` is the `j`-th block of `rows` draws.
pub fn gaussian_matrix(seed: u64, stream: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = stream_rng(seed, stream);
    Matrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)),
    )
}
