//! Deterministic randomness, dense vector arithmetic and the training-time
//! distributions that drive the event engine.

mod dist;
mod rng;
mod vec;

pub use dist::{DurationDist, DurationKind};
pub use rng::PrngStream;
pub use vec::DenseVec;

/// `y + alpha * x` as a fresh vector.
pub fn vec_axpy(alpha: f64, x: &DenseVec, y: &DenseVec) -> crate::Result<DenseVec> {
    DenseVec::axpy(alpha, x, y)
}

pub fn sample_duration(dist: &DurationDist, rng: &mut PrngStream) -> f64 {
    dist.sample(rng)
}

pub fn fork_stream(root: &PrngStream, label: u64) -> PrngStream {
    root.fork(label)
}
