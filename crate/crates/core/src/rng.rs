//! Per-path Gaussian streams.
//!
//! Every path draws from its own ChaCha8 stream selected by
//! `(seed, path_index)`, so a path's noise does not depend on which thread
//! runs it or on how many other paths exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct PathNoise {
    rng: ChaCha8Rng,
}

impl PathNoise {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng }
    }

    /// A standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Brownian increments over steps of length `dt`.
    pub fn increments(mut self, dt: f64) -> impl Iterator<Item = f64> {
        let sd = dt.sqrt();
        std::iter::repeat_with(move || sd * self.normal())
    }
}
