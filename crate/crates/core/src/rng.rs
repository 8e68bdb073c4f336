//! Counter-keyed normal draws: every sample row is a pure function of
//! `(seed, domain, index)`, so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Key for one family of draws (one seed, one purpose).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: u64) -> Self {
        Self { seed, domain }
    }

    fn generator(&self, index: u64, attempt: u32) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.domain.to_le_bytes());
        key[16..20].copy_from_slice(&attempt.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// `len` i.i.d. standard normals for row `index`.
    pub fn normals(&self, index: u64, len: usize) -> Vec<f64> {
        self.normals_attempt(index, len, 0)
    }

    /// Redraw of row `index`; attempt 0 coincides with [`StreamKey::normals`].
    pub fn normals_attempt(&self, index: u64, len: usize, attempt: u32) -> Vec<f64> {
        let mut rng = self.generator(index, attempt);
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}
