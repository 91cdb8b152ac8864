//! Counter-based random streams keyed by `(seed, chain_id)`.
//!
//! Each stream is a ChaCha8 keystream: the seed fixes the key, the chain id
//! selects the 64-bit stream nonce and the block counter advances with every
//! draw. Two streams with the same key never share state, so Monte Carlo
//! batches can be split across threads by chain id and still reproduce the
//! serial result bit for bit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    chain_id: u64,
    inner: ChaCha8Rng,
}

/// Opens the stream for `(seed, chain_id)` at counter zero.
pub fn substream(seed: u64, chain_id: u64) -> RngStream {
    RngStream::new(seed, chain_id)
}

impl RngStream {
    pub fn new(seed: u64, chain_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(chain_id);
        Self {
            seed,
            chain_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain_id(&self) -> u64 {
        self.chain_id
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.standard_normal()).collect()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer on `lo..=hi`.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
