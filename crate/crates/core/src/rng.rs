//! Reproducible per-path random streams.
//!
//! Every path draws from its own ChaCha8 stream keyed by the experiment seed
//! and a purpose tag, with the path index selecting the ChaCha stream word.
//! Paths can therefore be generated in any order, on any number of workers,
//! and still be bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Handle for the random numbers of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub path: u64,
}

impl RngStream {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    /// 64-bit identifier recorded on generated paths.
    pub fn id(&self) -> u64 {
        mix64(self.seed ^ mix64(self.path))
    }

    /// Independent generator for one use (`purpose`) within this path.
    pub fn rng(&self, purpose: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let words = [
            mix64(self.seed),
            mix64(self.seed ^ 0x5851_f42d_4c95_7f2d),
            mix64(purpose),
            mix64(purpose.wrapping_add(0x1405_7b7e_f767_814f)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }

    /// Stream of a sub-component (matrix entry, paired ensemble member).
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream {
            seed: mix64(self.seed ^ mix64(tag.wrapping_add(0xa076_1d64_78bd_642f))),
            path: self.path,
        }
    }
}

/// Uniform on the open interval (0, 1).
pub fn open01<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
