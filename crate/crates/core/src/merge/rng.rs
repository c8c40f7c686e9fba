use sha2::{Digest, Sha256};

use crate::store::Role;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based Bernoulli drop mask for one tensor.
///
/// The draw for element `i` is the `i`-th output of a SplitMix64 stream
/// whose key is derived from `(seed, stream, role, tensor)`, so a mask can
/// be evaluated in any order, in parallel, or after a restart, and always
/// yields the same bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropMask {
    key: u64,
    drop_rate: f64,
}

impl DropMask {
    pub fn new(seed: u64, stream: &str, role: Role, tensor: &str, drop_rate: f64) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(stream.as_bytes());
        h.update([0u8]);
        h.update(role.as_str().as_bytes());
        h.update([0u8]);
        h.update(tensor.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 8];
        key.copy_from_slice(&digest[..8]);
        DropMask {
            key: u64::from_le_bytes(key),
            drop_rate,
        }
    }

    pub fn drop_rate(&self) -> f64 {
        self.drop_rate
    }

    /// Raw 64-bit draw for element `i`.
    pub fn draw(&self, i: usize) -> u64 {
        mix64(
            self.key
                .wrapping_add((i as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform draw in [0, 1) for element `i`, 53-bit resolution.
    pub fn uniform(&self, i: usize) -> f64 {
        (self.draw(i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// True when element `i` survives.
    pub fn keeps(&self, i: usize) -> bool {
        self.uniform(i) >= self.drop_rate
    }
}
