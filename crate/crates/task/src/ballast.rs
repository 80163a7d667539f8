//! Memory ballast: a deliberately allocated and dirtied buffer that emulates
//! a stateful, memory-hungry task.
//!
//! The ballast is written once at startup (every page dirtied with
//! pseudo-random values) and read back once at finalization. Between those
//! two touches it sits outside the working set, so under memory pressure the
//! OS is free to page it out while the task streams its input.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Ballast {
    bytes: Vec<u8>,
    checksum: u64,
}

impl Ballast {
    /// Allocates `size` bytes, fills them with seeded pseudo-random data and
    /// records a checksum for later verification.
    pub fn allocate(size: u64, seed: u64) -> Ballast {
        let mut bytes = vec![0u8; size as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fill in 16 MiB strides; fill_bytes dirties every page it touches.
        for chunk in bytes.chunks_mut(16 << 20) {
            rng.fill_bytes(chunk);
        }
        let checksum = checksum(&bytes);
        Ballast { bytes, checksum }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Re-reads the whole buffer (forcing any paged-out pages back in) and
    /// compares against the startup checksum.
    pub fn verify(&self) -> bool {
        checksum(&self.bytes) == self.checksum
    }
}

fn checksum(data: &[u8]) -> u64 {
    // FNV-1a over 8-byte words; the tail bytes go through the byte loop.
    let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
    let mut chunks = data.chunks_exact(8);
    for w in &mut chunks {
        acc ^= u64::from_le_bytes(w.try_into().unwrap());
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &b in chunks.remainder() {
        acc ^= b as u64;
        acc = acc.wrapping_mul(0x0000_0100_0000_01b3);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_passes_on_untouched_ballast() {
        let b = Ballast::allocate(1 << 20, 42);
        assert_eq!(b.len(), 1 << 20);
        assert!(b.verify());
    }

    #[test]
    fn checksum_detects_corruption() {
        let mut b = Ballast::allocate(4096, 42);
        b.bytes[1234] ^= 0xff;
        assert!(!b.verify());
    }

    #[test]
    fn zero_ballast_is_fine() {
        let b = Ballast::allocate(0, 0);
        assert!(b.is_empty());
        assert!(b.verify());
    }
}
