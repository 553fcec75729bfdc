//! Counter-based splittable pseudo-random streams.
//!
//! A stream is identified by `(seed, stream_id)`. Both are hashed into a pair
//! of 64-bit keys, and the `n`-th output is a pure function of the keys and
//! `n`:
//!
//! ```text
//! out(n) = fmix(fmix(n * GOLDEN + k0) ^ k1)
//! ```
//!
//! where `fmix` is the SplitMix64 finalizer. Nothing else is carried between
//! draws, so a stream can be re-created at any position and forking a child
//! never touches the parent. The algorithm is frozen: golden files depend on
//! it.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const FORK_SALT: u64 = 0xA076_1D64_78BD_642F;
const KEY_SALT: u64 = 0x2545_F491_4F6C_DD1D;

#[inline]
fn fmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrngStream {
    seed: u64,
    stream_id: u64,
    k0: u64,
    k1: u64,
    counter: u64,
}

impl PrngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let k0 = fmix(seed ^ fmix(stream_id.wrapping_add(STREAM_SALT)));
        let k1 = fmix(fmix(k0 ^ KEY_SALT).wrapping_add(stream_id.rotate_left(32)));
        Self {
            seed,
            stream_id,
            k0,
            k1,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Child stream determined by this stream's identity and `label`. The
    /// parent's position is neither read nor advanced.
    pub fn fork(&self, label: u64) -> PrngStream {
        let child_id = fmix(self.k1 ^ fmix(label.wrapping_add(FORK_SALT)));
        PrngStream::new(self.seed, child_id)
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let n = self.counter;
        self.counter = self.counter.wrapping_add(1);
        fmix(fmix(n.wrapping_mul(GOLDEN).wrapping_add(self.k0)) ^ self.k1)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn next_open_unit(&mut self) -> f64 {
        ((self.next_word() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-and-reject.
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_word() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

impl RngCore for PrngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(s: &mut PrngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_word()).collect()
    }

    #[test]
    fn same_identity_same_sequence() {
        let a = draws(&mut PrngStream::new(7, 0), 32);
        let b = draws(&mut PrngStream::new(7, 0), 32);
        assert_eq!(a, b);
    }

    #[test]
    fn fork_is_deterministic() {
        let root = PrngStream::new(7, 0);
        let a = draws(&mut root.fork(0), 16);
        let b = draws(&mut root.fork(0), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn sibling_forks_differ() {
        let root = PrngStream::new(7, 0);
        let a = draws(&mut root.fork(0), 16);
        let b = draws(&mut root.fork(1), 16);
        for (x, y) in a.iter().zip(&b) {
            assert_ne!(x, y);
        }
    }

    #[test]
    fn fork_does_not_advance_root() {
        let mut plain = PrngStream::new(7, 0);
        let mut forked = PrngStream::new(7, 0);
        plain.next_word();
        forked.next_word();
        let _child = forked.fork(3);
        assert_eq!(draws(&mut plain, 16), draws(&mut forked, 16));
    }

    #[test]
    fn fork_ignores_parent_position() {
        let fresh = PrngStream::new(11, 2);
        let mut advanced = PrngStream::new(11, 2);
        draws(&mut advanced, 5);
        assert_eq!(
            draws(&mut fresh.fork(9), 8),
            draws(&mut advanced.fork(9), 8)
        );
    }

    // Frozen outputs: changing the generator breaks every golden file.
    #[test]
    fn frozen_first_words() {
        let mut s = PrngStream::new(0, 0);
        let got = draws(&mut s, 2);
        let mut again = PrngStream::new(0, 0);
        assert_eq!(got, draws(&mut again, 2));
        assert_eq!(got, FROZEN_SEED0_STREAM0.to_vec());
    }

    const FROZEN_SEED0_STREAM0: [u64; 2] = [216281938461884618, 13214515274290817645];

    #[test]
    fn early_outputs_are_distinct_across_streams() {
        let mut seen = std::collections::HashSet::new();
        for id in 0..1000 {
            let mut s = PrngStream::new(0, id);
            for _ in 0..4 {
                assert!(seen.insert(s.next_word()));
            }
        }
    }

    #[test]
    fn below_stays_in_range_and_covers() {
        let mut s = PrngStream::new(3, 4);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            let v = s.below(7) as usize;
            seen[v] += 1;
        }
        for count in seen {
            assert!((800..1200).contains(&count), "count {count}");
        }
    }

    #[test]
    fn unit_draws_are_in_range() {
        let mut s = PrngStream::new(5, 5);
        for _ in 0..10_000 {
            let u = s.next_unit();
            assert!((0.0..1.0).contains(&u));
            let o = s.next_open_unit();
            assert!(o > 0.0 && o < 1.0);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = PrngStream::new(1, 1);
        let mut v: Vec<usize> = (0..50).collect();
        s.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
