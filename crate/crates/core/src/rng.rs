//! Seeded, stream-addressable randomness.
//!
//! Every random decision in the crate is drawn from a [`RngStream`]: a
//! `(seed, stream_id)` pair backed by ChaCha8. Tasks that may run in any order
//! each get their own stream, derived from a parent with [`RngStream::derive`],
//! so results never depend on scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A child stream identified by `key`. Distinct keys give distinct streams;
    /// the mapping is a pure function of `(self, key)`.
    pub fn derive(&self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(key.wrapping_add(0x632b_e59b_d9b4_e019))),
        }
    }

    /// Child stream keyed by a sequence of integers (e.g. a sorted index set).
    pub fn derive_slice(&self, keys: &[usize]) -> Self {
        let mut h = 0xcbf2_9ce4_8422_2325_u64 ^ keys.len() as u64;
        for &k in keys {
            h = splitmix64(h ^ k as u64);
        }
        self.derive(h)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform index in `0..n`. Draws through `u64` so the sequence does not
/// depend on the platform's pointer width.
pub(crate) fn uniform_index<R: Rng>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.gen_range(0..n as u64) as usize
}

/// Uniformly random permutation of `0..n` (Fisher-Yates).
pub(crate) fn permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_index(rng, i + 1);
        perm.swap(i, j);
    }
    perm
}

/// `k` distinct indices from `0..n`, returned in increasing order.
pub(crate) fn sample_without_replacement<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_draws() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, 3).rng();
            (0..16).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, 3).rng();
            (0..16).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
        let mut r = RngStream::new(7, 4).rng();
        let c: Vec<u64> = (0..16).map(|_| r.gen()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn derived_streams_differ() {
        let root = RngStream::new(1, 0);
        assert_ne!(root.derive(0), root.derive(1));
        assert_ne!(root.derive_slice(&[0, 1]), root.derive_slice(&[1, 0]));
        assert_ne!(root.derive_slice(&[0]), root.derive_slice(&[0, 0]));
        assert_eq!(root.derive(5), root.derive(5));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut rng = RngStream::new(11, 0).rng();
        let mut p = permutation(&mut rng, 50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn subsample_is_distinct_and_sorted() {
        let mut rng = RngStream::new(2, 9).rng();
        let s = sample_without_replacement(&mut rng, 100, 40);
        assert_eq!(s.len(), 40);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|&i| i < 100));
    }
}
