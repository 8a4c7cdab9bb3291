//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through an [`RngStream`] identified by
//! `(seed, stream_id)`. Parallel consumers never share a stream; they call
//! [`RngStream::derive`] to obtain an independent child keyed by a tag.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Well-known tags for derived streams, so call sites agree on keys.
pub mod tags {
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const DAE: u64 = 0x0044_4145;
    pub const CLASSIFIER: u64 = 0x0043_4c46;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SYNTH: u64 = 0x5359_4e54;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `tag`. Depends only on `(seed, stream_id, tag)`,
    /// never on how many values have been drawn from `self`.
    pub fn derive(&self, tag: u64) -> RngStream {
        let id =
            splitmix64(splitmix64(self.stream_id) ^ tag.rotate_left(17) ^ 0xa076_1d64_78bd_642f);
        RngStream::new(self.seed, id)
    }

    /// Chained derivation, e.g. `derive_path(&[tags::DAE, class, fold])`.
    pub fn derive_path(&self, path: &[u64]) -> RngStream {
        path.iter()
            .fold(self.clone_fresh(), |rng, &tag| rng.derive(tag))
    }

    fn clone_fresh(&self) -> RngStream {
        RngStream::new(self.seed, self.stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle(&mut order);
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn derive_ignores_consumption() {
        let parent = RngStream::new(3, 9);
        let mut used = parent.clone();
        used.next_u64();
        used.next_u64();
        let mut c1 = parent.derive(5);
        let mut c2 = used.derive(5);
        assert_eq!(c1.next_u64(), c2.next_u64());
        assert_ne!(parent.derive(5).stream_id(), parent.derive(6).stream_id());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(1, 1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut r = RngStream::new(11, 0);
        let mut p = r.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
