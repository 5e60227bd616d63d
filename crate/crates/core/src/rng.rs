//! Counter-based random streams.
//!
//! Every random draw in a run is taken from a [`Substream`] keyed by
//! `(seed, step, phase, index)`. Nothing carries generator state from one
//! draw site to the next, so the draws a cell sees do not depend on how many
//! worker threads touched the lattice or in which order. The whole generator
//! state of a run is the seed plus the step counter.

use rand::Rng;
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Draw sites. The discriminant is part of the stream key, so values must
/// never be reused for a different purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Phase {
    InitSelect = 1,
    InitGenome = 2,
    Designate = 3,
    Decode = 4,
    CopyMutation = 5,
    ReawakenSelect = 6,
    ReawakenGenome = 7,
    ParticleInit = 8,
    ParticleIntent = 9,
    ParticleMutation = 10,
}

/// Seed of a run. Combined with the world's step counter this is the full
/// generator state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    #[inline]
    pub fn stream(&self, step: u64, phase: Phase, index: u64) -> Substream {
        Substream::new(self.seed, step, phase, index)
    }
}

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 sequence started from a hashed key.
#[derive(Clone, Debug)]
pub struct Substream {
    state: u64,
}

impl Substream {
    pub fn new(seed: u64, step: u64, phase: Phase, index: u64) -> Self {
        let mut k = mix64(seed ^ 0x5349_4D4D_5345_4544);
        k = mix64(k ^ step.wrapping_mul(GOLDEN));
        k = mix64(k ^ ((phase as u64) << 56) ^ index);
        Self { state: k }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        self.random_range(0..n)
    }

    /// `Normal(0, sigma^2)` sample converted to the state scalar.
    #[inline]
    pub fn normal<S: Scalar>(&mut self, sigma: f64) -> S {
        let z: f64 = StandardNormal.sample(self);
        S::of(sigma * z)
    }

    /// Index sampled from the categorical distribution `softmax(logits)`.
    pub fn softmax_choice<S: Scalar>(&mut self, logits: &[S]) -> usize {
        let max = logits
            .iter()
            .fold(f64::NEG_INFINITY, |acc, v| acc.max(v.wide()));
        let mut weights = [0.0f64; 8];
        let weights = &mut weights[..logits.len()];
        let mut total = 0.0;
        for (w, l) in weights.iter_mut().zip(logits) {
            *w = (l.wide() - max).exp();
            total += *w;
        }
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        // u landed on the rounding slack past the last bucket
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

impl RngCore for Substream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}

/// Argmax with ties going to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Picks `k` distinct entries of `pool` uniformly (partial Fisher-Yates) and
/// returns them sorted ascending.
pub fn sample_without_replacement(
    pool: &mut [usize],
    k: usize,
    rng: &mut Substream,
) -> Vec<usize> {
    let k = k.min(pool.len());
    for i in 0..k {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let r = RngState::new(7);
        let a: Vec<u64> = {
            let mut s = r.stream(3, Phase::Decode, 11);
            (0..8).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = r.stream(3, Phase::Decode, 11);
            (0..8).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn keys_are_separated() {
        let r = RngState::new(7);
        let first = |step, phase, idx| r.stream(step, phase, idx).next_u64();
        let base = first(3, Phase::Decode, 11);
        assert_ne!(base, first(4, Phase::Decode, 11));
        assert_ne!(base, first(3, Phase::CopyMutation, 11));
        assert_ne!(base, first(3, Phase::Decode, 12));
        assert_ne!(base, RngState::new(8).stream(3, Phase::Decode, 11).next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = RngState::new(1).stream(0, Phase::Decode, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn saturated_softmax_is_deterministic() {
        let mut s = RngState::new(1).stream(0, Phase::Decode, 0);
        let logits = [-1e6f64, 1e6, -1e6, -1e6, -1e6];
        for _ in 0..1000 {
            assert_eq!(s.softmax_choice(&logits), 1);
        }
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.0f64, 1.0, 1.0]), 1);
        assert_eq!(argmax(&[0.0f64; 5]), 0);
    }

    #[test]
    fn sampling_without_replacement_is_distinct() {
        let mut pool: Vec<usize> = (0..100).collect();
        let mut s = RngState::new(3).stream(0, Phase::ReawakenSelect, 0);
        let chosen = sample_without_replacement(&mut pool, 40, &mut s);
        assert_eq!(chosen.len(), 40);
        assert!(chosen.windows(2).all(|w| w[0] < w[1]));
    }
}
