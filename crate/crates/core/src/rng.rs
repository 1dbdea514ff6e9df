//! Deterministic, stream-indexed Gaussian noise.
//!
//! Every random draw in the crate comes from a [`NoiseStream`] identified by
//! `(seed, stream_id)`. A stream is ChaCha8 keyed by the seed (expanded via
//! `SeedableRng::seed_from_u64`) with the 64-bit ChaCha stream (nonce) set to
//! `stream_id`. Standard normals are produced by the ziggurat sampler of
//! `rand_distr::StandardNormal`.
//!
//! Stream ids are derived from role tags with [`stream_id`]: a SplitMix64
//! chain over `(role, index, step)`. Particle `i` at step `k` therefore always
//! reads the same noise no matter how many other particles exist or in which
//! order they are updated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// What a block of noise is used for. The discriminant is part of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum NoiseRole {
    /// `ζ^{x,i}_k` of the particle update.
    ParticleX = 1,
    /// `ζ^{y,i}_k` of the particle update.
    ParticleY = 2,
    /// Initial draw of `x^i_0`.
    InitX = 3,
    /// Initial draw of `y^i_0`.
    InitY = 4,
    /// Initial draws of the second system of a coupled run.
    CoupledInitX = 5,
    CoupledInitY = 6,
    /// Random directions for sliced Wasserstein estimates.
    Projection = 7,
    /// Random test points for the property suites.
    Probe = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for `(role, index, step)`.
pub fn stream_id(role: NoiseRole, index: u64, step: u64) -> u64 {
    let h = splitmix64(role as u64);
    let h = splitmix64(h ^ index);
    splitmix64(h ^ step.rotate_left(32))
}

/// A reproducible sequence of standard normal variates.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    drawn: u64,
}

/// Stream positioned at draw index 0.
pub fn create_stream(seed: u64, stream_id: u64) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    NoiseStream {
        seed,
        stream_id,
        rng,
        drawn: 0,
    }
}

impl NoiseStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of normal variates drawn so far.
    pub fn draws(&self) -> u64 {
        self.drawn
    }

    /// Rewind to draw index 0.
    pub fn reset(&mut self) {
        *self = create_stream(self.seed, self.stream_id);
    }

    pub fn next_normal(&mut self) -> f64 {
        self.drawn += 1;
        StandardNormal.sample(&mut self.rng)
    }

    /// Fills `out` with consecutive draws.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = self.next_normal();
        }
    }

    /// `n` i.i.d. standard normals; `n` must be positive.
    pub fn standard_normal_block(&mut self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::param("n", "block length must be at least 1"));
        }
        let mut out = vec![0.0; n];
        self.fill_standard_normal(&mut out);
        Ok(out)
    }

    /// Uniform variate in `[0, 1)`, used for random probe construction.
    pub fn next_uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.random::<f64>()
    }
}

/// Source of the per-particle Gaussian increments of the particle algorithm.
pub trait NoiseSource {
    /// Fill `out` (length `d`) with the noise for `(role, particle, step)`.
    fn fill(&self, role: NoiseRole, particle: usize, step: u64, out: &mut [f64]);
}

/// The production noise source: one keyed stream per `(role, particle, step)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyedNoise {
    pub seed: u64,
}

impl KeyedNoise {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, role: NoiseRole, index: u64, step: u64) -> NoiseStream {
        create_stream(self.seed, stream_id(role, index, step))
    }
}

impl NoiseSource for KeyedNoise {
    fn fill(&self, role: NoiseRole, particle: usize, step: u64, out: &mut [f64]) {
        self.stream(role, particle as u64, step)
            .fill_standard_normal(out);
    }
}

impl<T: NoiseSource + ?Sized> NoiseSource for &T {
    fn fill(&self, role: NoiseRole, particle: usize, step: u64, out: &mut [f64]) {
        (**self).fill(role, particle, step, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_output() {
        let mut a = create_stream(42, 0);
        let mut b = create_stream(42, 0);
        assert_eq!(
            a.standard_normal_block(8).unwrap(),
            b.standard_normal_block(8).unwrap()
        );
    }

    #[test]
    fn streams_are_separated() {
        let mut a = create_stream(42, 0);
        let mut b = create_stream(42, 1);
        assert_ne!(a.next_normal(), b.next_normal());
        let mut c = create_stream(43, 0);
        assert_ne!(create_stream(42, 0).next_normal(), c.next_normal());
    }

    #[test]
    fn zero_seed_is_valid() {
        let mut s = create_stream(0, 0);
        let v = s.standard_normal_block(4).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(v.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn reset_replays() {
        let mut s = create_stream(7, 3);
        let first = s.standard_normal_block(5).unwrap();
        assert_eq!(s.draws(), 5);
        s.reset();
        assert_eq!(s.draws(), 0);
        assert_eq!(s.standard_normal_block(5).unwrap(), first);
    }

    #[test]
    fn blocks_are_counter_consistent() {
        let mut s = create_stream(9, 11);
        let mut split = s.standard_normal_block(2).unwrap();
        split.extend(s.standard_normal_block(2).unwrap());
        let mut t = create_stream(9, 11);
        assert_eq!(split, t.standard_normal_block(4).unwrap());
    }

    #[test]
    fn empty_block_is_rejected() {
        assert!(create_stream(1, 1).standard_normal_block(0).is_err());
    }

    #[test]
    fn million_draw_moments() {
        let mut s = create_stream(2024, stream_id(NoiseRole::Probe, 0, 0));
        let n = 1_000_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn stream_ids_differ_by_role_index_step() {
        let base = stream_id(NoiseRole::ParticleX, 3, 10);
        assert_ne!(base, stream_id(NoiseRole::ParticleY, 3, 10));
        assert_ne!(base, stream_id(NoiseRole::ParticleX, 4, 10));
        assert_ne!(base, stream_id(NoiseRole::ParticleX, 3, 11));
    }
}
