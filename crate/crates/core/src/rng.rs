//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, purpose, walker, step)`, so an
//! ensemble produces bit-identical trajectories no matter how walkers are
//! scheduled across threads. Each key opens an independent SplitMix64
//! stream; normal variates come from Box-Muller, which consumes a fixed
//! two uniforms per pair.

use crate::scalar::Scalar;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: bijective avalanche mix of a 64-bit word.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for; keeps init draws and step draws disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init,
    Step,
    Observable,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 0x11,
            Purpose::Step => 0x22,
            Purpose::Observable => 0x33,
        }
    }
}

/// One deterministic stream addressed by `(seed, purpose, walker, step)`.
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64, purpose: Purpose, walker: u64, step: u64) -> Self {
        let mut h = mix(seed ^ purpose.tag().wrapping_mul(GOLDEN));
        h = mix(h ^ walker.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        h = mix(h ^ step.wrapping_mul(0xCA5A_8268_9512_1157 ^ GOLDEN));
        Stream { state: h }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in (0, 1].
    #[inline]
    pub fn next_unit<S: Scalar>(&mut self) -> S {
        S::unit_open_closed(self.next_u64())
    }

    /// Standard normal pair via Box-Muller.
    #[inline]
    pub fn next_normal_pair<S: Scalar>(&mut self) -> (S, S) {
        let u1: S = self.next_unit();
        let u2: S = self.next_unit();
        let r = (-(S::one() + S::one()) * u1.ln()).sqrt();
        let theta = (S::one() + S::one()) * S::PI() * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fills `out` with standard normals, consuming whole pairs.
    pub fn fill_normals<S: Scalar>(&mut self, out: &mut [S]) {
        let mut i = 0;
        while i + 1 < out.len() {
            let (a, b) = self.next_normal_pair();
            out[i] = a;
            out[i + 1] = b;
            i += 2;
        }
        if i < out.len() {
            out[i] = self.next_normal_pair::<S>().0;
        }
    }
}
