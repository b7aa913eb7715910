//! Keyed random streams.
//!
//! Every random draw in training is taken from a stream keyed by a tuple such
//! as `(seed, epoch, frame, atom)`, so results do not depend on evaluation
//! order and a run can be resumed from its step counter alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg3::Vec3;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Corruption = 3,
    Noise = 4,
    Langevin = 5,
    Probe = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit seed.
pub fn mix_key(seed: u64, purpose: Purpose, parts: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(purpose as u64));
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, purpose: Purpose, parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix_key(seed, purpose, parts))
}

pub fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}
