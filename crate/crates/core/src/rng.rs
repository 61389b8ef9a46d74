//! Seeded generator streams. Every stochastic stage draws from its own
//! ChaCha stream so that changing one stage's draws never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StageRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Noise = 1,
    Schedule = 2,
    AttackNoise = 3,
    Init = 4,
    Shuffle = 5,
    Dropout = 6,
    Campaign = 7,
    Estimation = 8,
    TestNoise = 9,
    TestSchedule = 10,
}

/// Generator for `stage` under the run seed `seed`.
pub fn stream(seed: u64, stage: Stage) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Generator for a numbered sub-task of a stage (one per bus, per grid point, ...).
pub fn substream(seed: u64, stage: Stage, index: u64) -> StageRng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(stage as u64);
    rng
}

/// One draw from N(0, sigma²). Zero sigma returns exactly zero without
/// consuming randomness.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}
