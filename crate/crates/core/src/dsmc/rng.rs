//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, step, substep, group, purpose)`.
//! The first three form the ChaCha key and the last two the stream id, so a
//! group's draws never depend on which worker processes it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; part of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 0,
    Collision = 1,
    Switch = 2,
    Homogeneous = 3,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of one (sub)step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepKey(u64);

impl StepKey {
    pub fn new(seed: u64, step: u64, substep: u64) -> Self {
        StepKey(splitmix64(
            splitmix64(seed)
                ^ splitmix64(step).rotate_left(17)
                ^ splitmix64(substep).rotate_left(41),
        ))
    }

    /// Independent generator for `group` (e.g. a `(lane, cell)` pair).
    pub fn stream(self, group: u64, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream((group << 2) | purpose as u64);
        rng
    }
}
