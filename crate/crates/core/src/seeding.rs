//! Seed derivation. One master seed fans out into independent streams for
//! track generation, weight init, shuffling, poisoning, and attack schedules
//! so that changing one stage's consumption never perturbs another stage.

/// Derive a child seed from a base seed and a stream tag. splitmix64 finisher
/// over the combined value; stable across platforms.
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags for [`mix_seed`]. Keeping them in one place avoids collisions.
pub mod streams {
    pub const TRACKS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const HOLDOUT: u64 = 4;
    pub const POISON: u64 = 5;
    pub const SCHEDULE: u64 = 6;
    pub const EVAL_TRACKS: u64 = 7;
    pub const SAMPLE: u64 = 8;
}
