//! Two-stage collectible card game workbench: rules engine, observation encoding, procedural
//! card pools, agents, a fixed-opponent environment, and the behaviour cloning and PPO pipelines
//! that approximate a best response to a target agent.

pub mod agents;
pub mod bc;
pub mod cardgen;
pub mod dataset;
pub mod encoding;
pub mod engine;
pub mod env;
pub mod eval;
pub mod learn;
pub mod par;
pub mod rl;

/// Mixes a base seed with a stream tag and an index into an independent 64-bit seed
/// (SplitMix64 finalizer applied twice).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(base ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ index)
}
