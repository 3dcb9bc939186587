//! Seed splitting. One 64-bit seed expands into independent ChaCha8 streams
//! addressed by `(role, index)`, so the result of a chain never depends on
//! which thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Main = 0,
    Replica = 1,
    DualSampler = 2,
    Heat = 3,
}

pub const STREAM_RULE: &str =
    "ChaCha8Rng::seed_from_u64(seed) with set_stream(role << 32 | index); roles: main=0, replica=1, dual-sampler=2, heat=3";

pub fn stream_id(role: StreamRole, index: u32) -> u64 {
    ((role as u64) << 32) | index as u64
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
