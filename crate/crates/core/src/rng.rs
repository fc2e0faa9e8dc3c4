//! Counter-based random streams.
//!
//! Every consumer of randomness (a Langevin chain, a bootstrap resample, a
//! bisection step) gets its own ChaCha stream keyed by `(master seed, domain,
//! index)`. ChaCha is a counter-mode generator, so the draws of one stream
//! never depend on how many other streams exist or in which order, or on
//! which thread, they are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct domains never share key material.
pub mod domain {
    pub const CHAIN: u64 = 0x01;
    pub const BOOTSTRAP: u64 = 0x02;
    pub const KS_BOOTSTRAP: u64 = 0x03;
    pub const SEARCH: u64 = 0x04;
    pub const LINEARIZATION: u64 = 0x05;
    pub const SYNTHESIS: u64 = 0x06;
    pub const SYSTEM: u64 = 0x07;
    pub const ORACLE: u64 = 0x08;
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed; used to namespace whole runs (e.g. one per bisection step).
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    let mut s = master ^ domain.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let a = splitmix64(&mut s);
    let mut t = a ^ index.wrapping_mul(0x8cb9_2ba7_2f3d_8dd7);
    splitmix64(&mut t)
}

/// Independent stream for `(master, domain, index)`.
pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut s = master ^ domain.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Stream index for chain `chain` of block `block`.
pub fn chain_index(block: usize, chain: usize) -> u64 {
    ((block as u64) << 32) | (chain as u64 & 0xffff_ffff)
}
