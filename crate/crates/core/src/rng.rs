//! Counter-based random number generation.
//!
//! Every draw is a pure function of `(master seed, path, step, agent, slot)`,
//! so ensemble results do not depend on the order paths or steps execute.
//! The mixer chains splitmix64 finalizers over the key components.

use crate::scalar::{real, Real};

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn mix(seed: u64, parts: [u64; 4]) -> u64 {
    let mut z = splitmix64(seed);
    for (i, p) in parts.into_iter().enumerate() {
        // distinct odd multipliers keep (a, b) and (b, a) keys apart
        z = splitmix64(z ^ p.wrapping_mul(ODD[i]));
    }
    z
}

const ODD: [u64; 4] = [
    0x9E37_79B9_7F4A_7C15,
    0xC2B2_AE3D_27D4_EB4F,
    0x1656_67B1_9E37_79F9,
    0x27D4_EB2F_1656_67C5,
];

#[inline]
fn u64_to_unit_open(x: u64) -> f64 {
    // (0, 1]: never zero, so ln() below is safe
    ((x >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Identifies one simulated path of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathKey {
    master_seed: u64,
    path: u64,
}

impl PathKey {
    pub fn new(master_seed: u64, path: u64) -> Self {
        PathKey { master_seed, path }
    }

    pub fn path(&self) -> u64 {
        self.path
    }

    /// Standard normal draw for `(step, agent)`, via Box–Muller.
    pub fn standard_normal(&self, step: u64, agent: u64) -> f64 {
        let u1 = u64_to_unit_open(mix(self.master_seed, [self.path, step, agent, 0]));
        let u2 = u64_to_unit_open(mix(self.master_seed, [self.path, step, agent, 1]));
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// `n` independent Brownian increments over a step of length `h`,
/// i.e. Normal(0, h) draws, one per agent.
pub fn brownian_increments<T: Real>(key: PathKey, step: u64, n: usize, h: T) -> Vec<T> {
    let sqrt_h = h.sqrt();
    (0..n)
        .map(|agent| sqrt_h * real::<T>(key.standard_normal(step, agent as u64)))
        .collect()
}

/// Fill `out` with Brownian increments; allocation-free inner-loop variant.
pub fn fill_brownian_increments<T: Real>(key: PathKey, step: u64, h: T, out: &mut [T]) {
    let sqrt_h = h.sqrt();
    for (agent, slot) in out.iter_mut().enumerate() {
        *slot = sqrt_h * real::<T>(key.standard_normal(step, agent as u64));
    }
}

/// 64-bit FNV-1a, used to fingerprint configurations in manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
