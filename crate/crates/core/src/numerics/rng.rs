//! Counter-based deterministic random streams.
//!
//! Every stream is identified by a (name, seed) pair; the n-th draw is a pure
//! function of (name, seed, n). This makes any draw reproducible from its
//! coordinates alone, which is what lets perturbation directions be replayed
//! from a stored record instead of materialized history. Output is identical
//! across platforms: all arithmetic is on `u64`/`f64` with no
//! platform-dependent paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Vector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford mix13). Bijective on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream key from a name and a seed. FNV-1a over the name bytes,
/// folded into the seed through two mix rounds so that streams with related
/// names or seeds do not share prefixes.
fn derive_key(name: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(mix(seed ^ GOLDEN).wrapping_add(h))
}

/// A named, seedable, counter-based random stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngStream {
    name: String,
    seed: u64,
    counter: u64,
    #[serde(skip, default)]
    key: Option<u64>,
}

/// Equality over the semantic state only; the cached key is derived from
/// (name, seed) and may or may not be populated yet.
impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.seed == other.seed && self.counter == other.counter
    }
}

impl Eq for RngStream {}

impl RngStream {
    pub fn new(name: &str, seed: u64) -> Self {
        Self::at(name, seed, 0)
    }

    /// Reconstruct a stream at an explicit counter position.
    pub fn at(name: &str, seed: u64, counter: u64) -> Self {
        let key = derive_key(name, seed);
        Self {
            name: name.to_string(),
            seed,
            counter,
            key: Some(key),
        }
    }

    /// Derive an independent child stream. The child's draws never collide
    /// with the parent's: its key is derived from a distinct name.
    pub fn substream(&self, suffix: &str) -> RngStream {
        RngStream::new(&format!("{}/{}", self.name, suffix), self.seed)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    fn key(&mut self) -> u64 {
        match self.key {
            Some(k) => k,
            None => {
                // Deserialized streams carry no cached key; rebuild it.
                let k = derive_key(&self.name, self.seed);
                self.key = Some(k);
                k
            }
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let key = self.key();
        let v = mix(key ^ mix(self.counter.wrapping_mul(GOLDEN).wrapping_add(key)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1]; safe as a logarithm argument.
    #[inline]
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A single +1/-1 draw, uniform.
    #[inline]
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// A single standard-normal draw via Box-Muller. Consumes two counter
    /// positions.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform draw in [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is below 2^-50 for any n this crate uses.
        (self.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Vector of independent uniform +1/-1 entries.
pub fn rademacher(dim: usize, stream: &mut RngStream) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidDimension {
            context: "rademacher",
            got: 0,
        });
    }
    Ok(Vector::from_vec(
        (0..dim).map(|_| stream.next_sign()).collect(),
    ))
}

/// Vector of independent standard-normal entries.
pub fn gaussian(dim: usize, stream: &mut RngStream) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidDimension {
            context: "gaussian",
            got: 0,
        });
    }
    Ok(Vector::from_vec(
        (0..dim).map(|_| stream.next_gaussian()).collect(),
    ))
}
