use alloc::vec::Vec;

use num_bigint::BigUint;

/// Bits needed per mode (`⌈log2 I_n⌉`, zero for unit-length modes) and in
/// total.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBudget {
    per_mode: Vec<u32>,
}

impl BitBudget {
    pub fn from_dims(dims: &[usize]) -> Self {
        let per_mode = dims
            .iter()
            .map(|&len| if len <= 1 { 0 } else { usize::BITS - (len - 1).leading_zeros() })
            .collect();
        Self { per_mode }
    }

    pub fn from_bits(per_mode: Vec<u32>) -> Self {
        Self { per_mode }
    }

    pub fn order(&self) -> usize {
        self.per_mode.len()
    }

    pub fn per_mode(&self) -> &[u32] {
        &self.per_mode
    }

    pub fn bits(&self, mode: usize) -> u32 {
        self.per_mode[mode]
    }

    pub fn total(&self) -> u32 {
        self.per_mode.iter().sum()
    }

    /// Number of distinct interleavings, `ℓ(p)! / Π ℓ(n)!`.
    ///
    /// Computed as a product of binomials so no factorial is materialized.
    pub fn count_interleavings(&self) -> BigUint {
        let mut count = BigUint::from(1u32);
        let mut placed = 0u64;
        for &bits in &self.per_mode {
            // C(placed + bits, bits), built incrementally so each partial
            // quotient stays integral.
            for k in 1..=u64::from(bits) {
                count *= placed + k;
                count /= k;
            }
            placed += u64::from(bits);
        }
        count
    }
}
