use alloc::vec::Vec;

use super::{BitBudget, EncodingPlan};
use crate::{Error, Result};

/// A maximal block of consecutive linear bits owned by one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Run {
    /// Lowest linear bit of the block.
    linear_shift: u32,
    /// Matching lowest bit inside the mode index.
    mode_shift: u32,
    mask: u64,
}

/// Precompiled scatter/gather tables for one plan.
///
/// Each mode's bits are grouped into runs of adjacent linear bits so that
/// extracting a coordinate costs one shift-and-mask per run rather than one
/// per bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCodec {
    runs: Vec<Vec<Run>>,
    masks: Vec<u128>,
    bits: u32,
}

impl BitCodec {
    pub fn new(plan: &EncodingPlan, budget: &BitBudget) -> Result<Self> {
        if plan.order() != budget.order() {
            return Err(Error::InvalidPlan(alloc::format!(
                "plan for {} modes used with {} modes",
                plan.order(),
                budget.order()
            )));
        }
        let bits = budget.total();
        if bits > 128 {
            return Err(Error::EncodingTooWide { bits });
        }
        let mut runs: Vec<Vec<Run>> = (0..budget.order()).map(|_| Vec::new()).collect();
        let mut next_bit = alloc::vec![0u32; budget.order()];
        let mut masks = alloc::vec![0u128; budget.order()];
        let mut prev: Option<usize> = None;
        for (t, &mode) in plan.picks().iter().enumerate() {
            let t = t as u32;
            masks[mode] |= 1u128 << t;
            let k = next_bit[mode];
            next_bit[mode] += 1;
            match runs[mode].last_mut() {
                Some(run) if prev == Some(mode) => run.mask = (run.mask << 1) | 1,
                _ => runs[mode].push(Run { linear_shift: t, mode_shift: k, mask: 1 }),
            }
            prev = Some(mode);
        }
        if next_bit.as_slice() != budget.per_mode() {
            return Err(Error::InvalidPlan("plan does not match bit budget".into()));
        }
        Ok(Self { runs, masks, bits })
    }

    pub fn order(&self) -> usize {
        self.runs.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Linear bit positions belonging to `mode`.
    pub fn mode_mask(&self, mode: usize) -> u128 {
        self.masks[mode]
    }

    /// Scatters `coords` into a position. Coordinates must fit their bit
    /// budget; range checks against the true mode lengths are the caller's.
    pub fn encode(&self, coords: &[usize]) -> Result<u128> {
        if coords.len() != self.order() {
            return Err(Error::OrderMismatch { expected: self.order(), got: coords.len() });
        }
        let mut p = 0u128;
        for (mode, (runs, &c)) in self.runs.iter().zip(coords).enumerate() {
            let c = c as u64;
            let width: u32 = runs.iter().map(|r| r.mask.count_ones()).sum();
            if width < 64 && c >> width != 0 {
                return Err(Error::CoordinateOutOfRange {
                    mode,
                    coord: c as usize,
                    len: 1usize << width,
                });
            }
            for r in runs {
                p |= u128::from((c >> r.mode_shift) & r.mask) << r.linear_shift;
            }
        }
        Ok(p)
    }

    pub fn decode(&self, p: u128) -> Result<Vec<usize>> {
        if self.bits < 128 && p >> self.bits != 0 {
            return Err(Error::PositionOutOfRange { position: p, bits: self.bits });
        }
        Ok((0..self.order()).map(|m| self.extract(p, m) as usize).collect())
    }

    /// Gathers the index of one mode from a position.
    #[inline]
    pub fn extract<W: PositionWord>(&self, p: W, mode: usize) -> u64 {
        let mut c = 0u64;
        for r in &self.runs[mode] {
            c |= p.field(r.linear_shift, r.mask) << r.mode_shift;
        }
        c
    }
}

/// Unsigned words that can hold a position.
pub trait PositionWord: Copy + Ord + Send + Sync + 'static {
    /// `(self >> shift) & mask`, narrowed to 64 bits.
    fn field(self, shift: u32, mask: u64) -> u64;
}

impl PositionWord for u64 {
    #[inline]
    fn field(self, shift: u32, mask: u64) -> u64 {
        (self >> shift) & mask
    }
}

impl PositionWord for u128 {
    #[inline]
    fn field(self, shift: u32, mask: u64) -> u64 {
        ((self >> shift) as u64) & mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{alto_default_plan, enumerate_plans};

    /// Bit-at-a-time scatter, independent of the run tables.
    fn scatter(coords: &[usize], plan: &EncodingPlan) -> u128 {
        let mut used = alloc::vec![0u32; plan.order()];
        let mut p = 0u128;
        for (t, &m) in plan.picks().iter().enumerate() {
            let bit = (coords[m] >> used[m]) & 1;
            used[m] += 1;
            p |= (bit as u128) << t;
        }
        p
    }

    #[test]
    fn worked_example() {
        let budget = BitBudget::from_dims(&[4, 8, 2]);
        let plan = alto_default_plan(&budget);
        let codec = BitCodec::new(&plan, &budget).unwrap();
        assert_eq!(codec.encode(&[3, 5, 1]).unwrap(), 0b101111);
        assert_eq!(scatter(&[3, 5, 1], &plan), 47);
        assert_eq!(codec.decode(47).unwrap(), alloc::vec![3, 5, 1]);
        assert_eq!(codec.encode(&[0, 0, 0]).unwrap(), 0);
        assert_eq!(codec.decode(0).unwrap(), alloc::vec![0, 0, 0]);
        assert_eq!(codec.mode_mask(0), 0b001010);
        assert_eq!(codec.mode_mask(1), 0b110100);
        assert_eq!(codec.mode_mask(2), 0b000001);
    }

    #[test]
    fn rejects_out_of_range() {
        let budget = BitBudget::from_dims(&[4, 8, 2]);
        let codec = BitCodec::new(&alto_default_plan(&budget), &budget).unwrap();
        assert!(matches!(codec.decode(64), Err(Error::PositionOutOfRange { .. })));
        assert!(matches!(codec.encode(&[4, 0, 0]), Err(Error::CoordinateOutOfRange { mode: 0, .. })));
        assert!(codec.encode(&[0, 0]).is_err());
    }

    #[test]
    fn every_plan_matches_scatter_oracle() {
        let budget = BitBudget::from_bits(alloc::vec![2, 3, 1]);
        for plan in enumerate_plans(&budget) {
            let codec = BitCodec::new(&plan, &budget).unwrap();
            for a in 0..4 {
                for b in 0..8 {
                    for c in 0..2 {
                        assert_eq!(codec.encode(&[a, b, c]).unwrap(), scatter(&[a, b, c], &plan));
                    }
                }
            }
        }
    }

    #[test]
    fn full_width_words() {
        let budget = BitBudget::from_bits(alloc::vec![64, 64]);
        let plan = alto_default_plan(&budget);
        let codec = BitCodec::new(&plan, &budget).unwrap();
        let c = [usize::MAX, 0x1234_5678_9abc_def0];
        let p = codec.encode(&c).unwrap();
        assert_eq!(codec.decode(p).unwrap(), c.to_vec());
        assert!(matches!(
            BitCodec::new(&alto_default_plan(&BitBudget::from_bits(alloc::vec![65, 64])), &BitBudget::from_bits(alloc::vec![65, 64])),
            Err(Error::EncodingTooWide { bits: 129 })
        ));
    }
}
