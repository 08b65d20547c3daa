use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::BitBudget;
use crate::{Error, Result};

/// Sequence of zero-based mode ids, one per linear bit from bit 0 upwards.
///
/// Valid iff every mode appears exactly as many times as its bit budget.
/// Text form is comma-separated one-based mode ids, e.g. `3,1,2,1,2,2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncodingPlan {
    picks: Vec<usize>,
    order: usize,
}

impl EncodingPlan {
    pub fn new(picks: Vec<usize>, budget: &BitBudget) -> Result<Self> {
        let mut counts = vec![0u32; budget.order()];
        for (t, &mode) in picks.iter().enumerate() {
            let slot = counts.get_mut(mode).ok_or_else(|| {
                Error::InvalidPlan(format!(
                    "bit {t} picks mode {} but the tensor has {} modes",
                    mode + 1,
                    budget.order()
                ))
            })?;
            *slot += 1;
        }
        for (mode, (&got, &want)) in counts.iter().zip(budget.per_mode()).enumerate() {
            if got != want {
                return Err(Error::InvalidPlan(format!(
                    "mode {} picked {got} times, needs {want}",
                    mode + 1
                )));
            }
        }
        Ok(Self { picks, order: budget.order() })
    }

    /// Parses the one-based comma-separated text form.
    pub fn parse(text: &str, budget: &BitBudget) -> Result<Self> {
        let text = text.trim();
        let picks = if text.is_empty() {
            Vec::new()
        } else {
            text.split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    match tok.parse::<usize>() {
                        Ok(id) if id >= 1 => Ok(id - 1),
                        _ => Err(Error::InvalidPlan(format!("bad mode id {tok:?}"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(picks, budget)
    }

    /// Mode-major layout: all bits of the last mode lowest, the first mode
    /// highest, which orders positions like row-major coordinates.
    pub fn row_major(budget: &BitBudget) -> Self {
        let mut picks = Vec::with_capacity(budget.total() as usize);
        for mode in (0..budget.order()).rev() {
            picks.extend(core::iter::repeat_n(mode, budget.bits(mode) as usize));
        }
        Self { picks, order: budget.order() }
    }

    pub fn picks(&self) -> &[usize] {
        &self.picks
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.picks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.picks.is_empty()
    }

    /// Linear bit positions owned by `mode`, in the order of the mode's own
    /// bits (LSB first).
    pub fn bits_of(&self, mode: usize) -> impl Iterator<Item = u32> + '_ {
        self.picks
            .iter()
            .enumerate()
            .filter(move |(_, &m)| m == mode)
            .map(|(t, _)| t as u32)
    }

    pub fn to_text(&self) -> String {
        format!("{self}")
    }
}

impl fmt::Display for EncodingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.picks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", m + 1)?;
        }
        Ok(())
    }
}

/// The expert interleaving: LSB-first round robin over modes sorted by
/// increasing bit count (ties to the lower mode), skipping exhausted modes.
pub fn alto_default_plan(budget: &BitBudget) -> EncodingPlan {
    let mut modes: Vec<usize> = (0..budget.order()).filter(|&m| budget.bits(m) > 0).collect();
    modes.sort_by_key(|&m| (budget.bits(m), m));
    let mut left: Vec<u32> = budget.per_mode().to_vec();
    let mut picks = Vec::with_capacity(budget.total() as usize);
    while picks.len() < budget.total() as usize {
        for &m in &modes {
            if left[m] > 0 {
                left[m] -= 1;
                picks.push(m);
            }
        }
    }
    EncodingPlan { picks, order: budget.order() }
}

/// Every valid plan for `budget`, in lexicographic order of picks.
///
/// The result has `budget.count_interleavings()` elements; only use it on
/// small budgets.
pub fn enumerate_plans(budget: &BitBudget) -> Vec<EncodingPlan> {
    fn walk(left: &mut [u32], prefix: &mut Vec<usize>, total: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == total {
            out.push(prefix.clone());
            return;
        }
        for m in 0..left.len() {
            if left[m] > 0 {
                left[m] -= 1;
                prefix.push(m);
                walk(left, prefix, total, out);
                prefix.pop();
                left[m] += 1;
            }
        }
    }
    let mut left = budget.per_mode().to_vec();
    let mut out = Vec::new();
    walk(&mut left, &mut Vec::new(), budget.total() as usize, &mut out);
    out.into_iter()
        .map(|picks| EncodingPlan { picks, order: budget.order() })
        .collect()
}
