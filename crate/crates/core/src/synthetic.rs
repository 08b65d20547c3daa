//! Reward sources and tensors that need no hardware timing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::{EvalStatus, Measurement, RewardSource};
use crate::linearize::EncodingPlan;
use crate::tensor::SparseTensorCoo;
use crate::{seeded_rng, Result, Rng};

/// Speedup `exp(matches / ℓ(p))`, where `matches` counts the linear bits on
/// which a plan agrees with a hidden target plan. The target is the unique
/// optimum.
#[derive(Debug, Clone)]
pub struct MatchReward {
    hidden: EncodingPlan,
    calls: u64,
}

impl MatchReward {
    pub fn new(hidden: EncodingPlan) -> Self {
        Self { hidden, calls: 0 }
    }

    pub fn hidden(&self) -> &EncodingPlan {
        &self.hidden
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn speedup(&self, plan: &EncodingPlan) -> f64 {
        let matches = plan
            .picks()
            .iter()
            .zip(self.hidden.picks())
            .filter(|(a, b)| a == b)
            .count();
        libm::exp(matches as f64 / self.hidden.len() as f64)
    }
}

impl RewardSource for MatchReward {
    fn baseline_seconds(&self) -> f64 {
        1.0
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement> {
        self.calls += 1;
        let speedup = self.speedup(plan);
        Ok(Measurement { seconds: 1.0 / speedup, speedup, status: EvalStatus::Ok })
    }
}

/// Speedup `exp(σ·u)` with `u ∈ [-1, 1)` drawn from a hash of the plan:
/// fixed per plan, but carrying no structure a model could learn.
#[derive(Debug, Clone)]
pub struct NoiseReward {
    seed: u64,
    sigma: f64,
}

impl NoiseReward {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self { seed, sigma }
    }

    pub fn speedup(&self, plan: &EncodingPlan) -> f64 {
        // FNV-1a over the picks
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        for &m in plan.picks() {
            h ^= m as u64 + 1;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let u: f64 = seeded_rng(h).gen_range(-1.0..1.0);
        libm::exp(self.sigma * u)
    }
}

impl RewardSource for NoiseReward {
    fn baseline_seconds(&self) -> f64 {
        1.0
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement> {
        let speedup = self.speedup(plan);
        Ok(Measurement { seconds: 1.0 / speedup, speedup, status: EvalStatus::Ok })
    }
}

/// Speedup `exp(Σ_k w(p_k, k))`: each (mode, bit position) cell of the
/// plan's state matrix carries a fixed weight drawn uniformly from
/// `[-σ, σ)`. The log-speedup is exactly linear in the state image, so a
/// reward model can learn it.
#[derive(Debug, Clone)]
pub struct LinearReward {
    seed: u64,
    sigma: f64,
}

impl LinearReward {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self { seed, sigma }
    }

    pub fn weight(&self, mode: usize, position: usize) -> f64 {
        let h = self.seed ^ ((mode as u64) << 32 | position as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        self.sigma * seeded_rng(h).gen_range(-1.0..1.0)
    }

    pub fn speedup(&self, plan: &EncodingPlan) -> f64 {
        let log: f64 = plan.picks().iter().enumerate().map(|(k, &m)| self.weight(m, k)).sum();
        libm::exp(log)
    }
}

impl RewardSource for LinearReward {
    fn baseline_seconds(&self) -> f64 {
        1.0
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement> {
        let speedup = self.speedup(plan);
        Ok(Measurement { seconds: 1.0 / speedup, speedup, status: EvalStatus::Ok })
    }
}

/// Scripted candidate timings, for tests that need exact reward values.
/// Unlisted plans take the baseline time.
#[derive(Debug, Clone, Default)]
pub struct TableReward {
    baseline: f64,
    baseline_plan: Option<EncodingPlan>,
    seconds: BTreeMap<String, f64>,
    timeouts: BTreeSet<String>,
    calls: u64,
}

impl TableReward {
    pub fn new(baseline_seconds: f64) -> Self {
        Self { baseline: baseline_seconds, ..Self::default() }
    }

    pub fn with(mut self, plan: &EncodingPlan, seconds: f64) -> Self {
        self.seconds.insert(plan.to_text(), seconds);
        self
    }

    pub fn with_timeout(mut self, plan: &EncodingPlan) -> Self {
        self.timeouts.insert(plan.to_text());
        self
    }

    pub fn with_baseline(mut self, plan: EncodingPlan) -> Self {
        self.baseline_plan = Some(plan);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl RewardSource for TableReward {
    fn baseline_seconds(&self) -> f64 {
        self.baseline
    }

    fn baseline_plan(&self) -> Option<EncodingPlan> {
        self.baseline_plan.clone()
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement> {
        self.calls += 1;
        let key = plan.to_text();
        if self.timeouts.contains(&key) {
            return Ok(Measurement {
                seconds: 5.0 * self.baseline,
                speedup: 0.0,
                status: EvalStatus::TimedOut,
            });
        }
        let seconds = self.seconds.get(&key).copied().unwrap_or(self.baseline);
        Ok(Measurement { seconds, speedup: self.baseline / seconds, status: EvalStatus::Ok })
    }
}

/// Random tensor whose indices follow a power law in every mode:
/// index `⌊I_n · u^skew⌋` for uniform `u`, so low indices are dense and
/// `skew = 1` is uniform. Duplicate draws are merged, so the result can hold
/// slightly fewer than `nnz` entries.
pub fn skewed_tensor(dims: &[usize], nnz: usize, skew: f64, rng: &mut Rng) -> Result<SparseTensorCoo> {
    let mut entries = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let coords: Vec<usize> = dims
            .iter()
            .map(|&len| {
                let u: f64 = rng.gen();
                ((len as f64 * libm::pow(u, skew)) as usize).min(len - 1)
            })
            .collect();
        entries.push((coords, rng.gen_range(0.5..1.5)));
    }
    SparseTensorCoo::from_entries(dims.to_vec(), entries)
}
