//! The encoding-construction MDP.
//!
//! A state is an `N × ℓ(p)` one-hot matrix: column `j` has a hot bit in row
//! `n` when linear bit `j` takes the next-lowest bit of mode `n`. An action
//! picks a mode; masking keeps every episode budget-exact, so each of the
//! `ℓ(p)` steps ends in a valid plan. Only the terminal step is rewarded,
//! with the speedup of the plan over the baseline encoding.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::linearize::{BitBudget, EncodingPlan};
use crate::{Error, Result};

/// Partially or fully built encoding, stored as the picks made so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateMatrix {
    budget: Arc<[u32]>,
    picks: Vec<usize>,
    used: Vec<u32>,
}

impl StateMatrix {
    /// The empty encoding.
    pub fn initial(budget: &BitBudget) -> Self {
        Self {
            budget: budget.per_mode().into(),
            picks: Vec::new(),
            used: vec![0; budget.order()],
        }
    }

    /// Replays `picks` from the initial state.
    pub fn from_picks(budget: &BitBudget, picks: &[usize]) -> Result<Self> {
        picks
            .iter()
            .try_fold(Self::initial(budget), |s, &a| s.transition(a))
    }

    pub fn from_plan(plan: &EncodingPlan, budget: &BitBudget) -> Result<Self> {
        Self::from_picks(budget, plan.picks())
    }

    pub fn rows(&self) -> usize {
        self.budget.len()
    }

    pub fn cols(&self) -> usize {
        self.budget.iter().sum::<u32>() as usize
    }

    pub fn budget(&self) -> BitBudget {
        BitBudget::from_bits(self.budget.to_vec())
    }

    pub fn picks(&self) -> &[usize] {
        &self.picks
    }

    pub fn hot_bits(&self) -> usize {
        self.picks.len()
    }

    /// Hot bits in row `mode`.
    pub fn row_count(&self, mode: usize) -> u32 {
        self.used[mode]
    }

    pub fn cell(&self, mode: usize, col: usize) -> bool {
        self.picks.get(col) == Some(&mode)
    }

    pub fn is_terminal(&self) -> bool {
        self.picks.len() == self.cols()
    }

    /// Modes that still have unassigned bits.
    pub fn valid_actions(&self) -> Result<Vec<usize>> {
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        Ok((0..self.rows()).filter(|&m| self.used[m] < self.budget[m]).collect())
    }

    /// `mask[m]` is true when mode `m` may be picked next.
    pub fn action_mask(&self) -> Vec<bool> {
        (0..self.rows()).map(|m| self.used[m] < self.budget[m]).collect()
    }

    pub fn transition(&self, action: usize) -> Result<Self> {
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        if action >= self.rows() || self.used[action] >= self.budget[action] {
            return Err(Error::InvalidAction { action });
        }
        let mut next = self.clone();
        next.picks.push(action);
        next.used[action] += 1;
        Ok(next)
    }

    pub fn to_plan(&self) -> Result<EncodingPlan> {
        if !self.is_terminal() {
            return Err(Error::NonTerminalState);
        }
        EncodingPlan::new(self.picks.clone(), &self.budget())
    }

    /// Row-major `rows × cols` image of zeros and ones.
    pub fn to_image(&self) -> Vec<f64> {
        let cols = self.cols();
        let mut img = vec![0.0; self.rows() * cols];
        for (j, &m) in self.picks.iter().enumerate() {
            img[m * cols + j] = 1.0;
        }
        img
    }
}

/// Size of the terminal state space, the number of valid plans.
pub fn state_space_size(budget: &BitBudget) -> BigUint {
    budget.count_interleavings()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalStatus {
    Ok,
    TimedOut,
}

/// Raw outcome of evaluating one plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub seconds: f64,
    pub speedup: f64,
    pub status: EvalStatus,
}

/// Something that can score a terminal plan: a benchmark, a remote server,
/// or a synthetic oracle.
pub trait RewardSource {
    /// Seconds taken by the baseline encoding.
    fn baseline_seconds(&self) -> f64;

    /// The baseline plan, if this source measured one. It enters the reward
    /// cache with speedup 1.
    fn baseline_plan(&self) -> Option<EncodingPlan> {
        None
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement>;
}

impl<S: RewardSource + ?Sized> RewardSource for &mut S {
    fn baseline_seconds(&self) -> f64 {
        (**self).baseline_seconds()
    }

    fn baseline_plan(&self) -> Option<EncodingPlan> {
        (**self).baseline_plan()
    }

    fn measure(&mut self, plan: &EncodingPlan) -> Result<Measurement> {
        (**self).measure(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardCacheEntry {
    pub speedup: f64,
    pub seconds: f64,
    pub timed_out: bool,
}

/// Measured rewards keyed by the plan's text form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardCache {
    entries: BTreeMap<String, RewardCacheEntry>,
}

impl RewardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, plan: &EncodingPlan) -> Option<RewardCacheEntry> {
        self.entries.get(&plan.to_text()).copied()
    }

    pub fn insert(&mut self, plan: &EncodingPlan, entry: RewardCacheEntry) {
        self.entries.insert(plan.to_text(), entry);
    }

    pub fn insert_key(&mut self, key: String, entry: RewardCacheEntry) {
        self.entries.insert(key, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &RewardCacheEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardOrigin {
    Measured,
    Cached,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalReward {
    pub speedup: f64,
    pub seconds: f64,
    pub origin: RewardOrigin,
    pub timed_out: bool,
}

/// Wraps a [`RewardSource`] with the reward cache and the timeout floor.
#[derive(Debug)]
pub struct Environment<S> {
    source: S,
    budget: BitBudget,
    cache: RewardCache,
    floor: f64,
    interactions: u64,
}

impl<S: RewardSource> Environment<S> {
    pub fn new(source: S, budget: BitBudget) -> Self {
        let mut env = Self {
            source,
            budget,
            cache: RewardCache::new(),
            floor: 1.0,
            interactions: 0,
        };
        if let Some(plan) = env.source.baseline_plan() {
            let seconds = env.source.baseline_seconds();
            env.cache.insert(&plan, RewardCacheEntry { speedup: 1.0, seconds, timed_out: false });
        }
        env
    }

    /// Merges previously measured entries, e.g. from a persisted file, and
    /// lowers the floor accordingly. Entries already present win.
    pub fn with_cache(mut self, cache: RewardCache) -> Self {
        for (k, e) in cache.iter() {
            if !e.timed_out {
                self.floor = self.floor.min(e.speedup);
            }
            if !self.cache.entries.contains_key(k) {
                self.cache.insert_key(k.into(), *e);
            }
        }
        self
    }

    pub fn budget(&self) -> &BitBudget {
        &self.budget
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    pub fn cache(&self) -> &RewardCache {
        &self.cache
    }

    /// Number of real evaluations performed by the source.
    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Worst speedup observed so far (starts at the baseline's 1.0).
    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn baseline_seconds(&self) -> f64 {
        self.source.baseline_seconds()
    }

    pub fn cached(&self, plan: &EncodingPlan) -> Option<RewardCacheEntry> {
        self.cache.get(plan)
    }

    /// Speedup of `plan` over the baseline, from the cache when possible.
    ///
    /// A timed-out evaluation scores the current floor and is cached with
    /// its flag set so it is never run again.
    pub fn terminal_reward(&mut self, plan: &EncodingPlan) -> Result<TerminalReward> {
        if plan.order() != self.budget.order() {
            return Err(Error::InvalidPlan("plan order does not match environment".into()));
        }
        EncodingPlan::new(plan.picks().to_vec(), &self.budget)?;
        if let Some(e) = self.cache.get(plan) {
            return Ok(TerminalReward {
                speedup: e.speedup,
                seconds: e.seconds,
                origin: RewardOrigin::Cached,
                timed_out: e.timed_out,
            });
        }
        let m = self.source.measure(plan)?;
        self.interactions += 1;
        let (speedup, timed_out) = match m.status {
            EvalStatus::Ok => {
                if !(m.speedup.is_finite() && m.speedup > 0.0) {
                    return Err(Error::NonFinite("speedup"));
                }
                self.floor = self.floor.min(m.speedup);
                (m.speedup, false)
            }
            EvalStatus::TimedOut => (self.floor, true),
        };
        self.cache.insert(plan, RewardCacheEntry { speedup, seconds: m.seconds, timed_out });
        Ok(TerminalReward { speedup, seconds: m.seconds, origin: RewardOrigin::Measured, timed_out })
    }
}
