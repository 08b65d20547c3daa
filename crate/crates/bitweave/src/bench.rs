//! Timed all-modes MTTKRP and the reward source built on it.

use std::time::Instant;

use bitweave_core::env::{EvalStatus, Measurement, RewardSource};
use bitweave_core::linearize::{alto_default_plan, linearize, BitBudget, EncodingPlan};
use bitweave_core::seeded_rng;
use bitweave_core::tensor::{FactorMatrices, SparseTensorCoo};

use crate::kernel::mttkrp_linearized;

pub const DEFAULT_SEED: u64 = 0x5EED;

/// A timed evaluation may spend this many baseline budgets before it is
/// abandoned.
pub const TIMEOUT_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub rank: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
    /// Expected nonzeros per output row at which the kernel switches from
    /// atomic updates to per-thread reduction buffers.
    pub rho: f64,
    pub seed: u64,
    /// Cap on the summed timed seconds.
    pub timeout: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            repeats: 10,
            warmup: 1,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            rho: 8.0,
            seed: DEFAULT_SEED,
            timeout: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: &str| Err(BenchError::Config(msg.into()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.rho.is_nan() || self.rho < 1.0 {
            return bad("rho must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// Median seconds per mode.
    pub per_mode: Vec<f64>,
    /// Sum of the per-mode medians.
    pub total: f64,
    /// Sum of all output entries, rounded to 9 significant digits so that
    /// atomic-update reordering does not change it.
    pub checksum: f64,
    /// `samples[mode][repeat]`, in seconds.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("timed out after {elapsed:.6}s (cap {cap:.6}s, {} samples kept)", partial.iter().map(Vec::len).sum::<usize>())]
    Timeout { elapsed: f64, cap: f64, partial: Vec<Vec<f64>> },
    #[error(transparent)]
    Core(#[from] bitweave_core::Error),
}

/// Measures one piece of work.
pub trait Timer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64;
}

/// Monotonic wall clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallTimer;

impl Timer for WallTimer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        let start = Instant::now();
        work();
        start.elapsed().as_secs_f64()
    }
}

/// Runs the work but reports scripted durations, cycling through them.
#[derive(Debug, Clone)]
pub struct FakeTimer {
    script: Vec<f64>,
    next: usize,
}

impl FakeTimer {
    pub fn new(script: Vec<f64>) -> Self {
        assert!(!script.is_empty(), "fake timer needs at least one duration");
        Self { script, next: 0 }
    }

    /// Durations that depend on the plan being timed, for tests of the
    /// reward pipeline. Every measurement of a plan reports
    /// `seconds(plan) / order` per mode.
    pub fn per_plan<F: Fn(&EncodingPlan) -> f64>(f: F) -> PlanTimer<F> {
        PlanTimer { seconds: f, current: None }
    }
}

impl Timer for FakeTimer {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        work();
        let t = self.script[self.next % self.script.len()];
        self.next += 1;
        t
    }
}

/// See [`FakeTimer::per_plan`].
pub struct PlanTimer<F> {
    seconds: F,
    current: Option<f64>,
}

impl<F: Fn(&EncodingPlan) -> f64> PlanTimer<F> {
    fn select(&mut self, plan: &EncodingPlan) {
        self.current = Some((self.seconds)(plan) / plan.order() as f64);
    }
}

impl<F: Fn(&EncodingPlan) -> f64> Timer for PlanTimer<F> {
    fn time(&mut self, work: &mut dyn FnMut()) -> f64 {
        work();
        self.current.expect("plan selected before timing")
    }
}

/// Lets [`MttkrpReward`] tell plan-aware timers which plan is running.
pub trait PlanAware {
    fn begin(&mut self, _plan: &EncodingPlan) {}
}

impl PlanAware for WallTimer {}
impl PlanAware for FakeTimer {}
impl<F: Fn(&EncodingPlan) -> f64> PlanAware for PlanTimer<F> {
    fn begin(&mut self, plan: &EncodingPlan) {
        self.select(plan);
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Linearizes once, runs `warmup` untimed passes, then times `repeats`
/// passes over all modes.
pub fn benchmark(
    t: &SparseTensorCoo,
    plan: &EncodingPlan,
    cfg: &BenchConfig,
    timer: &mut dyn Timer,
) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let lt = linearize(t, plan)?;
    let factors = FactorMatrices::random(t.dims(), cfg.rank, &mut seeded_rng(cfg.seed));
    let order = t.order();
    for _ in 0..cfg.warmup {
        for mode in 0..order {
            mttkrp_linearized(&lt, &factors, mode, cfg.threads, cfg.rho)?;
        }
    }
    let mut samples = vec![Vec::with_capacity(cfg.repeats); order];
    let mut elapsed = 0.0;
    let mut checksum = 0.0;
    for rep in 0..cfg.repeats {
        for (mode, mode_samples) in samples.iter_mut().enumerate() {
            let mut out = None;
            let secs = timer.time(&mut || out = Some(mttkrp_linearized(&lt, &factors, mode, cfg.threads, cfg.rho)));
            let out = out.expect("timer ran the work")?;
            if rep + 1 == cfg.repeats {
                checksum += out.as_slice().iter().sum::<f64>();
            }
            mode_samples.push(secs);
            elapsed += secs;
            if let Some(cap) = cfg.timeout {
                if elapsed > cap {
                    return Err(BenchError::Timeout { elapsed, cap, partial: samples });
                }
            }
        }
    }
    let per_mode: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    Ok(BenchResult { total: per_mode.iter().sum(), per_mode, checksum: quantize(checksum), samples })
}

/// Reward source that benchmarks candidate plans against the baseline plan
/// (ALTO unless overridden), measured once at construction.
pub struct MttkrpReward<T> {
    tensor: SparseTensorCoo,
    cfg: BenchConfig,
    timer: T,
    baseline_plan: EncodingPlan,
    baseline: BenchResult,
}

impl<T: Timer + PlanAware> MttkrpReward<T> {
    pub fn new(tensor: SparseTensorCoo, cfg: BenchConfig, timer: T) -> Result<Self, BenchError> {
        let plan = alto_default_plan(&BitBudget::from_dims(tensor.dims()));
        Self::with_baseline(tensor, cfg, timer, plan)
    }

    pub fn with_baseline(
        tensor: SparseTensorCoo,
        cfg: BenchConfig,
        mut timer: T,
        baseline_plan: EncodingPlan,
    ) -> Result<Self, BenchError> {
        let cfg = BenchConfig { timeout: None, ..cfg };
        timer.begin(&baseline_plan);
        let baseline = benchmark(&tensor, &baseline_plan, &cfg, &mut timer)?;
        Ok(Self { tensor, cfg, timer, baseline_plan, baseline })
    }

    pub fn tensor(&self) -> &SparseTensorCoo {
        &self.tensor
    }

    pub fn config(&self) -> &BenchConfig {
        &self.cfg
    }

    pub fn baseline(&self) -> &BenchResult {
        &self.baseline
    }

    /// Wall-clock cap on one candidate's timed repeats.
    pub fn cap(&self) -> f64 {
        TIMEOUT_FACTOR * self.baseline.total * self.cfg.repeats as f64
    }

    /// Full benchmark of `plan` under the candidate cap.
    pub fn run(&mut self, plan: &EncodingPlan) -> Result<BenchResult, BenchError> {
        let cfg = BenchConfig { timeout: Some(self.cap()), ..self.cfg.clone() };
        self.timer.begin(plan);
        benchmark(&self.tensor, plan, &cfg, &mut self.timer)
    }
}

impl<T: Timer + PlanAware> RewardSource for MttkrpReward<T> {
    fn baseline_seconds(&self) -> f64 {
        self.baseline.total
    }

    fn baseline_plan(&self) -> Option<EncodingPlan> {
        Some(self.baseline_plan.clone())
    }

    fn measure(&mut self, plan: &EncodingPlan) -> bitweave_core::Result<Measurement> {
        match self.run(plan) {
            Ok(r) => Ok(Measurement {
                seconds: r.total,
                speedup: self.baseline.total / r.total,
                status: EvalStatus::Ok,
            }),
            Err(BenchError::Timeout { elapsed, .. }) => {
                Ok(Measurement { seconds: elapsed, speedup: 0.0, status: EvalStatus::TimedOut })
            }
            Err(BenchError::Core(e)) => Err(e),
            Err(e) => Err(bitweave_core::Error::Evaluation(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bitweave_core::env::Environment;

    fn toy() -> SparseTensorCoo {
        SparseTensorCoo::from_entries(
            vec![4, 8, 2],
            vec![
                (vec![0, 0, 0], 1.0),
                (vec![1, 3, 1], 2.0),
                (vec![2, 7, 0], 3.0),
                (vec![3, 2, 1], 4.0),
                (vec![0, 5, 1], 5.0),
                (vec![3, 6, 0], 6.0),
            ],
        )
        .unwrap()
    }

    fn cfg(repeats: usize) -> BenchConfig {
        BenchConfig { repeats, threads: 2, ..Default::default() }
    }

    #[test]
    fn median_of_fake_times() {
        // one mode only, so every timed call belongs to it
        let t = SparseTensorCoo::from_entries(vec![4], vec![(vec![1], 1.0)]).unwrap();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        let r = benchmark(&t, &plan, &cfg(3), &mut FakeTimer::new(vec![2.0, 9.0, 1.0])).unwrap();
        assert_eq!(r.per_mode, vec![2.0]);
        assert_eq!(r.total, 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn total_is_sum_of_medians() {
        let t = toy();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        let mut timer = FakeTimer::new(vec![1.0, 2.0, 3.0, 1.5, 2.5, 3.5, 0.5, 2.0, 9.0]);
        let r = benchmark(&t, &plan, &cfg(3), &mut timer).unwrap();
        assert_eq!(r.per_mode, vec![1.0, 2.0, 3.5]);
        assert_eq!(r.total, 6.5);
        let r = benchmark(&t, &plan, &cfg(4), &mut WallTimer).unwrap();
        assert!((r.total - r.per_mode.iter().sum::<f64>()).abs() < 1e-15);
        assert!(r.per_mode.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn checksum_is_reproducible() {
        let mut rng = seeded_rng(1);
        let t = bitweave_core::synthetic::skewed_tensor(&[64, 32, 16], 5000, 2.0, &mut rng).unwrap();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        let c = BenchConfig { repeats: 2, threads: 4, rho: 1e9, ..Default::default() };
        let a = benchmark(&t, &plan, &c, &mut WallTimer).unwrap();
        let b = benchmark(&t, &plan, &c, &mut WallTimer).unwrap();
        assert_eq!(a.checksum, b.checksum);
        let other = EncodingPlan::row_major(&BitBudget::from_dims(t.dims()));
        assert_eq!(benchmark(&t, &other, &c, &mut WallTimer).unwrap().checksum, a.checksum);
    }

    #[test]
    fn timeout_keeps_partial_samples() {
        let t = toy();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        let c = BenchConfig { timeout: Some(4.0), ..cfg(3) };
        match benchmark(&t, &plan, &c, &mut FakeTimer::new(vec![1.5])) {
            Err(BenchError::Timeout { partial, elapsed, .. }) => {
                assert_eq!(elapsed, 4.5);
                assert_eq!(partial.iter().map(Vec::len).sum::<usize>(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_config_rejected() {
        let t = toy();
        let plan = alto_default_plan(&BitBudget::from_dims(t.dims()));
        for c in [BenchConfig { rank: 0, ..cfg(1) }, cfg(0), BenchConfig { rho: 0.5, ..cfg(1) }] {
            assert!(matches!(benchmark(&t, &plan, &c, &mut WallTimer), Err(BenchError::Config(_))));
        }
    }

    #[test]
    fn reward_is_baseline_over_candidate() {
        let t = toy();
        let b = BitBudget::from_dims(t.dims());
        let alto = alto_default_plan(&b);
        let fast = EncodingPlan::row_major(&b);
        let slow = EncodingPlan::parse("1,1,2,2,2,3", &b).unwrap();
        let (fast_text, slow_text) = (fast.to_text(), slow.to_text());
        let timer = FakeTimer::per_plan(move |p| match p.to_text() {
            s if s == fast_text => 1.0,
            s if s == slow_text => 100.0,
            _ => 2.0,
        });
        let src = MttkrpReward::new(t, cfg(3), timer).unwrap();
        assert_eq!(src.baseline_seconds(), 2.0);
        let mut env = Environment::new(src, b);
        assert_eq!(env.terminal_reward(&alto).unwrap().speedup, 1.0);
        assert_eq!(env.interactions(), 0);
        assert_eq!(env.terminal_reward(&fast).unwrap().speedup, 2.0);
        let r = env.terminal_reward(&slow).unwrap();
        assert!(r.timed_out);
        assert_eq!(r.speedup, 1.0);
        assert_eq!(env.interactions(), 2);
    }
}
