use alloc::vec::Vec;

use crate::nn::{RewardModel, RewardSample};
use crate::Result;

/// Whether terminal rewards may come from the reward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Every new terminal plan is measured.
    Exploration,
    /// New plans are scored by the model; only promising ones are measured.
    ModelGated,
}

/// Held-out quality of the reward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateReport {
    pub phase: Phase,
    /// Fraction of held-out samples within the relative-error tolerance.
    pub accuracy: f64,
    /// 95th percentile of held-out relative errors.
    pub margin: f64,
    pub held_out: usize,
}

/// Decides the phase from the most recent `holdout` real samples, which
/// the model must not have been trained on.
///
/// Opens only when `holdout` samples exist, at least one older sample was
/// available for training, and the held-out accuracy reaches `threshold`.
pub fn reward_model_gate(
    model: &RewardModel,
    history: &[RewardSample],
    holdout: usize,
    tolerance: f64,
    threshold: f64,
) -> Result<GateReport> {
    if holdout == 0 || history.len() <= holdout {
        return Ok(GateReport { phase: Phase::Exploration, accuracy: 0.0, margin: f64::INFINITY, held_out: 0 });
    }
    let held = &history[history.len() - holdout..];
    let mut errors = Vec::with_capacity(held.len());
    for s in held {
        let pred = libm::exp(model.predict_image(&s.image)?);
        let truth = libm::exp(s.log_speedup);
        errors.push((pred - truth).abs() / truth);
    }
    let within = errors.iter().filter(|&&e| e <= tolerance).count();
    let accuracy = within as f64 / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    let rank = libm::ceil(0.95 * errors.len() as f64) as usize;
    let margin = errors[rank.clamp(1, errors.len()) - 1];
    let phase = if accuracy >= threshold { Phase::ModelGated } else { Phase::Exploration };
    Ok(GateReport { phase, accuracy, margin, held_out: errors.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(log: f64) -> RewardSample {
        RewardSample { image: vec![1.0, 0.0], log_speedup: log }
    }

    #[test]
    fn needs_more_than_holdout_samples() {
        let m = RewardModel::zeros(1, 2, 2).unwrap();
        let hist: Vec<_> = (0..10).map(|_| sample(0.0)).collect();
        let r = reward_model_gate(&m, &hist, 10, 0.1, 0.9).unwrap();
        assert_eq!(r.phase, Phase::Exploration);
        assert_eq!(r.held_out, 0);
        let hist: Vec<_> = (0..11).map(|_| sample(0.0)).collect();
        let r = reward_model_gate(&m, &hist, 10, 0.1, 0.9).unwrap();
        assert_eq!(r.phase, Phase::ModelGated);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn accuracy_counts_relative_errors() {
        // zero model predicts speedup 1; truths 1.05 pass, 1.5 fail
        let m = RewardModel::zeros(1, 2, 2).unwrap();
        let mut hist = vec![sample(0.0)];
        hist.extend((0..8).map(|_| sample(libm::log(1.05))));
        hist.extend((0..2).map(|_| sample(libm::log(1.5))));
        let r = reward_model_gate(&m, &hist, 10, 0.1, 0.9).unwrap();
        assert!((r.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(r.phase, Phase::Exploration);
        assert!((r.margin - (1.0 - 1.0 / 1.5)).abs() < 1e-12);
    }
}
