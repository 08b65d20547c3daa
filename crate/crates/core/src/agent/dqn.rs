use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::replay::Transition;
use crate::env::StateMatrix;
use crate::nn::{Adam, QNetwork};
use crate::{Error, Result, Rng};

/// Anything that scores every action in a state.
pub trait ActionValues {
    fn action_values(&self, s: &StateMatrix) -> Result<Vec<f64>>;
}

impl ActionValues for QNetwork {
    fn action_values(&self, s: &StateMatrix) -> Result<Vec<f64>> {
        self.q_values(s)
    }
}

/// Highest-valued action among `mask`ed-in ones; ties go to the lowest id.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// ε-greedy over the valid actions of a non-terminal state.
pub fn select_action<Q: ActionValues>(s: &StateMatrix, epsilon: f64, policy: &Q, rng: &mut Rng) -> Result<usize> {
    let valid = s.valid_actions()?;
    if rng.gen::<f64>() < epsilon {
        return Ok(*valid.choose(rng).expect("non-terminal states have a valid action"));
    }
    let q = policy.action_values(s)?;
    masked_argmax(&q, &s.action_mask()).ok_or(Error::TerminalState)
}

/// Double-DQN target: `r + γ·Q(s′, argmax_a′ Q(s′, a′; θ); θ⁻)`, the argmax
/// restricted to actions valid in `s′`. Terminal transitions return `r`
/// without touching either network.
pub fn td_target<P: ActionValues, T: ActionValues>(
    t: &Transition,
    gamma: f64,
    policy: &P,
    target: &T,
) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    let online = policy.action_values(&t.next)?;
    let best = masked_argmax(&online, &t.next.action_mask()).ok_or(Error::TerminalState)?;
    Ok(t.reward + gamma * target.action_values(&t.next)?[best])
}

/// Result of one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Importance-weighted mean squared TD error before the step.
    pub loss: f64,
    /// `target − Q(s, a; θ)` per batch element.
    pub td_errors: Vec<f64>,
}

/// One Adam step on `(1/|B|) Σ w_i [y_i − Q(s_i, a_i; θ)]²`. `target` is
/// only read. A non-finite loss or gradient leaves `policy` unchanged.
pub fn train_step(
    policy: &mut QNetwork,
    target: &QNetwork,
    adam: &mut Adam,
    batch: &[(&Transition, f64)],
    gamma: f64,
) -> Result<TrainOutcome> {
    if batch.is_empty() {
        return Ok(TrainOutcome { loss: 0.0, td_errors: Vec::new() });
    }
    let scale = 1.0 / batch.len() as f64;
    let net = policy.network();
    let mut grads = vec![0.0; net.param_count()];
    let mut td_errors = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for &(t, weight) in batch {
        let y = td_target(t, gamma, policy, target)?;
        let trace = net.forward_trace(&t.state.to_image())?;
        let q = trace.output()[t.action];
        let delta = y - q;
        loss += scale * weight * delta * delta;
        let mut g = vec![0.0; net.output_len()];
        g[t.action] = -2.0 * scale * weight * delta;
        net.backward(&trace, &g, &mut grads);
        td_errors.push(delta);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("TD loss"));
    }
    adam.step(policy.network_mut().params_mut(), &grads)?;
    Ok(TrainOutcome { loss, td_errors })
}

/// Spreads the terminal speedup uniformly: every step gets
/// `ln(speedup) / ℓ(p)`.
pub fn shape_rewards(episode: &mut [Transition], terminal_speedup: f64) -> Result<()> {
    if !(terminal_speedup > 0.0 && terminal_speedup.is_finite()) {
        return Err(Error::NonFinite("terminal speedup"));
    }
    let credit = libm::log(terminal_speedup) / episode.len() as f64;
    for t in episode.iter_mut() {
        t.reward = credit;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::BitBudget;
    use crate::nn::{LayerSpec, Sequential};
    use crate::seeded_rng;

    struct Fixed(Vec<f64>);

    impl ActionValues for Fixed {
        fn action_values(&self, _: &StateMatrix) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn argmax_masks_and_breaks_ties_low() {
        assert_eq!(masked_argmax(&[1.0, 5.0, 5.0], &[true, true, true]), Some(1));
        assert_eq!(masked_argmax(&[1.0, 5.0, 5.0], &[true, false, true]), Some(2));
        assert_eq!(masked_argmax(&[1.0, 5.0], &[false, false]), None);
        assert_eq!(masked_argmax(&[f64::NEG_INFINITY, -1e300], &[true, true]), Some(1));
    }

    #[test]
    fn greedy_is_deterministic_and_masked() {
        let b = BitBudget::from_bits(vec![2, 3, 1]);
        let s = StateMatrix::from_picks(&b, &[2]).unwrap();
        let q = Fixed(vec![0.0, 1.0, 10.0]);
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(select_action(&s, 0.0, &q, &mut rng).unwrap(), 1);
        }
        for _ in 0..10_000 {
            assert_ne!(select_action(&s, 0.5, &q, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn shaping_examples() {
        let b = BitBudget::from_bits(vec![2, 3, 1]);
        let s = StateMatrix::initial(&b);
        let t = Transition { state: s.clone(), action: 0, reward: 0.0, next: s.transition(0).unwrap(), terminal: false, imagined: false };
        let mut ep = vec![t; 6];
        shape_rewards(&mut ep, 2.0).unwrap();
        assert!(ep.iter().all(|t| (t.reward - 0.115_524_530_093_324_2).abs() < 1e-15));
        shape_rewards(&mut ep, 1.0).unwrap();
        assert!(ep.iter().all(|t| t.reward == 0.0));
        assert!(shape_rewards(&mut ep, 0.0).is_err());
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let b = BitBudget::from_bits(vec![1, 1]);
        let s = StateMatrix::initial(&b);
        let mut q = QNetwork::with_network(
            Sequential::new(vec![LayerSpec::Dense { inputs: 4, outputs: 2 }]).unwrap(),
            2,
            2,
        )
        .unwrap();
        let before = q.clone();
        let target = q.clone();
        let mut adam = Adam::new(q.network().param_count(), 1e-3);
        let t = Transition { state: s.clone(), action: 0, reward: f64::NAN, next: s.transition(0).unwrap(), terminal: true, imagined: false };
        assert!(train_step(&mut q, &target, &mut adam, &[(&t, 1.0)], 0.9).is_err());
        assert_eq!(q, before);
    }
}
