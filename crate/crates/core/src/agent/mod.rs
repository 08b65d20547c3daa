//! Double DQN with prioritized replay, masked ε-greedy rollouts, a reward
//! cache, and a reward model that replaces unpromising measurements once it
//! is accurate enough.
//!
//! Each episode builds one plan in `ℓ(p)` masked steps. Intermediate steps
//! earn nothing; the terminal speedup is turned into a uniform per-step
//! credit `ln(speedup) / ℓ(p)` before the episode enters the replay buffer.

mod dqn;
mod gate;
mod hyper;
mod replay;

use alloc::vec::Vec;
use core::ops::ControlFlow;

pub use dqn::{masked_argmax, select_action, shape_rewards, td_target, train_step, ActionValues, TrainOutcome};
pub use gate::{reward_model_gate, GateReport, Phase};
pub use hyper::Hyperparameters;
pub use replay::{PrioritizedReplay, Sampled, SumTree, Transition};

use crate::env::{Environment, RewardOrigin, RewardSource, StateMatrix};
use crate::linearize::{alto_default_plan, BitBudget, EncodingPlan};
use crate::nn::{Adam, QNetwork, RewardModel, RewardSample};
use crate::{seeded_rng, Error, Result, Rng};

/// Where a terminal reward came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    /// Measured by the environment.
    Real,
    /// Served from the reward cache.
    Cached,
    /// Predicted by the reward model; never cached.
    Imagined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActionCounts {
    pub real: u64,
    pub cached: u64,
    pub imagined: u64,
}

impl ActionCounts {
    fn bump(&mut self, kind: ActionKind) {
        match kind {
            ActionKind::Real => self.real += 1,
            ActionKind::Cached => self.cached += 1,
            ActionKind::Imagined => self.imagined += 1,
        }
    }
}

/// Best measured plan so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestEncoding {
    pub plan: EncodingPlan,
    pub speedup: f64,
    pub episode: usize,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Zero for intermediate steps, the speedup for the terminal one.
    pub reward: f64,
    pub next: StateMatrix,
    /// Set on the terminal step.
    pub kind: Option<ActionKind>,
}

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub plan: EncodingPlan,
    pub speedup: f64,
    pub kind: ActionKind,
    /// Cumulative terminal-action counts.
    pub counts: ActionCounts,
    pub best: BestEncoding,
    pub phase: Phase,
    pub model_accuracy: Option<f64>,
    /// Mean training loss over the episode's gradient steps.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub best: BestEncoding,
    pub episodes: usize,
    /// Stopped before `max_episodes` (observer request or time budget).
    pub truncated: bool,
    pub counts: ActionCounts,
}

/// Complete learning state, for checkpoints.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub hyper: Hyperparameters,
    pub budget: BitBudget,
    pub episode: usize,
    pub policy: QNetwork,
    pub target: QNetwork,
    pub adam: Adam,
    pub reward_model: RewardModel,
    pub model_adam: Adam,
    pub model_samples: Vec<RewardSample>,
    pub gate: Option<GateReport>,
    pub gate_opened: Option<usize>,
    pub replay: PrioritizedReplay,
    pub best: Option<BestEncoding>,
    pub counts: ActionCounts,
    pub rng: Rng,
}

/// The learning agent. Owns all learning state; the environment is passed in
/// per call.
#[derive(Debug, Clone)]
pub struct Agent {
    s: AgentState,
}

impl Agent {
    pub fn new(budget: BitBudget, hyper: Hyperparameters) -> Result<Self> {
        let rows = budget.order();
        let cols = budget.total() as usize;
        if cols == 0 {
            return Err(Error::InvalidPlan("tensor has no bits to encode".into()));
        }
        let mut rng = seeded_rng(hyper.seed);
        let policy = QNetwork::new(rows, cols, hyper.hidden_scale, &mut rng)?;
        let reward_model = RewardModel::new(rows, cols, hyper.hidden_scale, &mut rng)?;
        let s = AgentState {
            adam: Adam::new(policy.network().param_count(), hyper.lr_initial),
            model_adam: Adam::new(reward_model.network().param_count(), hyper.model_lr),
            target: policy.clone(),
            policy,
            reward_model,
            model_samples: Vec::new(),
            gate: None,
            gate_opened: None,
            replay: PrioritizedReplay::new(hyper.replay_capacity, hyper.per_alpha, hyper.priority_eps),
            best: None,
            counts: ActionCounts::default(),
            episode: 0,
            budget,
            hyper,
            rng,
        };
        Ok(Self { s })
    }

    pub fn from_state(state: AgentState) -> Self {
        Self { s: state }
    }

    pub fn state(&self) -> &AgentState {
        &self.s
    }

    pub fn into_state(self) -> AgentState {
        self.s
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.s.hyper
    }

    pub fn budget(&self) -> &BitBudget {
        &self.s.budget
    }

    /// Episodes completed so far.
    pub fn episode(&self) -> usize {
        self.s.episode
    }

    pub fn policy(&self) -> &QNetwork {
        &self.s.policy
    }

    pub fn target(&self) -> &QNetwork {
        &self.s.target
    }

    pub fn replay(&self) -> &PrioritizedReplay {
        &self.s.replay
    }

    pub fn reward_model(&self) -> &RewardModel {
        &self.s.reward_model
    }

    pub fn best(&self) -> Option<&BestEncoding> {
        self.s.best.as_ref()
    }

    pub fn counts(&self) -> ActionCounts {
        self.s.counts
    }

    pub fn phase(&self) -> Phase {
        match (self.s.hyper.use_reward_model, self.s.gate) {
            (true, Some(g)) => g.phase,
            _ => Phase::Exploration,
        }
    }

    /// Episode at which the reward model first passed the gate.
    pub fn gate_opened(&self) -> Option<usize> {
        self.s.gate_opened
    }

    pub fn gate_report(&self) -> Option<GateReport> {
        self.s.gate
    }

    pub fn batch_size(&self) -> usize {
        self.s.hyper.batch_size.unwrap_or(self.s.budget.total() as usize).max(1)
    }

    pub fn epsilon(&self) -> f64 {
        self.s.hyper.epsilon(self.s.episode)
    }

    pub fn learning_rate(&self) -> f64 {
        self.s.hyper.learning_rate(self.s.episode)
    }

    /// Takes action `a` in `s`. Terminal steps are scored from the cache,
    /// a real measurement, or, once the model gate is open and the model
    /// predicts the plan cannot beat the best by more than its error
    /// margin, an imagined reward.
    pub fn filter_execute_action<S: RewardSource>(
        &mut self,
        a: usize,
        s: &StateMatrix,
        env: &mut Environment<S>,
    ) -> Result<StepOutcome> {
        let next = s.transition(a)?;
        if !next.is_terminal() {
            return Ok(StepOutcome { reward: 0.0, next, kind: None });
        }
        let plan = next.to_plan()?;
        if let Some(hit) = env.cached(&plan) {
            return Ok(StepOutcome { reward: hit.speedup, next, kind: Some(ActionKind::Cached) });
        }
        if self.phase() == Phase::ModelGated {
            let predicted = libm::exp(self.s.reward_model.predict(&next)?);
            let margin = self.s.gate.map_or(0.0, |g| g.margin);
            let best = self.s.best.as_ref().map_or(1.0, |b| b.speedup);
            if predicted < best * (1.0 - margin) {
                return Ok(StepOutcome { reward: predicted, next, kind: Some(ActionKind::Imagined) });
            }
        }
        let r = env.terminal_reward(&plan)?;
        let kind = match r.origin {
            RewardOrigin::Measured => ActionKind::Real,
            RewardOrigin::Cached => ActionKind::Cached,
        };
        if kind == ActionKind::Real && !r.timed_out {
            self.learn_reward(&next, r.speedup)?;
        }
        Ok(StepOutcome { reward: r.speedup, next, kind: Some(kind) })
    }

    /// Adds a measured sample, refits the reward model on everything but the
    /// held-out tail, and re-evaluates the gate.
    fn learn_reward(&mut self, terminal: &StateMatrix, speedup: f64) -> Result<()> {
        if !self.s.hyper.use_reward_model {
            return Ok(());
        }
        let h = &self.s.hyper;
        self.s.model_samples.push(RewardSample::new(terminal, speedup));
        let n_train = self.s.model_samples.len().saturating_sub(h.model_holdout);
        if n_train > 0 {
            let train = &self.s.model_samples[..n_train];
            for _ in 0..h.model_steps {
                let batch: Vec<&RewardSample> = (0..h.model_batch.min(n_train))
                    .map(|_| &train[rand::Rng::gen_range(&mut self.s.rng, 0..n_train)])
                    .collect();
                self.s.reward_model.train_batch(&batch, &mut self.s.model_adam)?;
            }
        }
        let report = reward_model_gate(
            &self.s.reward_model,
            &self.s.model_samples,
            h.model_holdout,
            h.model_tolerance,
            h.model_accuracy_threshold,
        )?;
        if report.phase == Phase::ModelGated && self.s.gate_opened.is_none() {
            self.s.gate_opened = Some(self.s.episode);
        }
        self.s.gate = Some(report);
        Ok(())
    }

    /// Samples a minibatch and applies one double-DQN update, refreshing
    /// the sampled priorities. Skipped until the replay holds a full batch.
    fn learn(&mut self) -> Result<Option<f64>> {
        let batch = self.batch_size();
        if self.s.replay.len() < batch {
            return Ok(None);
        }
        let beta = self.s.hyper.per_beta(self.s.episode);
        let picked = self.s.replay.sample(batch, beta, &mut self.s.rng);
        let items: Vec<(&Transition, f64)> = picked
            .iter()
            .map(|p| (self.s.replay.get(p.index), p.weight))
            .collect();
        let out = train_step(&mut self.s.policy, &self.s.target, &mut self.s.adam, &items, self.s.hyper.gamma)?;
        for (p, &delta) in picked.iter().zip(&out.td_errors) {
            self.s.replay.update_priority(p.index, delta);
        }
        Ok(Some(out.loss))
    }

    /// Runs one episode and returns its record.
    pub fn run_episode<S: RewardSource>(&mut self, env: &mut Environment<S>) -> Result<EpisodeRecord> {
        let episode = self.s.episode;
        let epsilon = self.s.hyper.epsilon(episode);
        let lr = self.s.hyper.learning_rate(episode);
        self.s.adam.lr = lr;
        let forced = (episode == 0 && self.s.hyper.seed_with_baseline).then(|| alto_default_plan(&self.s.budget));

        let mut s = StateMatrix::initial(&self.s.budget);
        let mut memory: Vec<Transition> = Vec::with_capacity(s.cols());
        let mut losses = Vec::new();
        let mut terminal = None;
        for t in 0..s.cols() {
            let a = match &forced {
                Some(plan) => plan.picks()[t],
                None => select_action(&s, epsilon, &self.s.policy, &mut self.s.rng)?,
            };
            let step = self.filter_execute_action(a, &s, env)?;
            memory.push(Transition {
                state: s,
                action: a,
                reward: step.reward,
                next: step.next.clone(),
                terminal: step.next.is_terminal(),
                imagined: step.kind == Some(ActionKind::Imagined),
            });
            if let Some(loss) = self.learn()? {
                losses.push(loss);
            }
            if let Some(kind) = step.kind {
                terminal = Some((kind, step.reward));
            }
            s = step.next;
        }
        let (kind, speedup) = terminal.expect("episode ends in a terminal state");
        let plan = s.to_plan()?;

        self.s.counts.bump(kind);
        self.s.episode += 1;
        if self.s.episode.is_multiple_of(self.s.hyper.target_update.max(1)) {
            self.s.target = self.s.policy.clone();
        }
        if kind != ActionKind::Imagined && self.s.best.as_ref().is_none_or(|b| speedup > b.speedup) {
            self.s.best = Some(BestEncoding { plan: plan.clone(), speedup, episode });
        }
        let imagined = kind == ActionKind::Imagined;
        shape_rewards(&mut memory, speedup)?;
        for mut t in memory {
            t.imagined = imagined;
            self.s.replay.push(t);
        }

        // imagined rewards need an open gate, which needs measured samples
        let best = self.s.best.clone().expect("a measured episode precedes any imagined one");
        Ok(EpisodeRecord {
            episode,
            epsilon,
            learning_rate: lr,
            plan,
            speedup,
            kind,
            counts: self.s.counts,
            best,
            phase: self.phase(),
            model_accuracy: self.s.gate.filter(|g| g.held_out > 0).map(|g| g.accuracy),
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        })
    }

    /// Trains until `max_episodes` or until `observer` breaks. Resumes from
    /// the current episode counter, so a restored agent continues its
    /// schedules where it stopped.
    pub fn run_training<S, F>(&mut self, env: &mut Environment<S>, mut observer: F) -> Result<TrainingOutcome>
    where
        S: RewardSource,
        F: FnMut(&EpisodeRecord) -> ControlFlow<()>,
    {
        let mut truncated = false;
        while self.s.episode < self.s.hyper.max_episodes {
            let record = self.run_episode(env)?;
            if observer(&record).is_break() {
                truncated = self.s.episode < self.s.hyper.max_episodes;
                break;
            }
        }
        let best = match self.s.best.clone() {
            Some(b) => b,
            None => {
                let plan = alto_default_plan(&self.s.budget);
                let r = env.terminal_reward(&plan)?;
                BestEncoding { plan, speedup: r.speedup, episode: self.s.episode }
            }
        };
        Ok(TrainingOutcome { best, episodes: self.s.episode, truncated, counts: self.s.counts })
    }
}

/// Convenience: builds an agent and trains it to completion.
pub fn run_training<S: RewardSource>(env: &mut Environment<S>, hyper: Hyperparameters) -> Result<TrainingOutcome> {
    let mut agent = Agent::new(env.budget().clone(), hyper)?;
    agent.run_training(env, |_| ControlFlow::Continue(()))
}
