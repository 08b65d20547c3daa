/// Training knobs. Defaults follow the reference configuration: γ = 0.99,
/// minibatch = ℓ(p), 1M replay slots, learning rate 1e-3 → 1e-4,
/// ε 1.0 → 0.1, target sync every 100 episodes, 5000 episodes, and a 90%
/// reward-model accuracy gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub gamma: f64,
    /// `None` uses ℓ(p).
    pub batch_size: Option<usize>,
    pub replay_capacity: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub epsilon_initial: f64,
    pub epsilon_min: f64,
    pub target_update: usize,
    pub max_episodes: usize,
    /// Share of `max_episodes` over which ε and the learning rate decay
    /// linearly before holding at their floors.
    pub decay_fraction: f64,
    pub per_alpha: f64,
    pub per_beta_initial: f64,
    pub per_beta_final: f64,
    pub priority_eps: f64,
    /// Hidden units per state cell.
    pub hidden_scale: usize,
    pub use_reward_model: bool,
    pub model_accuracy_threshold: f64,
    /// Relative error under which a held-out prediction counts as accurate.
    pub model_tolerance: f64,
    pub model_holdout: usize,
    pub model_lr: f64,
    /// Reward-model Adam steps after each real evaluation.
    pub model_steps: usize,
    pub model_batch: usize,
    /// Force the baseline plan in the first episode.
    pub seed_with_baseline: bool,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: None,
            replay_capacity: 1_000_000,
            lr_initial: 1e-3,
            lr_min: 1e-4,
            epsilon_initial: 1.0,
            epsilon_min: 0.1,
            target_update: 100,
            max_episodes: 5000,
            decay_fraction: 0.5,
            per_alpha: 0.6,
            per_beta_initial: 0.4,
            per_beta_final: 1.0,
            priority_eps: 1e-6,
            hidden_scale: 4,
            use_reward_model: true,
            model_accuracy_threshold: 0.9,
            model_tolerance: 0.1,
            model_holdout: 10,
            model_lr: 1e-3,
            model_steps: 16,
            model_batch: 16,
            seed_with_baseline: true,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    /// Settings for small noiseless oracles with a few dozen plans: 2000
    /// episodes, exploration spent in the first 5%, the target network
    /// synced every episode, and the learning rate held at 1e-3.
    pub fn synthetic() -> Self {
        Self {
            max_episodes: 2000,
            decay_fraction: 0.05,
            target_update: 1,
            lr_min: 1e-3,
            ..Self::default()
        }
    }

    fn decay_episodes(&self) -> f64 {
        (self.decay_fraction * self.max_episodes as f64).max(1.0)
    }

    fn linear(&self, start: f64, floor: f64, episode: usize) -> f64 {
        let frac = (episode as f64 / self.decay_episodes()).min(1.0);
        (start + (floor - start) * frac).max(floor.min(start))
    }

    /// Exploration rate used during `episode` (zero-based).
    pub fn epsilon(&self, episode: usize) -> f64 {
        self.linear(self.epsilon_initial, self.epsilon_min, episode)
    }

    pub fn learning_rate(&self, episode: usize) -> f64 {
        self.linear(self.lr_initial, self.lr_min, episode)
    }

    /// Importance-sampling exponent, annealed over the whole run.
    pub fn per_beta(&self, episode: usize) -> f64 {
        let frac = (episode as f64 / self.max_episodes.max(1) as f64).min(1.0);
        self.per_beta_initial + (self.per_beta_final - self.per_beta_initial) * frac
    }
}
