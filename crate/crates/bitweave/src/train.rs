//! Training driver: wall-clock budget, per-episode JSON log, periodic
//! checkpoints, and reward-cache persistence around the core agent loop.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;

use bitweave_core::agent::{ActionKind, Agent, BestEncoding, EpisodeRecord, Phase, TrainingOutcome};
use bitweave_core::linearize::alto_default_plan;
use bitweave_core::env::{Environment, RewardSource};

use crate::cache::save_cache;
use crate::checkpoint::save_checkpoint;

/// One line of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct LogLine<'a> {
    pub episode: usize,
    pub epsilon: f64,
    pub lr: f64,
    pub plan: String,
    pub reward: f64,
    pub kind: &'a str,
    pub real: u64,
    pub cached: u64,
    pub imagined: u64,
    pub best_plan: String,
    pub best_reward: f64,
    pub best_episode: usize,
    pub phase: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl<'a> LogLine<'a> {
    pub fn new(r: &'a EpisodeRecord) -> Self {
        Self {
            episode: r.episode,
            epsilon: r.epsilon,
            lr: r.learning_rate,
            plan: r.plan.to_text(),
            reward: r.speedup,
            kind: match r.kind {
                ActionKind::Real => "real",
                ActionKind::Cached => "cached",
                ActionKind::Imagined => "imagined",
            },
            real: r.counts.real,
            cached: r.counts.cached,
            imagined: r.counts.imagined,
            best_plan: r.best.plan.to_text(),
            best_reward: r.best.speedup,
            best_episode: r.best.episode,
            phase: match r.phase {
                Phase::Exploration => "exploration",
                Phase::ModelGated => "model-gated",
            },
            model_accuracy: r.model_accuracy,
            loss: r.loss,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub max_duration: Option<Duration>,
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Episodes between checkpoint writes; the final state is always saved.
    pub checkpoint_every: usize,
    pub cache_file: Option<PathBuf>,
}

/// Trains until the agent's episode budget or the wall-clock budget runs
/// out, whichever comes first.
pub fn train<S: RewardSource>(
    agent: &mut Agent,
    env: &mut Environment<S>,
    opts: &TrainOptions,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> anyhow::Result<TrainingOutcome> {
    let start = Instant::now();
    let mut log = match &opts.log {
        Some(p) => Some(std::io::BufWriter::new(
            std::fs::OpenOptions::new().create(true).append(true).open(p)?,
        )),
        None => None,
    };
    let mut truncated = false;
    while agent.episode() < agent.hyper().max_episodes {
        let r = agent.run_episode(env)?;
        on_episode(&r);
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&LogLine::new(&r))?)?;
        }
        if opts.checkpoint_every > 0 && (r.episode + 1) % opts.checkpoint_every == 0 {
            save_all(agent, env, opts)?;
        }
        if opts.max_duration.is_some_and(|d| start.elapsed() >= d) {
            truncated = agent.episode() < agent.hyper().max_episodes;
            break;
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    save_all(agent, env, opts)?;
    let best = match agent.best() {
        Some(b) => b.clone(),
        // nothing ran (e.g. a finished checkpoint): report the baseline
        None => {
            let plan = alto_default_plan(agent.budget());
            let r = env.terminal_reward(&plan)?;
            BestEncoding { plan, speedup: r.speedup, episode: agent.episode() }
        }
    };
    Ok(TrainingOutcome { best, episodes: agent.episode(), truncated, counts: agent.counts() })
}

fn save_all<S: RewardSource>(agent: &Agent, env: &Environment<S>, opts: &TrainOptions) -> anyhow::Result<()> {
    if let Some(p) = &opts.checkpoint {
        save_checkpoint(agent, env.cache(), p)?;
    }
    if let Some(p) = &opts.cache_file {
        save_cache(env.cache(), p)?;
    }
    Ok(())
}
