//! Agent checkpoints as JSON. Every float is stored as the hex of its bit
//! pattern, so a restored agent continues bit-for-bit where it stopped.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use bitweave_core::agent::{
    ActionCounts, Agent, AgentState, BestEncoding, GateReport, Hyperparameters, Phase, PrioritizedReplay, Transition,
};
use bitweave_core::env::{RewardCache, RewardCacheEntry, StateMatrix};
use bitweave_core::linearize::{BitBudget, EncodingPlan};
use bitweave_core::nn::{Adam, LayerSpec, QNetwork, RewardModel, RewardSample, Sequential};
use bitweave_core::Rng;

pub const FORMAT_VERSION: u32 = 1;

/// Floats as concatenated 16-digit hex words.
mod hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(xs: &[f64]) -> String {
        xs.iter().map(|x| format!("{:016x}", x.to_bits())).collect()
    }

    pub fn decode(s: &str) -> Result<Vec<f64>, String> {
        if !s.len().is_multiple_of(16) || !s.is_ascii() {
            return Err(format!("hex float string of length {}", s.len()));
        }
        (0..s.len() / 16)
            .map(|i| {
                u64::from_str_radix(&s[16 * i..16 * (i + 1)], 16).map(f64::from_bits).map_err(|e| e.to_string())
            })
            .collect()
    }

    #[allow(clippy::ptr_arg)] // serde `with` passes the field by reference
    pub fn serialize<S: Serializer>(xs: &Vec<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(xs))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        decode(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod one {
        use super::*;

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&encode(&[*x]))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            let v = decode(&String::deserialize(d)?).map_err(serde::de::Error::custom)?;
            match v[..] {
                [x] => Ok(x),
                _ => Err(serde::de::Error::custom("expected one hex float")),
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Layer {
    Conv3x3 { in_ch: usize, out_ch: usize, height: usize, width: usize },
    Dense { inputs: usize, outputs: usize },
    Relu { len: usize },
}

#[derive(Serialize, Deserialize)]
struct Network {
    layers: Vec<Layer>,
    #[serde(with = "hex")]
    params: Vec<f64>,
}

impl Network {
    fn save(net: &Sequential) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv3x3 { in_ch, out_ch, height, width } => Layer::Conv3x3 { in_ch, out_ch, height, width },
                LayerSpec::Dense { inputs, outputs } => Layer::Dense { inputs, outputs },
                LayerSpec::Relu { len } => Layer::Relu { len },
            })
            .collect();
        Self { layers, params: net.params().to_vec() }
    }

    fn load(self) -> anyhow::Result<Sequential> {
        let layers = self
            .layers
            .into_iter()
            .map(|l| match l {
                Layer::Conv3x3 { in_ch, out_ch, height, width } => LayerSpec::Conv3x3 { in_ch, out_ch, height, width },
                Layer::Dense { inputs, outputs } => LayerSpec::Dense { inputs, outputs },
                Layer::Relu { len } => LayerSpec::Relu { len },
            })
            .collect();
        Ok(Sequential::from_parts(layers, self.params)?)
    }
}

#[derive(Serialize, Deserialize)]
struct AdamState {
    #[serde(with = "hex::one")]
    lr: f64,
    #[serde(with = "hex")]
    m: Vec<f64>,
    #[serde(with = "hex")]
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn save(a: &Adam) -> Self {
        let (m, v) = a.moments();
        Self { lr: a.lr, m: m.to_vec(), v: v.to_vec(), t: a.steps() }
    }

    fn load(self) -> Adam {
        Adam::from_state(self.lr, self.m, self.v, self.t)
    }
}

#[derive(Serialize, Deserialize)]
struct Hyper {
    #[serde(with = "hex")]
    floats: Vec<f64>,
    batch_size: Option<usize>,
    replay_capacity: usize,
    target_update: usize,
    max_episodes: usize,
    hidden_scale: usize,
    use_reward_model: bool,
    model_holdout: usize,
    model_steps: usize,
    model_batch: usize,
    seed_with_baseline: bool,
    seed: u64,
}

impl Hyper {
    fn save(h: &Hyperparameters) -> Self {
        Self {
            floats: vec![
                h.gamma,
                h.lr_initial,
                h.lr_min,
                h.epsilon_initial,
                h.epsilon_min,
                h.decay_fraction,
                h.per_alpha,
                h.per_beta_initial,
                h.per_beta_final,
                h.priority_eps,
                h.model_accuracy_threshold,
                h.model_tolerance,
                h.model_lr,
            ],
            batch_size: h.batch_size,
            replay_capacity: h.replay_capacity,
            target_update: h.target_update,
            max_episodes: h.max_episodes,
            hidden_scale: h.hidden_scale,
            use_reward_model: h.use_reward_model,
            model_holdout: h.model_holdout,
            model_steps: h.model_steps,
            model_batch: h.model_batch,
            seed_with_baseline: h.seed_with_baseline,
            seed: h.seed,
        }
    }

    fn load(self) -> anyhow::Result<Hyperparameters> {
        let f: [f64; 13] = self.floats.try_into().map_err(|_| anyhow!("hyperparameters need 13 floats"))?;
        Ok(Hyperparameters {
            gamma: f[0],
            lr_initial: f[1],
            lr_min: f[2],
            epsilon_initial: f[3],
            epsilon_min: f[4],
            decay_fraction: f[5],
            per_alpha: f[6],
            per_beta_initial: f[7],
            per_beta_final: f[8],
            priority_eps: f[9],
            model_accuracy_threshold: f[10],
            model_tolerance: f[11],
            model_lr: f[12],
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            target_update: self.target_update,
            max_episodes: self.max_episodes,
            hidden_scale: self.hidden_scale,
            use_reward_model: self.use_reward_model,
            model_holdout: self.model_holdout,
            model_steps: self.model_steps,
            model_batch: self.model_batch,
            seed_with_baseline: self.seed_with_baseline,
            seed: self.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Step {
    state: Vec<usize>,
    action: usize,
    #[serde(with = "hex::one")]
    reward: f64,
    next: Vec<usize>,
    terminal: bool,
    imagined: bool,
}

#[derive(Serialize, Deserialize)]
struct Replay {
    capacity: usize,
    #[serde(with = "hex::one")]
    alpha: f64,
    #[serde(with = "hex::one")]
    priority_eps: f64,
    tree_capacity: usize,
    cursor: usize,
    #[serde(with = "hex::one")]
    max_priority: f64,
    #[serde(with = "hex")]
    leaves: Vec<f64>,
    steps: Vec<Step>,
}

#[derive(Serialize, Deserialize)]
struct Sample {
    #[serde(with = "hex")]
    image: Vec<f64>,
    #[serde(with = "hex::one")]
    log_speedup: f64,
}

#[derive(Serialize, Deserialize)]
struct Gate {
    gated: bool,
    #[serde(with = "hex::one")]
    accuracy: f64,
    #[serde(with = "hex::one")]
    margin: f64,
    held_out: usize,
}

#[derive(Serialize, Deserialize)]
struct Best {
    plan: String,
    #[serde(with = "hex::one")]
    speedup: f64,
    episode: usize,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// 128-bit word position as decimal text.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    plan: String,
    #[serde(with = "hex::one")]
    speedup: f64,
    #[serde(with = "hex::one")]
    seconds: f64,
    timed_out: bool,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    budget: Vec<u32>,
    hyper: Hyper,
    episode: usize,
    policy: Network,
    target: Network,
    adam: AdamState,
    reward_model: Network,
    model_adam: AdamState,
    model_samples: Vec<Sample>,
    gate: Option<Gate>,
    gate_opened: Option<usize>,
    replay: Replay,
    best: Option<Best>,
    counts: [u64; 3],
    rng: RngState,
    cache: Vec<CacheRecord>,
}

fn save_rng(rng: &Rng) -> RngState {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    RngState { seed, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
}

fn load_rng(r: &RngState) -> anyhow::Result<Rng> {
    if r.seed.len() != 64 {
        bail!("rng seed must be 32 bytes");
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&r.seed[2 * i..2 * i + 2], 16)?;
    }
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(r.stream);
    rng.set_word_pos(r.word_pos.parse()?);
    Ok(rng)
}

fn save_step(t: &Transition) -> Step {
    Step {
        state: t.state.picks().to_vec(),
        action: t.action,
        reward: t.reward,
        next: t.next.picks().to_vec(),
        terminal: t.terminal,
        imagined: t.imagined,
    }
}

fn load_step(s: Step, budget: &BitBudget) -> anyhow::Result<Transition> {
    Ok(Transition {
        state: StateMatrix::from_picks(budget, &s.state)?,
        action: s.action,
        reward: s.reward,
        next: StateMatrix::from_picks(budget, &s.next)?,
        terminal: s.terminal,
        imagined: s.imagined,
    })
}

fn to_json(agent: &Agent, cache: &RewardCache) -> Checkpoint {
    let s = agent.state();
    let replay = &s.replay;
    Checkpoint {
        version: FORMAT_VERSION,
        budget: s.budget.per_mode().to_vec(),
        hyper: Hyper::save(&s.hyper),
        episode: s.episode,
        policy: Network::save(s.policy.network()),
        target: Network::save(s.target.network()),
        adam: AdamState::save(&s.adam),
        reward_model: Network::save(s.reward_model.network()),
        model_adam: AdamState::save(&s.model_adam),
        model_samples: s
            .model_samples
            .iter()
            .map(|m| Sample { image: m.image.clone(), log_speedup: m.log_speedup })
            .collect(),
        gate: s.gate.map(|g| Gate {
            gated: g.phase == Phase::ModelGated,
            accuracy: g.accuracy,
            margin: g.margin,
            held_out: g.held_out,
        }),
        gate_opened: s.gate_opened,
        replay: Replay {
            capacity: replay.capacity(),
            alpha: replay.alpha(),
            priority_eps: replay.priority_eps(),
            tree_capacity: replay.tree_capacity(),
            cursor: replay.cursor(),
            max_priority: replay.max_priority(),
            leaves: (0..replay.len()).map(|i| replay.leaf(i)).collect(),
            steps: replay.iter().map(save_step).collect(),
        },
        best: s.best.as_ref().map(|b| Best { plan: b.plan.to_text(), speedup: b.speedup, episode: b.episode }),
        counts: [s.counts.real, s.counts.cached, s.counts.imagined],
        rng: save_rng(&s.rng),
        cache: cache
            .iter()
            .map(|(k, e)| CacheRecord { plan: k.to_string(), speedup: e.speedup, seconds: e.seconds, timed_out: e.timed_out })
            .collect(),
    }
}

fn from_json(c: Checkpoint) -> anyhow::Result<(Agent, RewardCache)> {
    if c.version != FORMAT_VERSION {
        bail!("checkpoint version {} (expected {FORMAT_VERSION})", c.version);
    }
    let budget = BitBudget::from_bits(c.budget);
    let rows = budget.order();
    let cols = budget.total() as usize;
    let r = c.replay;
    let steps = r.steps.into_iter().map(|s| load_step(s, &budget)).collect::<anyhow::Result<Vec<_>>>()?;
    let replay = PrioritizedReplay::from_parts(
        r.capacity,
        r.alpha,
        r.priority_eps,
        steps,
        &r.leaves,
        r.tree_capacity,
        r.cursor,
        r.max_priority,
    )
    .ok_or_else(|| anyhow!("inconsistent replay buffer"))?;
    let best = match c.best {
        Some(b) => Some(BestEncoding { plan: EncodingPlan::parse(&b.plan, &budget)?, speedup: b.speedup, episode: b.episode }),
        None => None,
    };
    let state = AgentState {
        hyper: c.hyper.load()?,
        episode: c.episode,
        policy: QNetwork::with_network(c.policy.load()?, rows, cols)?,
        target: QNetwork::with_network(c.target.load()?, rows, cols)?,
        adam: c.adam.load(),
        reward_model: RewardModel::from_network(c.reward_model.load()?)?,
        model_adam: c.model_adam.load(),
        model_samples: c
            .model_samples
            .into_iter()
            .map(|s| RewardSample { image: s.image, log_speedup: s.log_speedup })
            .collect(),
        gate: c.gate.map(|g| GateReport {
            phase: if g.gated { Phase::ModelGated } else { Phase::Exploration },
            accuracy: g.accuracy,
            margin: g.margin,
            held_out: g.held_out,
        }),
        gate_opened: c.gate_opened,
        replay,
        best,
        counts: ActionCounts { real: c.counts[0], cached: c.counts[1], imagined: c.counts[2] },
        rng: load_rng(&c.rng)?,
        budget,
    };
    let mut cache = RewardCache::new();
    for e in c.cache {
        cache.insert_key(e.plan, RewardCacheEntry { speedup: e.speedup, seconds: e.seconds, timed_out: e.timed_out });
    }
    Ok((Agent::from_state(state), cache))
}

pub fn save_checkpoint(agent: &Agent, cache: &RewardCache, path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string(&to_json(agent, cache))?;
    // write then rename, so an interrupted save never clobbers the last one
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).with_context(|| format!("{}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("{}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> anyhow::Result<(Agent, RewardCache)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let c: Checkpoint = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    from_json(c).with_context(|| format!("{}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_floats_are_exact() {
        let xs = vec![0.1, -0.0, f64::INFINITY, f64::MIN_POSITIVE, 1e308, -3.5];
        let back = hex::decode(&hex::encode(&xs)).unwrap();
        assert_eq!(
            xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(hex::decode("123").is_err());
        assert!(hex::decode("zzzzzzzzzzzzzzzz").is_err());
    }

    #[test]
    fn rng_resumes_mid_stream() {
        use rand::Rng as _;
        let mut rng = bitweave_core::seeded_rng(42);
        for _ in 0..37 {
            rng.gen::<u32>();
        }
        let mut copy = load_rng(&save_rng(&rng)).unwrap();
        for _ in 0..100 {
            assert_eq!(rng.gen::<u64>(), copy.gen::<u64>());
        }
    }
}
