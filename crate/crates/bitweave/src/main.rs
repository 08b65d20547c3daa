use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use bitweave::bench::{benchmark, BenchConfig, BenchResult, MttkrpReward, WallTimer, DEFAULT_SEED};
use bitweave::cache::load_cache;
use bitweave::checkpoint::load_checkpoint;
use bitweave::frostt::{load_frostt, write_frostt};
use bitweave::train::{train, TrainOptions};
use bitweave::transport::{RemoteReward, Server, ServerInfo};
use bitweave_core::agent::{Agent, Hyperparameters, TrainingOutcome};
use bitweave_core::env::{Environment, RewardSource};
use bitweave_core::linearize::{alto_default_plan, linearize, BitBudget, EncodingPlan};
use bitweave_core::seeded_rng;
use bitweave_core::synthetic::{skewed_tensor, MatchReward};
use bitweave_core::tensor::SparseTensorCoo;

#[derive(Parser)]
#[command(name = "bitweave", version, about = "Learn bit-interleaved encodings for sparse tensors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print shape, density, and encoding-space size of a tensor.
    Inspect {
        path: PathBuf,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Time all-modes MTTKRP under one plan.
    Bench {
        path: PathBuf,
        #[arg(long, conflicts_with = "alto")]
        plan: Option<String>,
        /// Use the ALTO plan (the default when no plan is given).
        #[arg(long)]
        alto: bool,
        /// Also time this plan and print the speedup of the first over it.
        #[arg(long)]
        compare: Option<String>,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Run the evaluation service for one tensor.
    Serve {
        path: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Name clients must use for this tensor; defaults to the file stem.
        #[arg(long)]
        tensor_id: Option<String>,
        /// Reward cache file, loaded at start and rewritten after each
        /// connection.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Train the agent against a local tensor, a remote server, or a
    /// synthetic reward.
    Train(TrainArgs),
    /// Compare a learned plan against a baseline; prints CSV.
    Eval {
        path: PathBuf,
        #[arg(long)]
        plan: String,
        /// `alto` or a plan.
        #[arg(long, default_value = "alto")]
        baseline: String,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Write a random tensor with power-law skewed indices.
    Generate {
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long)]
        nnz: usize,
        #[arg(long, default_value_t = 2.0)]
        skew: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone)]
struct BenchArgs {
    #[arg(long, default_value_t = 16)]
    rank: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 8.0)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Mode lengths, overriding the per-mode maximum index in the file.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

impl BenchArgs {
    fn config(&self) -> BenchConfig {
        let d = BenchConfig::default();
        BenchConfig {
            rank: self.rank,
            repeats: self.repeats,
            warmup: self.warmup,
            threads: self.threads.unwrap_or(d.threads),
            rho: self.rho,
            seed: self.seed,
            timeout: None,
        }
    }

    fn load(&self, path: &Path) -> anyhow::Result<SparseTensorCoo> {
        Ok(load_frostt(path, self.dims.as_deref())?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Tensor file to benchmark locally.
    #[arg(required_unless_present_any = ["endpoint", "synthetic"])]
    path: Option<PathBuf>,
    /// Evaluation server, host:port.
    #[arg(long, conflicts_with_all = ["path", "synthetic"])]
    endpoint: Option<String>,
    /// Per-mode bit counts of a synthetic problem whose reward is
    /// `exp(matches / ℓ(p))` against `--hidden`.
    #[arg(long, value_delimiter = ',', conflicts_with = "path")]
    synthetic: Option<Vec<u32>>,
    /// Hidden optimum of the synthetic problem; defaults to the
    /// reverse of the ALTO plan.
    #[arg(long, requires = "synthetic")]
    hidden: Option<String>,
    #[arg(long)]
    max_hours: Option<f64>,
    /// Resumed from when it exists, written during and after training.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    checkpoint_every: usize,
    /// Per-episode JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Reward cache file shared across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    agent_seed: u64,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    epsilon_min: Option<f64>,
    #[arg(long)]
    decay_fraction: Option<f64>,
    #[arg(long)]
    target_update: Option<usize>,
    #[arg(long)]
    hidden_scale: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    no_reward_model: bool,
    /// Print one line per episode.
    #[arg(long)]
    verbose: bool,
    #[command(flatten)]
    bench: BenchArgs,
}

impl TrainArgs {
    fn hyper(&self) -> Hyperparameters {
        let d = if self.synthetic.is_some() { Hyperparameters::synthetic() } else { Hyperparameters::default() };
        Hyperparameters {
            max_episodes: self.episodes.unwrap_or(d.max_episodes),
            gamma: self.gamma.unwrap_or(d.gamma),
            lr_initial: self.lr.unwrap_or(d.lr_initial),
            lr_min: self.lr_min.unwrap_or(d.lr_min),
            epsilon_min: self.epsilon_min.unwrap_or(d.epsilon_min),
            decay_fraction: self.decay_fraction.unwrap_or(d.decay_fraction),
            target_update: self.target_update.unwrap_or(d.target_update),
            hidden_scale: self.hidden_scale.unwrap_or(d.hidden_scale),
            batch_size: self.batch_size.or(d.batch_size),
            replay_capacity: self.replay_capacity.unwrap_or(d.replay_capacity),
            use_reward_model: !self.no_reward_model,
            seed: self.agent_seed,
            ..d
        }
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            max_duration: self.max_hours.map(|h| Duration::from_secs_f64(h * 3600.0)),
            log: self.log.clone(),
            checkpoint: self.checkpoint.clone(),
            checkpoint_every: self.checkpoint_every,
            cache_file: self.cache.clone(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(e) = run(cli.cmd, &mut out) {
        // thiserror messages often embed their source already
        let mut msg = e.to_string();
        for cause in e.chain().skip(1) {
            let c = cause.to_string();
            if !msg.contains(&c) {
                msg = format!("{msg}: {c}");
            }
        }
        let msg = msg.replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}

fn run(cmd: Cmd, out: &mut impl Write) -> anyhow::Result<()> {
    match cmd {
        Cmd::Inspect { path, dims } => inspect(&load_frostt(&path, dims.as_deref())?, out),
        Cmd::Bench { path, plan, alto: _, compare, bench } => {
            let t = bench.load(&path)?;
            let b = BitBudget::from_dims(t.dims());
            let plan = parse_plan(plan.as_deref().unwrap_or("alto"), &b)?;
            let cfg = bench.config();
            let r = benchmark(&t, &plan, &cfg, &mut WallTimer)?;
            print_bench(out, &plan, &r)?;
            if let Some(other) = compare {
                let other = parse_plan(&other, &b)?;
                let r2 = benchmark(&t, &other, &cfg, &mut WallTimer)?;
                print_bench(out, &other, &r2)?;
                writeln!(out, "speedup {:.6} ({} over {})", r2.total / r.total, plan, other)?;
            }
            Ok(())
        }
        Cmd::Serve { path, listen, tensor_id, cache, bench } => serve(&path, &listen, tensor_id, cache, &bench, out),
        Cmd::Train(args) => train_cmd(&args, out),
        Cmd::Eval { path, plan, baseline, bench } => eval(&path, &plan, &baseline, &bench, out),
        Cmd::Generate { dims, nnz, skew, seed, output } => {
            if dims.is_empty() || dims.contains(&0) || nnz == 0 {
                bail!("generate needs positive dims and nnz");
            }
            let t = skewed_tensor(&dims, nnz, skew, &mut seeded_rng(seed))?;
            let f = std::fs::File::create(&output).with_context(|| output.display().to_string())?;
            write_frostt(&t, std::io::BufWriter::new(f))?;
            writeln!(out, "wrote {} nonzeros to {}", t.nnz(), output.display())?;
            Ok(())
        }
    }
}

fn parse_plan(text: &str, b: &BitBudget) -> anyhow::Result<EncodingPlan> {
    if text == "alto" {
        return Ok(alto_default_plan(b));
    }
    EncodingPlan::parse(text, b).with_context(|| format!("plan {text:?}"))
}

fn dims_text(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("×")
}

fn inspect(t: &SparseTensorCoo, out: &mut impl Write) -> anyhow::Result<()> {
    let b = BitBudget::from_dims(t.dims());
    let bits: Vec<String> = b.per_mode().iter().map(|x| x.to_string()).collect();
    writeln!(out, "dims {}", dims_text(t.dims()))?;
    writeln!(out, "nnz {}", t.nnz())?;
    writeln!(out, "density {:.3e}", t.density())?;
    writeln!(out, "bits {} ℓ(p)={}", bits.join(","), b.total())?;
    writeln!(out, "plans {}", b.count_interleavings())?;
    if b.total() > 0 {
        writeln!(out, "alto {}", alto_default_plan(&b))?;
    }
    Ok(())
}

fn print_bench(out: &mut impl Write, plan: &EncodingPlan, r: &BenchResult) -> std::io::Result<()> {
    writeln!(out, "plan {plan}")?;
    for (m, s) in r.per_mode.iter().enumerate() {
        writeln!(out, "mode {} {:.6e}s", m + 1, s)?;
    }
    writeln!(out, "total {:.6e}s", r.total)?;
    writeln!(out, "checksum {:e}", r.checksum)
}

fn serve(
    path: &Path,
    listen: &str,
    tensor_id: Option<String>,
    cache: Option<PathBuf>,
    bench: &BenchArgs,
    out: &mut impl Write,
) -> anyhow::Result<()> {
    let t = bench.load(path)?;
    let id = tensor_id.unwrap_or_else(|| path.file_stem().map_or("tensor".into(), |s| s.to_string_lossy().into_owned()));
    let cfg = bench.config();
    let info = ServerInfo {
        tensor: id.clone(),
        dims: t.dims().to_vec(),
        rank: cfg.rank,
        repeats: cfg.repeats,
        warmup: cfg.warmup,
        threads: cfg.threads,
    };
    let budget = BitBudget::from_dims(t.dims());
    let source = MttkrpReward::new(t, cfg, WallTimer)?;
    let mut env = Environment::new(source, budget);
    if let Some(p) = &cache {
        env = env.with_cache(load_cache(p)?);
    }
    let listener = TcpListener::bind(listen).with_context(|| format!("bind {listen}"))?;
    writeln!(
        out,
        "serving {id} on {} baseline {:.6e}s",
        listener.local_addr()?,
        env.baseline_seconds()
    )?;
    out.flush()?;
    let mut server = Server::new(env, info);
    loop {
        let (stream, _) = listener.accept()?;
        let flow = server.serve_connection(stream);
        if let Some(p) = &cache {
            bitweave::cache::save_cache(server.environment().cache(), p)?;
        }
        if matches!(flow, Ok(bitweave::transport::Flow::Shutdown)) {
            return Ok(());
        }
    }
}

fn train_cmd(args: &TrainArgs, out: &mut impl Write) -> anyhow::Result<()> {
    if let Some(bits) = &args.synthetic {
        let b = BitBudget::from_bits(bits.clone());
        if b.total() == 0 {
            bail!("synthetic budget has no bits");
        }
        let hidden = match &args.hidden {
            Some(h) => parse_plan(h, &b)?,
            None => {
                let mut picks = alto_default_plan(&b).picks().to_vec();
                picks.reverse();
                EncodingPlan::new(picks, &b)?
            }
        };
        writeln!(out, "hidden {hidden}")?;
        return run_agent(args, MatchReward::new(hidden), b, out);
    }
    if let Some(endpoint) = &args.endpoint {
        let remote = RemoteReward::connect(endpoint.clone()).with_context(|| endpoint.clone())?;
        let b = remote.budget().clone();
        return run_agent(args, remote, b, out);
    }
    let path = args.path.as_ref().ok_or_else(|| anyhow!("no tensor, endpoint, or synthetic budget"))?;
    let t = args.bench.load(path)?;
    let b = BitBudget::from_dims(t.dims());
    let source = MttkrpReward::new(t, args.bench.config(), WallTimer)?;
    run_agent(args, source, b, out)
}

fn run_agent<S: RewardSource>(args: &TrainArgs, source: S, budget: BitBudget, out: &mut impl Write) -> anyhow::Result<()> {
    let mut env = Environment::new(source, budget.clone());
    if let Some(p) = &args.cache {
        env = env.with_cache(load_cache(p)?);
    }
    let mut agent = match &args.checkpoint {
        Some(p) if p.exists() => {
            let (agent, cache) = load_checkpoint(p)?;
            if agent.budget() != &budget {
                bail!("checkpoint budget {:?} does not match {:?}", agent.budget().per_mode(), budget.per_mode());
            }
            if agent.hyper() != &args.hyper() {
                bail!("{} was written with different hyperparameters; rerun with the original flags", p.display());
            }
            env = env.with_cache(cache);
            writeln!(out, "resumed at episode {}", agent.episode())?;
            agent
        }
        _ => Agent::new(budget, args.hyper())?,
    };
    let verbose = args.verbose;
    let outcome: TrainingOutcome = train(&mut agent, &mut env, &args.options(), |r| {
        if verbose {
            eprintln!("episode {} eps {:.3} reward {:.4} best {:.4}", r.episode, r.epsilon, r.speedup, r.best.speedup);
        }
    })?;
    writeln!(
        out,
        "best {} speedup {:.6} episode {} episodes {} truncated {} real {} cached {} imagined {}",
        outcome.best.plan,
        outcome.best.speedup,
        outcome.best.episode,
        outcome.episodes,
        outcome.truncated,
        outcome.counts.real,
        outcome.counts.cached,
        outcome.counts.imagined
    )?;
    Ok(())
}

fn eval(path: &Path, plan: &str, baseline: &str, bench: &BenchArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let t = bench.load(path)?;
    let b = BitBudget::from_dims(t.dims());
    let learned = parse_plan(plan, &b)?;
    let base = parse_plan(baseline, &b)?;
    let cfg = bench.config();
    let name = path.file_stem().map_or("tensor".into(), |s| s.to_string_lossy().into_owned());
    let rb = benchmark(&t, &base, &cfg, &mut WallTimer)?;
    let rl = benchmark(&t, &learned, &cfg, &mut WallTimer)?;
    let bytes_b = linearize(&t, &base)?.storage_bytes();
    let bytes_l = linearize(&t, &learned)?.storage_bytes();
    writeln!(out, "tensor,role,plan,seconds,speedup,storage_bytes")?;
    writeln!(out, "{name},baseline,\"{base}\",{:.6e},{:.6},{bytes_b}", rb.total, 1.0)?;
    writeln!(out, "{name},learned,\"{learned}\",{:.6e},{:.6},{bytes_l}", rl.total, rb.total / rl.total)?;
    Ok(())
}
