use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pitlane::env::discrete_to_control;
use pitlane::harness::{
    eval_seed, evaluate_trainer, human_bench, read_recordings, restore_trainer, run_training, Checkpoint, RunConfig,
    RunDir, Trainer,
};
use pitlane::observe::{AgentEnv, ObsMode};

#[derive(Debug, Parser)]
#[command(name = "pitlane", version, about = "Top-down racing simulator with DQN and PPO learners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Dqn,
    Ppo,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObsArg {
    Pixel,
    Features,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActionArg {
    Discrete,
    Continuous,
}

/// Config file plus command-line overrides. Flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run config; missing keys take the committed defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    #[arg(long, value_enum)]
    pub obs: Option<ObsArg>,
    #[arg(long, value_enum)]
    pub action: Option<ActionArg>,
    /// Total agent steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Any config key, dotted: `--set dqn.batch_size=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        self.resolve_with(None)
    }

    /// Like `resolve`, reading `fallback` when no `--config` was given.
    pub fn resolve_with(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        let path = self.config.as_deref().or(fallback);
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        let flag = |v: &dyn std::fmt::Debug| format!("{v:?}").to_lowercase();
        if let Some(a) = self.algo {
            table.insert("algorithm".into(), toml::Value::String(flag(&a)));
        }
        if let Some(o) = self.obs {
            table.insert("obs_mode".into(), toml::Value::String(flag(&o)));
        }
        if let Some(a) = self.action {
            table.insert("action_mode".into(), toml::Value::String(flag(&a)));
        }
        if let Some(s) = self.seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        if let Some(s) = self.steps {
            table.insert("total_steps".into(), toml::Value::Integer(s as i64));
        }
        for kv in &self.set {
            apply_override(&mut table, kv)?;
        }
        let cfg = RunConfig::from_toml(&toml::to_string(&table)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_override(table: &mut toml::Table, kv: &str) -> Result<()> {
    let Some((key, raw)) = kv.split_once('=') else {
        bail!("--set expects KEY=VALUE, got {kv:?}");
    };
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            _ => bail!("--set {key}: {p} is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a learner; metrics and checkpoints go to the run directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (default: runs/<algo>-seed<N>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a checkpoint file, or from the newest one in --out with `latest`.
        #[arg(long)]
        resume: Option<String>,
    },
    /// Score a checkpoint with the greedy policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config the checkpoint was trained with (default: the run directory's config.toml).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Track seed (default: the run's evaluation seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve the cockpit WebSocket protocol and the leaderboard.
    PlayServe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Checkpoint driven in agent mode.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "leaderboard.jsonl")]
        leaderboard: PathBuf,
        /// Where finished human episodes are recorded for the bench.
        #[arg(long, default_value = "recordings.jsonl")]
        recordings: PathBuf,
        /// Run directories whose eval_summary.json the leaderboard exposes.
        #[arg(long = "run")]
        runs: Vec<PathBuf>,
    },
    /// Replay recorded human episodes headlessly and add them to the leaderboard.
    HumanBench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        recordings: PathBuf,
        #[arg(long, default_value = "human")]
        label: String,
        #[arg(long, default_value = "leaderboard.jsonl")]
        leaderboard: PathBuf,
    },
    /// Write raw frames (PNG) and processed stacks (f32 little-endian) for fixtures.
    DumpObs {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Agent steps to record after reset.
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// Discrete action held throughout (0 noop, 1 left, 2 right, 3 gas, 4 brake).
        #[arg(long, default_value_t = 3)]
        hold: usize,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, resume } => train(cfg, out, resume),
        Command::Eval {
            checkpoint,
            config,
            episodes,
            seed,
            json,
        } => eval(&checkpoint, config.as_deref(), episodes, seed, json),
        Command::PlayServe {
            cfg,
            bind,
            port,
            checkpoint,
            leaderboard,
            recordings,
            runs,
        } => {
            let run_cfg = cfg.resolve()?;
            let agent = match checkpoint {
                Some(path) => Some(load_trainer(&path, None)?),
                None => None,
            };
            let settings = crate::server::ServerSettings {
                config: run_cfg,
                agent,
                leaderboard,
                recordings: Some(recordings),
                runs,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .with_context(|| format!("binding {bind}:{port}"))?;
                eprintln!("serving on ws://{}/ws", listener.local_addr()?);
                crate::server::serve(listener, settings).await
            })
        }
        Command::HumanBench {
            cfg,
            recordings,
            label,
            leaderboard,
        } => {
            let run_cfg = cfg.resolve()?;
            let recs = read_recordings(&recordings)?;
            let bench = human_bench(&run_cfg.env, &recs, &label, Some(&leaderboard))?;
            println!("episodes: {}", bench.scores.len());
            println!("mean:     {:.2}", bench.mean);
            println!("reference human average: {:.0}", bench.reference);
            Ok(())
        }
        Command::DumpObs {
            cfg,
            out,
            count,
            hold,
        } => dump_obs(&cfg.resolve()?, &out, count, hold),
    }
}

fn train(args: ConfigArgs, out: Option<PathBuf>, resume: Option<String>) -> Result<()> {
    let out_given = out.clone();
    let fallback = match (&resume, &out_given) {
        (Some(_), Some(dir)) if args.config.is_none() => Some(dir.join("config.toml")),
        _ => None,
    };
    let cfg = args.resolve_with(fallback.as_deref())?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.algorithm.name(), cfg.seed)));
    let dir = RunDir::new(&out);
    let resume_path = match resume.as_deref() {
        None => None,
        Some("latest") => Some(
            dir.latest_checkpoint()?
                .with_context(|| format!("no checkpoints under {}", dir.checkpoints().display()))?,
        ),
        Some(p) => Some(PathBuf::from(p)),
    };
    let summary = run_training(&cfg, &dir, resume_path.as_deref())?;
    println!("run directory: {}", out.display());
    match summary {
        Some(s) => println!("{s}"),
        None => println!("no evaluation reached (total_steps below eval_period)"),
    }
    Ok(())
}

/// Config next to a checkpoint: `<run>/checkpoints/step_N.apx` → `<run>/config.toml`.
fn run_config_for(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.parent()?.join("config.toml");
    p.exists().then_some(p)
}

fn load_trainer(checkpoint: &Path, config: Option<&Path>) -> Result<Box<dyn Trainer + Send>> {
    let cfg_path = match config {
        Some(p) => p.to_path_buf(),
        None => run_config_for(checkpoint)
            .with_context(|| format!("no config.toml beside {}; pass --config", checkpoint.display()))?,
    };
    let cfg = RunConfig::load(&cfg_path)?;
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    Ok(restore_trainer(&cfg, &ckpt)?)
}

fn eval(checkpoint: &Path, config: Option<&Path>, episodes: usize, seed: Option<u64>, json: bool) -> Result<()> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let trainer = load_trainer(checkpoint, config)?;
    let seed = seed.unwrap_or_else(|| eval_seed(trainer.config().seed));
    let summary = evaluate_trainer(trainer.as_ref(), episodes, seed)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("{summary}");
    }
    Ok(())
}

fn dump_obs(cfg: &RunConfig, out: &Path, count: usize, hold: usize) -> Result<()> {
    let control = discrete_to_control(hold)?;
    std::fs::create_dir_all(out)?;
    let mut env = AgentEnv::new(cfg.env.clone(), cfg.observe.clone(), ObsMode::Pixel, cfg.seed)?;
    let mut stack = env.reset(None)?;
    let mut written = 0;
    for k in 0..=count {
        let frame = env.render();
        let size = pitlane::observe::FRAME_SIZE as u32;
        image::RgbImage::from_raw(size, size, frame.data.clone())
            .context("raw frame has the wrong size")?
            .save(out.join(format!("frame_{k:04}.png")))?;
        let bytes: Vec<u8> = stack.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(out.join(format!("stack_{k:04}.bin")), bytes)?;
        written += 1;
        if k == count {
            break;
        }
        let (next, s) = env.step(control)?;
        stack = next;
        if s.done() {
            break;
        }
    }
    println!("wrote {written} observation(s) to {}", out.display());
    Ok(())
}
