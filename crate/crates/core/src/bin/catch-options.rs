//! Command-line entry point for training, sweeping, evaluating, and
//! plotting the Catch DQN experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use catch_options::checkpoint::Checkpoint;
use catch_options::env::{
    optimal_action, optimal_episode_score, render, write_pgm, BallType, CatchEnv, TransferMode,
};
use catch_options::harness::config::{RoutingSource, RunConfig};
use catch_options::harness::output::{emit_run_dir, parse_run_csv, write_svg};
use catch_options::harness::run::{run_with, validate, AggregateCurve};
use catch_options::harness::sweep::{sweep, SweepGrid};
use catch_options::harness::evaluate_policy;
use catch_options::AgentVariant;

#[derive(Parser)]
#[command(name = "catch-options", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training configuration and write its results directory.
    Train(TrainArgs),
    /// Run a hyperparameter grid; resumes if interrupted.
    Sweep(SweepArgs),
    /// Evaluate a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Print the brute-force optimal per-episode scores.
    OracleCheck,
    /// Render learning-curve CSVs into one SVG.
    Plot(PlotArgs),
    /// Dump every frame of one episode as PGM images.
    DumpEpisode(DumpArgs),
}

/// CLI overrides for RunConfig fields; unset flags keep the config file's
/// (or default) values.
#[derive(Args, Clone)]
struct ConfigOverrides {
    /// TOML config file mirroring the run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// standard | half | option-heads
    #[arg(long)]
    variant: Option<String>,
    /// Standard-DQN hidden units: 16, 32, or 64.
    #[arg(long)]
    capacity: Option<usize>,
    /// Option-head count (option-heads variant only).
    #[arg(long)]
    heads: Option<usize>,
    /// positive | negative
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    sync_period: Option<u64>,
    #[arg(long)]
    train_period: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps_final: Option<f64>,
    #[arg(long)]
    eps_anneal: Option<u64>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    steps_per_epoch: Option<u64>,
    #[arg(long)]
    validation_steps: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    /// oracle | classifier
    #[arg(long)]
    routing: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    fn build(&self) -> Result<RunConfig, String> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
            None => RunConfig::default(),
        };
        if self.variant.is_some() || self.capacity.is_some() || self.heads.is_some() {
            let name = self
                .variant
                .clone()
                .unwrap_or_else(|| c.variant.name().to_string());
            let capacity = self.capacity.unwrap_or_else(|| c.variant.capacity());
            c.variant = match name.as_str() {
                "standard" => AgentVariant::Standard { capacity },
                "half" => AgentVariant::Half { capacity },
                "option-heads" => AgentVariant::OptionHeads {
                    capacity,
                    heads: self.heads.unwrap_or_else(|| c.variant.head_count().max(2)),
                },
                other => return Err(format!("unknown variant {other:?}")),
            };
        }
        if let Some(mode) = &self.mode {
            c.mode = parse_mode(mode)?;
        }
        if let Some(routing) = &self.routing {
            c.routing = parse_routing(routing)?;
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$field = v.into(); })*
            };
        }
        set!(
            seed, epochs, sync_period, train_period, batch_size, gamma, eps_final, eps_anneal,
            warmup_steps, steps_per_epoch, validation_steps, replay_capacity
        );
        if let Some(lr) = self.learning_rate {
            c.learning_rate = Some(lr);
        }
        if let Some(dir) = &self.out_dir {
            c.out_dir = Some(dir.clone());
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

fn parse_mode(name: &str) -> Result<TransferMode, String> {
    match name {
        "positive" => Ok(TransferMode::Positive),
        "negative" => Ok(TransferMode::Negative),
        other => Err(format!("unknown mode {other:?}")),
    }
}

fn parse_routing(name: &str) -> Result<RoutingSource, String> {
    match name {
        "oracle" => Ok(RoutingSource::Oracle),
        "classifier" => Ok(RoutingSource::Classifier),
        other => Err(format!("unknown routing {other:?}")),
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with the search sets (learning_rate, sync_period, ...).
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// oracle | classifier; defaults to the checkpoint's setting.
    #[arg(long)]
    routing: Option<String>,
    #[arg(long, default_value_t = 6_000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    /// run.csv (epoch,avg_score) or aggregate.csv (epoch,mean,std) files.
    csvs: Vec<PathBuf>,
    #[arg(long, default_value = "curves.svg")]
    out: PathBuf,
    #[arg(long, default_value = "Catch learning curves")]
    title: String,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, default_value = "episode-frames")]
    out_dir: PathBuf,
    /// positive | negative
    #[arg(long, default_value = "positive")]
    mode: String,
    /// white | grey
    #[arg(long, default_value = "white")]
    ball: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Evaluate(args) => evaluate(args),
        Command::OracleCheck => oracle_check(),
        Command::Plot(args) => plot(args),
        Command::DumpEpisode(args) => dump_episode(args),
    }
}

fn train(args: TrainArgs) -> Result<(), String> {
    let config = args.overrides.build()?;
    let out_dir = config.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from("results")
            .join(config.cell_name())
            .join(format!("seed{}", config.seed))
    });
    println!(
        "training {} / {} / capacity {} / seed {} -> {}",
        config.variant.name(),
        config.mode.name(),
        config.variant.capacity(),
        config.seed,
        out_dir.display()
    );
    let outcome = run_with(&config, &mut |record| {
        match record.supervisor_accuracy {
            Some(acc) => println!(
                "epoch {:3}  avg_score {:+.4}  supervisor_acc {:.4}  ({:.1}s)",
                record.epoch, record.avg_score, acc, record.duration_secs
            ),
            None => println!(
                "epoch {:3}  avg_score {:+.4}  ({:.1}s)",
                record.epoch, record.avg_score, record.duration_secs
            ),
        }
    })
    .map_err(|e| e.to_string())?;
    emit_run_dir(&out_dir, &config, &outcome.records).map_err(|e| e.to_string())?;
    Checkpoint::from_run(&config, &outcome.agent, outcome.supervisor.as_ref())
        .save(&out_dir.join("checkpoint.json"))
        .map_err(|e| e.to_string())?;
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<(), String> {
    let config = args.overrides.build()?;
    let grid = SweepGrid::load(&args.grid).map_err(|e| e.to_string())?;
    let out_dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("sweep-results"));
    let report = sweep(&config, &grid, &out_dir).map_err(|e| e.to_string())?;
    println!(
        "sweep done: {} completed, {} skipped (already present), {} failed",
        report.completed.len(),
        report.skipped.len(),
        report.failed.len()
    );
    for (dir, err) in &report.failed {
        println!("  FAILED {}: {err}", dir.display());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), String> {
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(|e| e.to_string())?;
    let (agent, supervisor) = ckpt.restore().map_err(|e| e.to_string())?;
    let routing = match &args.routing {
        Some(r) => parse_routing(r)?,
        None => ckpt.config.routing,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let score = validate(
        &agent,
        supervisor.as_ref(),
        routing,
        ckpt.config.mode,
        args.steps,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    println!(
        "checkpoint {} ({}, {}): avg score/episode {} over {} episodes",
        args.checkpoint.display(),
        ckpt.config.variant.name(),
        ckpt.config.mode.name(),
        score,
        args.steps / 24
    );
    Ok(())
}

fn oracle_check() -> Result<(), String> {
    let positive = optimal_episode_score(TransferMode::Positive);
    let negative = optimal_episode_score(TransferMode::Negative);
    println!("optimal score per episode, positive transfer: {positive}");
    println!("optimal score per episode, negative transfer: {negative}");

    // Cross-check via the evaluation pipeline with the hand-coded policy.
    for (mode, expect) in [
        (TransferMode::Positive, positive),
        (TransferMode::Negative, negative),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let score = evaluate_policy(mode, 6_000, &mut rng, |s, _| Ok(optimal_action(s)))
            .map_err(|e| e.to_string())?;
        println!(
            "hand-coded greedy policy, {} transfer, 250 episodes: {score} ({})",
            mode.name(),
            if score == expect { "matches" } else { "MISMATCH" }
        );
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), String> {
    if args.csvs.is_empty() {
        return Err("no CSV files given".into());
    }
    let mut curves = Vec::new();
    for path in &args.csvs {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let curve = if text.starts_with("epoch,mean,std") {
            let mut mean = Vec::new();
            let mut std = Vec::new();
            for line in text.lines().skip(1) {
                let mut parts = line.split(',');
                let _epoch = parts.next();
                mean.push(
                    parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| format!("{}: bad line {line:?}", path.display()))?,
                );
                std.push(
                    parts
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| format!("{}: bad line {line:?}", path.display()))?,
                );
            }
            AggregateCurve {
                mean,
                std,
                seeds: 1,
            }
        } else {
            let parsed = parse_run_csv(&text).map_err(|e| e.to_string())?;
            AggregateCurve {
                mean: parsed.iter().map(|(_, s)| *s).collect(),
                std: vec![0.0; parsed.len()],
                seeds: 1,
            }
        };
        let label = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        curves.push((label, curve));
    }
    write_svg(&args.out, &curves, &args.title).map_err(|e| e.to_string())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn dump_episode(args: DumpArgs) -> Result<(), String> {
    let mode = parse_mode(&args.mode)?;
    let ball = match args.ball.as_str() {
        "white" => BallType::White,
        "grey" => BallType::Grey,
        other => return Err(format!("unknown ball {other:?}")),
    };
    std::fs::create_dir_all(&args.out_dir).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let episode_index = match ball {
        BallType::White => 0,
        BallType::Grey => 1,
    };
    let mut env = CatchEnv::reset(mode, episode_index, &mut rng);
    let mut step = 0usize;
    write_pgm(&render(&env.state), &args.out_dir.join(format!("step_{step:02}.pgm")))
        .map_err(|e| e.to_string())?;
    loop {
        let action = optimal_action(&env.state);
        let r = env.step(action).map_err(|e| e.to_string())?;
        step += 1;
        write_pgm(
            &render(&env.state),
            &args.out_dir.join(format!("step_{step:02}.pgm")),
        )
        .map_err(|e| e.to_string())?;
        if r.terminal {
            println!(
                "episode done: {} ball, reward {}, frames in {}",
                args.ball,
                r.reward,
                args.out_dir.display()
            );
            break;
        }
    }
    Ok(())
}
