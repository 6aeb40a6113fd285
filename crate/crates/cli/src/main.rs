use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pser::{BoundVariant, DecayScheme, InitialPriority, Mode, Strategy};
use pser_cli::bench::{bench, BenchArgs};
use pser_cli::config::{parse_seeds, SweepConfig, SweepOverrides};
use pser_cli::sweep::cliffwalk;
use pser_cli::theory_cmd::{theory, to_jsonl, TheoryArgs};
use pser_cli::HarnessError;

/// Prioritized sequence replay experiments on the Blind Cliffwalk.
#[derive(Parser)]
#[command(name = "pser", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a strategy x seed sweep and write traces, aggregate and manifest.
    Cliffwalk(CliffwalkCmd),
    /// Print closed-form expected steps (and optional Monte-Carlo) as JSON lines.
    Theory(TheoryCmd),
    /// Benchmark the replay buffer and check its invariants.
    Bench(BenchCmd),
}

#[derive(Args)]
struct CliffwalkCmd {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Comma-separated: uniform,oracle,per,pser.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// `0..10`, `0..=9` or `1,5,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_enum)]
    init_priority: Option<InitArg>,
    #[arg(long)]
    rho: Option<f64>,
    /// Decay window; 0 disables backward decay.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    mse_every: Option<u64>,
    #[arg(long)]
    convergence_tol: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryCmd {
    #[arg(long, default_value_t = 1)]
    n_min: u32,
    #[arg(long, default_value_t = 16)]
    n_max: u32,
    /// Comma-separated decay coefficients.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    rho: Vec<f64>,
    #[arg(long, value_enum, default_value = "main-text")]
    variant: VariantArg,
    /// Monte-Carlo trials per row; 0 prints closed forms only.
    #[arg(long, default_value_t = 0)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Strategy simulated by the Monte-Carlo runs.
    #[arg(long, default_value = "pser")]
    strategy: Strategy,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, default_value_t = 1 << 16)]
    capacity: usize,
    #[arg(long, default_value_t = 1_000_000)]
    ops: u64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draws for the sampling goodness-of-fit check.
    #[arg(long, default_value_t = 1_000_000)]
    gof_draws: u64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Theorem,
    AppendixB,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum InitArg {
    Max,
    Epsilon,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchemeArg {
    Max,
    Add,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    MainText,
    Appendix,
}

impl CliffwalkCmd {
    fn overrides(self) -> Result<SweepOverrides, HarnessError> {
        let seeds = self.seeds.as_deref().map(parse_seeds).transpose().map_err(HarnessError::Config)?;
        Ok(SweepOverrides {
            n: self.n,
            gamma: self.gamma,
            mode: self.mode.map(|m| match m {
                ModeArg::Theorem => Mode::Theorem,
                ModeArg::AppendixB => Mode::AppendixB,
            }),
            strategies: self.strategies,
            seeds,
            init_priority: self.init_priority.map(|i| match i {
                InitArg::Max => InitialPriority::Max,
                InitArg::Epsilon => InitialPriority::Epsilon,
            }),
            rho: self.rho,
            window: self.window,
            eta: self.eta,
            epsilon: self.epsilon,
            alpha: self.alpha,
            beta: self.beta,
            scheme: self.scheme.map(|s| match s {
                SchemeArg::Max => DecayScheme::Max,
                SchemeArg::Add => DecayScheme::Add,
            }),
            step_size: self.step_size,
            max_iterations: self.max_iterations,
            mse_every: self.mse_every,
            convergence_tol: self.convergence_tol,
            output_dir: self.output_dir,
        })
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Cliffwalk(cmd) => {
            let file = match &cmd.config {
                Some(p) => SweepOverrides::from_file(p)?,
                None => SweepOverrides::default(),
            };
            let cfg = SweepConfig::resolve(file.merge(cmd.overrides()?))?;
            log::info!("config hash {}", cfg.hash()?);
            let results = cliffwalk(&cfg)?;
            log::info!("{} runs written to {}", results.len(), cfg.output_dir.display());
        }
        Command::Theory(cmd) => {
            let args = TheoryArgs {
                n_min: cmd.n_min,
                n_max: cmd.n_max,
                rhos: cmd.rho,
                variant: match cmd.variant {
                    VariantArg::MainText => BoundVariant::MainText,
                    VariantArg::Appendix => BoundVariant::Appendix,
                },
                trials: cmd.trials,
                seed: cmd.seed,
                strategy: cmd.strategy,
            };
            print!("{}", to_jsonl(&theory(&args)?)?);
        }
        Command::Bench(cmd) => {
            let args = BenchArgs {
                capacity: cmd.capacity,
                ops: cmd.ops,
                batch: cmd.batch,
                alpha: cmd.alpha,
                beta: cmd.beta,
                seed: cmd.seed,
                gof_draws: cmd.gof_draws,
            };
            println!("{}", serde_json::to_string(&bench(&args)?)?);
        }
    }
    Ok(())
}

fn init_pool(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("building the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PSER_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = init_pool(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
