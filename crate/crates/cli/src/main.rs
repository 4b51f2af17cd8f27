use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nodegen::config::{Overrides, RunConfig, PROFILES};
use nodegen::{cmd_bench, cmd_evolve, cmd_seed, exit, CliError};
use nodegen_core::evolution::RunOutcome;

#[derive(Debug, Parser)]
#[command(name = "nodegen", version, about = "Generative optimizer for connecting-nodes planar antennas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for candidate evaluation and benchmark jobs.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluator name (`surrogate` or `command`).
    #[arg(long, global = true)]
    evaluator: Option<String>,
    /// Evaluation budget; overrides `evolution.budget`.
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the random seed population and draw its gallery.
    Seed,
    /// Run the full generative optimization.
    Evolve,
    /// Compare the optimizer with the classical baselines.
    Bench,
    /// Print a starting config for a profile.
    Init {
        #[arg(default_value = "example1_desk", value_parser = clap::builder::PossibleValuesParser::new(PROFILES))]
        profile: String,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--parallel: {e}")))?;
    }
    if let Command::Init { profile } = &cli.command {
        print!("{}", RunConfig::template(profile)?);
        return Ok(exit::SUCCESS);
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let ov = Overrides {
        seed: cli.seed,
        out: cli.out,
        evaluator: cli.evaluator,
        budget: cli.budget,
    };
    let cfg = RunConfig::load(&path, &ov)?;
    match cli.command {
        Command::Seed => {
            let outcome = cmd_seed(&cfg)?;
            println!("seed: wrote {}", cfg.out.display());
            Ok(if outcome == Some(RunOutcome::BudgetExhausted) { exit::BUDGET_EXHAUSTED } else { exit::SUCCESS })
        }
        Command::Evolve => {
            let s = cmd_evolve(&cfg)?;
            println!(
                "evolve: {:?} after {} evolutions, {} evaluations, {} goal-meeting designs, best score {}",
                s.outcome,
                s.evolutions,
                s.evaluations,
                s.goal_met,
                s.best_score.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
            Ok(match s.outcome {
                RunOutcome::GoalMet => exit::SUCCESS,
                RunOutcome::BudgetExhausted => exit::BUDGET_EXHAUSTED,
                RunOutcome::MaxEvolutions => exit::EVOLUTIONS_EXHAUSTED,
            })
        }
        Command::Bench => {
            let report = cmd_bench(&cfg)?;
            println!("bench: evaluator {} digest {}", report.evaluator, report.digest);
            let mut methods: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
            methods.dedup();
            for m in methods {
                let med = report.median_evals(m).unwrap_or(f64::NAN);
                let shown = if med.is_finite() { format!("{med}") } else { format!(">{}", report.budget) };
                println!("  {m:<14} median evals to goal {shown}");
            }
            Ok(exit::SUCCESS)
        }
        Command::Init { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
