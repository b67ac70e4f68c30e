use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stlf_dms::metrics::EvalReport;
use stlf_dms_cli::{CliError, CliResult, Overrides, Run, RunConfig};

#[derive(Parser)]
#[command(name = "stlf-dms", version, about = "Hour-ahead load forecasting with Q-learning model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    reward: Option<RewardArg>,

    /// Omit the `# ... written <time>` line from CSV outputs.
    #[arg(long, global = true)]
    no_header_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Synth,
    /// Train the ten-model pool and write its validation scores.
    Train,
    /// Forecast the validation and test periods with every pool member.
    Forecast,
    /// Run the moving-window Q-learning selection over the test period.
    Dms,
    /// Score the pool and the selection.
    Evaluate,
    /// Run every stage and print the evaluation table.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Rank,
    Error,
    #[value(alias = "error_reduction")]
    ErrorReduction,
}

impl RewardArg {
    fn key(self) -> &'static str {
        match self {
            RewardArg::Rank => "rank",
            RewardArg::Error => "error",
            RewardArg::ErrorReduction => "error_reduction",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <PATH> is required".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        reward: cli.reward.map(|r| r.key().to_string()),
    };
    let run = Run::new(RunConfig::load(&path, &overrides)?, !cli.no_header_timestamp);
    match cli.command {
        Command::Synth => {
            let s = run.cmd_synth()?;
            let ds = &s.dataset;
            println!(
                "{} hours {} .. {}, mean load {:.1} kW, peak {:.1} kW -> {}",
                ds.len(),
                ds.start().map(|t| t.to_string()).unwrap_or_default(),
                ds.end().map(|t| t.to_string()).unwrap_or_default(),
                ds.mean_load(),
                ds.max_load(),
                s.path.display()
            );
        }
        Command::Train => {
            let pool = run.cmd_train()?;
            println!("model  valid MAPE %");
            for (id, m) in pool.validation_mapes() {
                println!("{id:<6} {m:.3}");
            }
        }
        Command::Forecast => {
            let (valid, test) = run.cmd_forecast()?;
            println!(
                "{} models, {} validation and {} test steps",
                test.n_models(),
                valid.len(),
                test.len()
            );
        }
        Command::Dms => {
            let out = run.cmd_dms()?;
            let ranks = out.log.chosen_ranks();
            let top = ranks.iter().filter(|&&r| r <= run.config.window.candidates).count();
            println!(
                "{} agents over {} steps; chosen model within the best {} on {:.1}% of steps",
                out.agent_count(),
                out.log.len(),
                run.config.window.candidates,
                100.0 * top as f64 / ranks.len().max(1) as f64
            );
        }
        Command::Evaluate | Command::Report => {
            let report = if matches!(cli.command, Command::Report) {
                run.cmd_report()?
            } else {
                run.cmd_evaluate()?
            };
            print_report(&report);
        }
    }
    Ok(())
}

fn print_report(r: &EvalReport) {
    let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"));
    if r.has_dms() {
        println!("{:<6} {:>8} {:>8} {:>8} {:>8}", "model", "nMAE %", "MAPE %", "Imp^A %", "Imp^P %");
        for row in &r.rows {
            println!(
                "{:<6} {:>8.2} {:>8.2} {:>8} {:>8}",
                row.model,
                row.nmae,
                row.mape,
                pct(row.imp_nmae),
                pct(row.imp_mape)
            );
        }
    } else {
        println!("{:<6} {:>8} {:>8}", "model", "nMAE %", "MAPE %");
        for row in &r.rows {
            println!("{:<6} {:>8.2} {:>8.2}", row.model, row.nmae, row.mape);
        }
    }
    println!("{} steps, capacity {:.1} kW", r.steps, r.capacity);
}
