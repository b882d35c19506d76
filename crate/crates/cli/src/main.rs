use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use romlab::pipeline::{export, format_table, with_pool, Figure, Outcome, RunConfig, Runner, Stage};
use romlab::RomError;

/// Reduced-order models of incompressible flow with data-driven corrections.
#[derive(Parser)]
#[command(name = "romlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Recompute even if the stored output matches the configuration.
    #[arg(long)]
    force: bool,
    /// Worker threads for rank searches and the model table.
    #[arg(long, env = "ROMLAB_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order solver and store snapshots.
    Generate(Common),
    /// Compute velocity, pressure and supremizer bases.
    Pod(Common),
    /// Assemble reduced operators and the snapshot coefficient history.
    Assemble(Common),
    /// Fit the configured corrections with rank selection.
    Fit(Common),
    /// Integrate the reduced model over the online window.
    Solve(Common),
    /// Compute error metrics and write CSV files.
    Evaluate(Common),
    /// Run generate through evaluate.
    Pipeline(Common),
    /// Run every row of the model comparison table.
    Matrix(Common),
    /// Write plot data and gnuplot scripts.
    Export {
        #[command(flatten)]
        common: Common,
        /// Figures to export: errors, decay, ranks (default: all).
        #[arg(long, value_delimiter = ',')]
        which: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), RomError> {
    let (common, stage) = match &cli.command {
        Command::Generate(c) => (c, Some(Stage::Generate)),
        Command::Pod(c) => (c, Some(Stage::Pod)),
        Command::Assemble(c) => (c, Some(Stage::Assemble)),
        Command::Fit(c) => (c, Some(Stage::Fit)),
        Command::Solve(c) => (c, Some(Stage::Solve)),
        Command::Evaluate(c) => (c, Some(Stage::Evaluate)),
        Command::Matrix(c) => (c, Some(Stage::Matrix)),
        Command::Pipeline(c) => (c, None),
        Command::Export { common, .. } => (common, None),
    };
    let cfg = RunConfig::load(&common.config)?;
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    let runner = Runner::new(cfg, common.force);
    with_pool(common.jobs, || match (&cli.command, stage) {
        (Command::Export { which, .. }, _) => {
            let figures = if which.is_empty() {
                Figure::ALL.to_vec()
            } else {
                which.iter().map(|w| w.parse()).collect::<Result<Vec<Figure>, _>>()?
            };
            for p in export(&runner, &figures)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        (_, Some(stage)) => {
            report(stage, runner.run(stage)?)?;
            if stage == Stage::Matrix {
                print!("{}", format_table(&runner.load_matrix()?));
            }
            Ok(())
        }
        (_, None) => {
            for (stage, outcome) in runner.pipeline()? {
                report(stage, outcome)?;
            }
            Ok(())
        }
    })?
}

fn report(stage: Stage, outcome: Outcome) -> Result<(), RomError> {
    match outcome {
        Outcome::Ran => println!("{stage}: done"),
        Outcome::Skipped => println!("{stage}: up to date"),
    }
    Ok(())
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
