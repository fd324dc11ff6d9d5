use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddsafe::pipeline::{self, Command, Overrides, EXIT_USAGE};
use ddsafe::synthesis::{Definiteness, Method, RowNorm};

#[derive(Parser)]
#[command(
    name = "ddsafe",
    version,
    about = "Data-driven lambda-contractive safe controller synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment and write the data matrices with rank diagnostics.
    Collect(Common),
    /// Synthesize a controller and write it with its certificate.
    Synth(Common),
    /// Synthesize, then verify by grid, Monte Carlo and certificate replay.
    Verify(Common),
    /// Synthesize, then simulate from every vertex.
    Simulate(Common),
    /// Bisect the smallest feasible contraction level per method.
    SweepLambda(Common),
    /// Full pipeline with the method comparison table.
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Thm2,
    Cor2,
    Thm1,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowNormArg {
    One,
    Inf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefinitenessArg {
    Strict,
    ActiveRows,
    Off,
}

#[derive(Args)]
struct Common {
    /// Scenario file (alternative to --scenario).
    #[arg(value_name = "SCENARIO")]
    path: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Verification grid, e.g. 201x201.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    row_norm: Option<RowNormArg>,
    #[arg(long, value_enum)]
    definiteness: Option<DefinitenessArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Collect(c) => (Command::Collect, c),
        Cmd::Synth(c) => (Command::Synth, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::SweepLambda(c) => (Command::SweepLambda, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    let Some(scenario) = common.scenario.clone().or(common.path.clone()) else {
        eprintln!("error: a scenario file is required");
        return ExitCode::from(EXIT_USAGE as u8);
    };
    let grid = match common.grid.as_deref().map(pipeline::parse_grid).transpose() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let overrides = Overrides {
        seed: common.seed,
        lambda: common.lambda,
        method: common.method.map(|m| match m {
            MethodArg::Thm2 => Method::Thm2,
            MethodArg::Cor2 => Method::Cor2,
            MethodArg::Thm1 => Method::Thm1,
        }),
        grid,
        row_norm: common.row_norm.map(|r| match r {
            RowNormArg::One => RowNorm::One,
            RowNormArg::Inf => RowNorm::Inf,
        }),
        definiteness: common.definiteness.map(|d| match d {
            DefinitenessArg::Strict => Definiteness::Strict,
            DefinitenessArg::ActiveRows => Definiteness::ActiveRows,
            DefinitenessArg::Off => Definiteness::Off,
        }),
    };
    let code = pipeline::execute(command, &scenario, &overrides, &common.out);
    ExitCode::from(code as u8)
}
