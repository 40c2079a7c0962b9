//! `kronvar` binary.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kronvar_cli::benchmark::{benchmark, BenchmarkArgs};
use kronvar_cli::commands::{convert, decompose, fit, simulate, ConvertArgs, DecomposeArgs, FitArgs, SimulateArgs};

/// Matrix autoregressions, global VARs and Kronecker-sum decompositions.
///
/// Exit codes: 0 success, 2 input or schema error, 3 unstable model or
/// singular contemporaneous matrix, 4 estimation failure, 5 unsupported
/// conversion.
#[derive(Debug, Parser)]
#[command(name = "kronvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a model document into a long-format panel CSV.
    Simulate(SimulateArgs),
    /// Estimate a var, mar or gvar model from a panel CSV.
    Fit(FitArgs),
    /// Convert a model document to another representation.
    Convert(ConvertArgs),
    /// Kronecker-sum decomposition of a dense matrix.
    Decompose(DecomposeArgs),
    /// Run a Monte Carlo benchmark described by a JSON config.
    Benchmark(BenchmarkArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let invocation = std::iter::once("kronvar".to_string()).chain(std::env::args().skip(1)).collect::<Vec<_>>().join(" ");
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, &invocation),
        Command::Fit(a) => fit(a, &invocation),
        Command::Convert(a) => convert(a, &invocation),
        Command::Decompose(a) => decompose(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kronvar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
