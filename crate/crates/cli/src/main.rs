use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drnet_cli::{
    cmd_analyze, cmd_compare, cmd_oracle, cmd_parse, cmd_simulate, parse_box, workers_from_env,
    Format, Outcome, RunConfig, EXIT_INPUT,
};
use drnet_core::NetworkSource;

#[derive(Parser)]
#[command(name = "drnet", version, about = "Product-form Poisson analysis of reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print species, complexes, linkage classes and weak reversibility.
    Parse(Flags),
    /// Decide the DR condition and print the closed-form means.
    Analyze(Flags),
    /// Run a Gillespie ensemble and write histogram files.
    Simulate(Flags),
    /// Compare an ensemble with the predicted product-Poisson law.
    Compare(Flags),
    /// Compare the truncated master equation with the predicted law.
    Oracle(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct Flags {
    /// Network file (`-` reads stdin).
    file: PathBuf,
    /// Time horizon T.
    #[arg(long, default_value_t = 2.0)]
    time: f64,
    /// Number of stochastic replicates N.
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    /// Master seed for the replicate streams.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Relative tolerance on DR residuals.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Step size for RK4 (rate equations and master equation).
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Number of points on the analysis time grid.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Master-equation box: one bound for all species, or one per species.
    // qualified path so clap takes the parsed list as one value
    #[arg(long = "box", value_parser = parse_box)]
    bounds: Option<std::vec::Vec<u64>>,
    /// Output path; a file-name prefix for `simulate`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// With `simulate`, also write a gnuplot script overlaying the predicted pmf.
    #[arg(long)]
    emit_gnuplot: bool,
}

fn run(flags: &Flags, cmd: fn(&NetworkSource, &RunConfig) -> Outcome) -> Outcome {
    let workers = match workers_from_env() {
        Ok(w) => w,
        Err(e) => return Outcome { code: EXIT_INPUT, stderr: format!("{e}\n"), ..Outcome::default() },
    };
    let text = if flags.file.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())
    } else {
        std::fs::read_to_string(&flags.file)
    };
    let text = match text {
        Ok(t) => t,
        Err(e) => {
            return Outcome {
                code: EXIT_INPUT,
                stderr: format!("{}: {e}\n", flags.file.display()),
                ..Outcome::default()
            }
        }
    };
    let origin = if flags.file.as_os_str() == "-" {
        "<stdin>".to_string()
    } else {
        flags.file.display().to_string()
    };
    let cfg = RunConfig {
        time: flags.time,
        dt: flags.dt,
        grid_points: flags.grid,
        replicates: flags.replicates,
        seed: flags.seed,
        tol: flags.tol,
        box_bounds: flags.bounds.clone(),
        out: flags.out.clone(),
        format: match flags.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        },
        emit_gnuplot: flags.emit_gnuplot,
        workers,
    };
    cmd(&NetworkSource::new(text, origin), &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Parse(f) => run(f, cmd_parse),
        Command::Analyze(f) => run(f, cmd_analyze),
        Command::Simulate(f) => run(f, cmd_simulate),
        Command::Compare(f) => run(f, cmd_compare),
        Command::Oracle(f) => run(f, cmd_oracle),
    };
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    if let Err(e) = outcome.write_files() {
        eprintln!("cannot write output: {e}");
        return ExitCode::from(EXIT_INPUT as u8);
    }
    ExitCode::from(outcome.code as u8)
}
