//! `ssanova`: fit mixed-effects SSANOVA models to daily activity curves and
//! export components, group differences, predictions and summaries.

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ssanova",
    version,
    about = "Smoothing spline ANOVA for daily activity curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for every output file [default: out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Grid and band options for commands that evaluate curves.
#[derive(Args, Debug, Clone)]
pub struct CurveArgs {
    /// Model file [default: <out-dir>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Grid spacing in minutes [default: 1].
    #[arg(long)]
    grid_minutes: Option<f64>,
    /// Confidence level of the bands [default: 0.95].
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to an activity CSV and write the model file.
    Fit(commands::FitArgs),
    /// Evaluate every ANOVA component with its band.
    Components(commands::ComponentsArgs),
    /// Group difference curves and their significant regions.
    Diff(commands::DiffArgs),
    /// Fixed-effect predictions for factor-level combinations.
    Predict(commands::PredictArgs),
    /// Per-group descriptive statistics of an activity CSV.
    Summary(commands::SummaryArgs),
    /// Draw a synthetic cohort with known truth.
    Simulate(commands::SimulateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Components(a) => commands::components(a),
        Command::Diff(a) => commands::diff(a),
        Command::Predict(a) => commands::predict(a),
        Command::Summary(a) => commands::summary(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
