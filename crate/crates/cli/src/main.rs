//! `rp-plrm`: fit, test, tune and simulate minimum Rényi-pseudodistance estimators
//! for polytomous logistic regression.
//!
//! Exit status is 0 on success, 2 for usage or input errors and 3 when a fit does
//! not converge or the numerics break down.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Failure, Status};

#[derive(Parser, Debug)]
#[command(
    name = "rp-plrm",
    version,
    about = "Robust polytomous logistic regression by minimum Rényi pseudodistance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model at one tuning parameter.
    Fit(FitArgs),
    /// Wald-type test of a linear hypothesis, with optional power and sample size.
    Test(TestArgs),
    /// Choose α by minimizing the estimated mean squared error over a grid.
    Tune(TuneArgs),
    /// Influence functions of the estimator (and of the Wald statistic).
    Influence(InfluenceArgs),
    /// Monte Carlo studies driven by a key = value config file.
    Simulate(SimulateArgs),
    /// Misclassification counts on the diabetes data under relabeling schemes.
    Diabetes(DiabetesArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    csv: PathBuf,
    /// Column holding the category labels.
    #[arg(long, default_value = "class")]
    response: String,
    /// Category order, comma separated; the last one is the reference. Defaults to
    /// the order of first appearance.
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// 0/1 indicator columns, one per category, used instead of a label column.
    #[arg(long, value_delimiter = ',', conflicts_with = "categories")]
    one_hot: Option<Vec<String>>,
    /// Predictor columns, comma separated. Defaults to every non-response column.
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
struct FitControl {
    /// Tuning parameter α ≥ 0 (0 gives the maximum likelihood estimator).
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value_t = Init::Mle)]
    init: Init,
    /// Print numbers at full precision instead of six significant digits.
    #[arg(long)]
    raw: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Zeros,
    Mle,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    control: FitControl,
}

#[derive(Args, Debug, Clone)]
struct HypothesisArgs {
    /// One row of the restriction matrix L, comma separated; repeat for more rows.
    #[arg(long = "L", allow_hyphen_values = true)]
    l_rows: Vec<String>,
    /// Right-hand side l, comma separated (defaults to zeros).
    #[arg(long = "l", value_delimiter = ',', allow_negative_numbers = true)]
    rhs: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    control: FitControl,
    #[command(flatten)]
    hypothesis: HypothesisArgs,
    /// Nominal level.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Alternative coefficients β¹ (comma separated) for the power approximation.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    power_at: Option<Vec<f64>>,
    /// Sample size for the power approximation (defaults to the data size).
    #[arg(long)]
    n: Option<usize>,
    /// Target power Π₀; prints the sample size needed to reach it at β¹.
    #[arg(long, requires = "power_at")]
    sample_size: Option<f64>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Largest α on the grid.
    #[arg(long, default_value_t = 0.7)]
    max: f64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Pilot α whose estimate stands in for the true coefficients.
    #[arg(long, default_value_t = 0.5)]
    pilot: f64,
    /// Repeat with the selected α as pilot until it stops changing (at most five rounds).
    #[arg(long)]
    iterate: bool,
    #[arg(long)]
    raw: bool,
}

#[derive(Args, Debug)]
struct InfluenceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    control: FitControl,
    /// Coefficients at which to evaluate (defaults to the fitted estimate).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta: Option<Vec<f64>>,
    /// One-based data row receiving the contamination.
    #[arg(long, conflicts_with = "all")]
    row: Option<usize>,
    /// Contamination point on the simplex (defaults to every one-hot vertex).
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// Contaminate every row at its observed response.
    #[arg(long)]
    all: bool,
    /// Also report the Wald-statistic influence for this hypothesis.
    #[command(flatten)]
    hypothesis: HypothesisArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Config file of `key = value` lines; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the result CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    raw: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    /// Unaltered labels.
    Original,
    /// The last fourteen rows relabeled as `normal`.
    Example,
    /// Fourteen random rows: normal → chemical → overt → normal.
    #[value(name = "1")]
    One,
    /// Fourteen random rows: normal → overt → chemical → normal.
    #[value(name = "2")]
    Two,
}

#[derive(Args, Debug)]
struct DiabetesArgs {
    #[arg(long, value_enum, default_value_t = Scheme::Example)]
    scheme: Scheme,
    /// Diabetes CSV (columns sspg, insulin, class); defaults to the bundled copy.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7"
    )]
    alphas: Vec<f64>,
    /// Relabeled datasets per scheme.
    #[arg(long, default_value_t = 200)]
    datasets: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    raw: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let echo = std::env::args().collect::<Vec<_>>().join(" ");
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(&echo, a),
        Command::Test(a) => commands::test(&echo, a),
        Command::Tune(a) => commands::tune(&echo, a),
        Command::Influence(a) => commands::influence(&echo, a),
        Command::Simulate(a) => commands::simulate(&echo, a),
        Command::Diabetes(a) => commands::diabetes(&echo, a),
    };
    match result {
        Ok((report, status)) => {
            print!("{}", report.render());
            match status {
                Status::Done => ExitCode::SUCCESS,
                Status::NotConverged => ExitCode::from(3),
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
