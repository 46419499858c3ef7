//! `hpscale`: predict, fit, analyze and compare LLM hyperparameter scaling laws.
//!
//! Exit codes: 0 success, 2 argument or parse error, 3 domain error, 4 I/O
//! failure while writing.

mod commands;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpscale_core::fit::DEFAULT_RESAMPLES;
use hpscale_core::predict::{MeituanParams, Method, ModelScale};
use hpscale_core::stats::Predictor;
use hpscale_core::surface::Metric;

use commands::{CompareArgs, Globals, LawInputs, PredictArgs};
use output::{CliResult, Failure};

#[derive(Parser)]
#[command(name = "hpscale", version, about = "Hyperparameter scaling-law toolkit")]
struct Cli {
    /// Law-parameter overrides (JSON), or a fit report from `hpscale fit`.
    #[arg(long, global = true, value_name = "JSON")]
    laws: Option<PathBuf>,
    /// Random seed for resampling and synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent or `-`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LawFlags {
    /// Expected final loss, for loss-parameterized laws.
    #[arg(long)]
    loss: Option<f64>,
    /// Meituan coefficients `lambda,alpha,lambda_b,alpha_b`.
    #[arg(long, value_parser = commands::parse_meituan, allow_hyphen_values = true)]
    meituan: Option<MeituanParams>,
    /// Compute budget in FLOPs; defaults to `budget-factor · N · D`.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = 6.0)]
    budget_factor: f64,
    /// Use activated rather than total parameters in the compute budget.
    #[arg(long)]
    use_active: bool,
}

impl LawFlags {
    fn inputs(&self) -> LawInputs {
        LawInputs {
            loss: self.loss,
            meituan: self.meituan,
            budget: self.budget,
            budget_factor: self.budget_factor,
            use_active: self.use_active,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Recommend (lr, batch size) from one law.
    Predict {
        #[arg(long, default_value = "step")]
        method: Method,
        /// Non-vocabulary parameter count.
        #[arg(long)]
        n: f64,
        /// Training tokens.
        #[arg(long)]
        d: f64,
        /// Activated parameters (MoE).
        #[arg(long)]
        n_active: Option<f64>,
        #[command(flatten)]
        law: LawFlags,
        /// Snap to the standard lr/bs grid.
        #[arg(long)]
        snap: bool,
    },
    /// Bootstrap-fit both power laws to an observations CSV.
    Fit {
        #[arg(long, value_name = "CSV")]
        observations: PathBuf,
        /// Number of bootstrap resamples.
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        bootstrap: usize,
    },
    /// Regression diagnostics of log batch size on log N / log D.
    Stats {
        #[arg(long, value_name = "CSV")]
        observations: PathBuf,
        /// Fit a single formulation (e.g. `logN,logD`) instead of comparing all three.
        #[arg(long, value_delimiter = ',')]
        predictors: Option<Vec<Predictor>>,
    },
    /// Optimum, plateau and convexity of a loss surface.
    Analyze {
        #[arg(long, value_name = "CSV")]
        surface: PathBuf,
        /// Plateau threshold as a relative loss excess.
        #[arg(long, default_value_t = 0.0025)]
        delta: f64,
        /// Absolute slack of the unimodality test.
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value = "train")]
        metric: Metric,
    },
    /// Score law predictions against a loss surface.
    Compare {
        #[arg(long, value_name = "CSV")]
        surface: PathBuf,
        /// Comma-separated methods; all when absent.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, default_value = "train")]
        metric: Metric,
        #[command(flatten)]
        law: LawFlags,
        /// Score predictions snapped onto the surface grid instead of raw ones.
        #[arg(long)]
        snap: bool,
        /// Also write the table as CSV.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Relative-error contour plot of a surface as SVG.
    Plot {
        #[arg(long, value_name = "CSV")]
        surface: PathBuf,
        #[arg(long, default_value = "train")]
        metric: Metric,
        /// Contour levels in per-mille.
        #[arg(long, value_delimiter = ',', default_values_t = plot::DEFAULT_LEVELS_PERMILLE)]
        levels: Vec<f64>,
        /// Compare report whose predictions are drawn as markers.
        #[arg(long, value_name = "JSON")]
        overlay: Option<PathBuf>,
        /// Draw snapped instead of raw predictions.
        #[arg(long)]
        overlay_snapped: bool,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Quadratic-in-log surface over a grid, as surface CSV.
    Surface {
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        /// Grid JSON `{"lr_values": [...], "bs_values": [...]}`; standard grid when absent.
        #[arg(long, value_name = "JSON")]
        grid: Option<PathBuf>,
    },
    /// Law-generated optima over an (N, D) lattice, as observations CSV.
    Observations {
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let g = Globals { laws: cli.laws, seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Predict { method, n, d, n_active, law, snap } => {
            let mut scale = ModelScale::new(n, d).map_err(Failure::from)?;
            if let Some(a) = n_active {
                scale = scale.with_active(a)?;
            }
            commands::predict(&g, &PredictArgs { method, scale, inputs: law.inputs(), snap })
        }
        Command::Fit { observations, bootstrap } => commands::fit(&g, &observations, bootstrap),
        Command::Stats { observations, predictors } => {
            commands::stats(&g, &observations, predictors.as_deref())
        }
        Command::Analyze { surface, delta, epsilon, metric } => {
            commands::analyze(&g, &surface, delta, epsilon, metric)
        }
        Command::Compare { surface, methods, metric, law, snap, csv } => {
            let args = CompareArgs {
                methods: methods.unwrap_or_else(|| Method::ALL.to_vec()),
                metric,
                inputs: law.inputs(),
                score_snapped: snap,
                csv,
            };
            commands::compare(&g, &surface, &args)
        }
        Command::Synth(SynthCommand::Surface { spec, grid }) => {
            commands::synth_surface(&g, &spec, grid.as_deref())
        }
        Command::Synth(SynthCommand::Observations { spec }) => commands::synth_observations(&g, &spec),
        Command::Plot { surface, metric, levels, overlay, overlay_snapped } => {
            commands::plot(&g, &surface, metric, &levels, overlay.as_deref(), overlay_snapped)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("hpscale: error: {message}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
