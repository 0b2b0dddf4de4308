use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use car_core::error::CarError;
use car_core::experiment::{
    run_riskless_fraction_sweep, run_variance_reduction_sweep, run_variance_sweep, run_verify,
    ExperimentConfig, SweepOutput,
};
use car_core::market::growth_optimal_benchmark;
use car_core::solver::{
    solve_constrained, solve_unconstrained, ConstraintSpec, PortfolioSolution,
};

/// Capital-at-Risk optimal portfolios under a correlation constraint.
#[derive(Parser)]
#[command(name = "car", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Declarative TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled dataset to use (1 or 2); default runs both.
    #[arg(long)]
    dataset: Option<u8>,
    /// Correlation thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Confidence level alpha in (0, 0.5).
    #[arg(long)]
    alpha: Option<f64>,
    /// Horizon T in years.
    #[arg(long)]
    horizon: Option<f64>,
    /// Monte Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Random seed for the Monte Carlo engine and the oracle.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV and SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonOpts {
    fn build(&self) -> Result<ExperimentConfig, CarError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if self.dataset.is_some() {
            config.dataset = self.dataset;
        }
        if let Some(deltas) = &self.delta {
            config.deltas = deltas.clone();
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(horizon) = self.horizon {
            config.horizon = horizon;
        }
        if let Some(paths) = self.paths {
            config.monte_carlo.paths = paths;
        }
        if let Some(seed) = self.seed {
            config.monte_carlo.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the unconstrained and constrained problems once, printing JSON.
    Solve(CommonOpts),
    /// Log-return variance of the optima across the sigma11 grid.
    SweepVariance(CommonOpts),
    /// Riskless investment fraction across the sigma11 grid.
    SweepRiskless(CommonOpts),
    /// Variance reduction percentage across a delta grid.
    SweepReduction(CommonOpts),
    /// Run the oracle, identity and Monte Carlo verification suites.
    Verify(CommonOpts),
}

#[derive(Serialize)]
struct SolutionJson {
    pi: Vec<f64>,
    riskless_fraction: f64,
    lambda: Option<f64>,
    epsilon: f64,
    car: f64,
    binding: bool,
}

impl From<&PortfolioSolution> for SolutionJson {
    fn from(sol: &PortfolioSolution) -> Self {
        Self {
            pi: sol.pi.iter().copied().collect(),
            riskless_fraction: sol.riskless_fraction(),
            lambda: sol.lambda,
            epsilon: sol.epsilon,
            car: sol.car,
            binding: sol.binding,
        }
    }
}

#[derive(Serialize)]
struct SolveJson {
    dataset: String,
    alpha: f64,
    horizon: f64,
    unconstrained: SolutionJson,
    constrained: Vec<ConstrainedJson>,
}

#[derive(Serialize)]
struct ConstrainedJson {
    delta: f64,
    #[serde(flatten)]
    solution: SolutionJson,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(opts) => opts.build().and_then(run_solve),
        Command::SweepVariance(opts) => {
            opts.build().and_then(|c| run_variance_sweep(&c)).map(report_sweep)
        }
        Command::SweepRiskless(opts) => {
            opts.build().and_then(|c| run_riskless_fraction_sweep(&c)).map(report_sweep)
        }
        Command::SweepReduction(opts) => {
            opts.build().and_then(|c| run_variance_reduction_sweep(&c)).map(report_sweep)
        }
        Command::Verify(opts) => {
            return match opts.build().and_then(|c| verify(&c)) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(2),
                Err(err) => fail(err),
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(err),
    }
}

fn fail(err: CarError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        CarError::DegenerateDirection | CarError::DegenerateBenchmark => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn run_solve(config: ExperimentConfig) -> Result<(), CarError> {
    let spec = config.risk_spec()?;
    for (block, label) in config.blocks()? {
        let market = block.flatten()?;
        let bench = growth_optimal_benchmark(&block)?;
        let unconstrained = solve_unconstrained(&market, &spec);
        let mut constrained = Vec::new();
        for &delta in &config.deltas {
            let constraint = ConstraintSpec::new(bench.clone(), delta)?;
            let sol = solve_constrained(&market, &spec, &constraint)?;
            constrained.push(ConstrainedJson { delta, solution: SolutionJson::from(&sol) });
        }
        let out = SolveJson {
            dataset: label,
            alpha: config.alpha,
            horizon: config.horizon,
            unconstrained: SolutionJson::from(&unconstrained),
            constrained,
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    }
    Ok(())
}

fn report_sweep(out: SweepOutput) {
    for path in out.csv_paths.iter().chain(out.svg_paths.iter()) {
        println!("wrote {}", path.display());
    }
    for (label, crossing) in &out.fifty_percent_crossings {
        match crossing {
            Some(delta) => println!("{label}: 50% variance reduction at delta = {delta:.4}"),
            None => println!("{label}: 50% variance reduction not reached"),
        }
    }
}

fn verify(config: &ExperimentConfig) -> Result<bool, CarError> {
    let report = run_verify(config)?;
    for check in &report.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {}: {}", check.name, check.detail);
    }
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CarError::InvalidInput(format!("cannot create output dir: {e}")))?;
    let path = config.output_dir.join("verify_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("serializable"))
        .map_err(|e| CarError::InvalidInput(format!("cannot write report: {e}")))?;
    println!(
        "{} of {} checks passed; report at {}",
        report.checks.iter().filter(|c| c.pass).count(),
        report.checks.len(),
        path.display()
    );
    Ok(report.passed)
}
