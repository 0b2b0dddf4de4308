//! Experiment front end: bundled datasets, declarative configuration, the
//! three sweep families, CSV/SVG emission and the end-to-end verification
//! report. All numbers emitted here come from the closed-form solvers; this
//! layer contains no math of its own.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};
use crate::market::{
    build_volatility_from_correlation, growth_optimal_benchmark, BlockMarket, RiskSpec,
};
use crate::mc::{mc_correlation_check, mc_moment_check, mc_quantile_check, McConfig};
use crate::oracle::{numeric_min_car, OracleConfig};
use crate::plot::{render_line_chart, Series};
use crate::risk::{log_correlation, log_variance};
use crate::solver::{
    solve_constrained, solve_pricing_kernel, solve_unconstrained, ConstraintSpec,
};

/// Per-asset return standard deviations shared by both datasets.
pub const DATASET_GAMMAS: [f64; 3] = [0.2, 0.25, 0.3];

pub fn dataset_correlation(id: u8) -> Result<DMatrix<f64>> {
    match id {
        1 => Ok(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -0.6, -0.8, -0.6, 1.0, 0.5, -0.8, 0.5, 1.0],
        )),
        2 => Ok(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -0.3, 0.5, -0.3, 1.0, -0.9, 0.5, -0.9, 1.0],
        )),
        _ => Err(CarError::InvalidInput(format!("unknown dataset {id}, expected 1 or 2"))),
    }
}

pub fn dataset_excess_returns(id: u8) -> Result<DVector<f64>> {
    match id {
        1 => Ok(DVector::from_vec(vec![0.07, 0.05, 0.03])),
        2 => Ok(DVector::from_vec(vec![0.03, 0.05, 0.07])),
        _ => Err(CarError::InvalidInput(format!("unknown dataset {id}, expected 1 or 2"))),
    }
}

/// Builds the block market of a bundled dataset with `m = 1` first-type stocks.
pub fn dataset_block(id: u8, riskless_rate: f64) -> Result<BlockMarket> {
    let rho = dataset_correlation(id)?;
    let b = dataset_excess_returns(id)?;
    let sigma = build_volatility_from_correlation(&DATASET_GAMMAS, &rho)?;
    BlockMarket::from_full(&sigma, &b, riskless_rate, 1)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.min];
        }
        (0..self.points)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// An inline `(gamma, rho, b)` market definition, row-major correlation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlineMarket {
    pub gammas: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Bundled dataset id (1 or 2). `None` runs both unless an inline market
    /// is given.
    pub dataset: Option<u8>,
    pub inline_market: Option<InlineMarket>,
    /// First-type asset count of the block partition.
    pub m: usize,
    pub deltas: Vec<f64>,
    pub alpha: f64,
    pub horizon: f64,
    pub riskless_rate: f64,
    pub initial_wealth: f64,
    pub sigma11_grid: GridSpec,
    pub delta_grid: GridSpec,
    pub monte_carlo: McConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            inline_market: None,
            m: 1,
            deltas: vec![0.3, 0.6, 0.9],
            alpha: 0.05,
            horizon: 5.0,
            riskless_rate: 0.05,
            initial_wealth: 1.0,
            sigma11_grid: GridSpec { min: 0.2, max: 2.0, points: 50 },
            delta_grid: GridSpec { min: 0.0, max: 0.99, points: 100 },
            monte_carlo: McConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CarError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CarError::InvalidInput(format!("cannot parse {}: {e}", path.display())))
    }

    pub fn risk_spec(&self) -> Result<RiskSpec> {
        RiskSpec::new(self.alpha, self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.risk_spec()?;
        if self.deltas.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(CarError::InvalidInput(
                "every delta must lie in [0, 1)".into(),
            ));
        }
        if self.sigma11_grid.min <= 0.0 {
            return Err(CarError::InvalidInput("sigma11 grid must be positive".into()));
        }
        if !self.initial_wealth.is_finite() || self.initial_wealth <= 0.0 {
            return Err(CarError::InvalidInput("initial wealth must be positive".into()));
        }
        for (block, _) in self.blocks()? {
            let _ = block.flatten()?;
        }
        Ok(())
    }

    /// The block markets this config addresses, with display labels.
    pub fn blocks(&self) -> Result<Vec<(BlockMarket, String)>> {
        if let Some(inline) = &self.inline_market {
            let d = inline.gammas.len();
            let rho = DMatrix::from_fn(d, d, |i, j| {
                *inline
                    .rho
                    .get(i)
                    .and_then(|row| row.get(j))
                    .unwrap_or(&f64::NAN)
            });
            if rho.iter().any(|v| v.is_nan()) {
                return Err(CarError::DimensionMismatch(
                    "inline rho must be a square matrix matching gammas".into(),
                ));
            }
            let sigma = build_volatility_from_correlation(&inline.gammas, &rho)?;
            let b = DVector::from_vec(inline.b.clone());
            let block = BlockMarket::from_full(&sigma, &b, self.riskless_rate, self.m)?;
            return Ok(vec![(block, "inline".to_string())]);
        }
        let ids: Vec<u8> = match self.dataset {
            Some(id) => vec![id],
            None => vec![1, 2],
        };
        ids.into_iter()
            .map(|id| {
                let rho = dataset_correlation(id)?;
                let b = dataset_excess_returns(id)?;
                let sigma = build_volatility_from_correlation(&DATASET_GAMMAS, &rho)?;
                let block = BlockMarket::from_full(&sigma, &b, self.riskless_rate, self.m)?;
                Ok((block, format!("ds{id}")))
            })
            .collect()
    }
}

/// One emitted sweep point. Constrained quantities are NaN on degenerate
/// grid points, which are flagged rather than dropped.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub dataset: String,
    pub delta: f64,
    pub sigma11: f64,
    pub variance_unconstrained: f64,
    pub variance_constrained: f64,
    pub riskless_fraction_unconstrained: f64,
    pub riskless_fraction_constrained: f64,
    pub car_unconstrained: f64,
    pub car_constrained: f64,
    pub reduction_percent: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub csv_paths: Vec<PathBuf>,
    pub svg_paths: Vec<PathBuf>,
    /// For the reduction sweep: per dataset, the delta at which the
    /// reduction first crosses 50% (linear interpolation on the grid).
    pub fifty_percent_crossings: Vec<(String, Option<f64>)>,
}

fn point_row(
    experiment: &str,
    label: &str,
    block: &BlockMarket,
    spec: &RiskSpec,
    delta: f64,
    sigma11: f64,
) -> ResultRow {
    let mut row = ResultRow {
        experiment: experiment.to_string(),
        dataset: label.to_string(),
        delta,
        sigma11,
        variance_unconstrained: f64::NAN,
        variance_constrained: f64::NAN,
        riskless_fraction_unconstrained: f64::NAN,
        riskless_fraction_constrained: f64::NAN,
        car_unconstrained: f64::NAN,
        car_constrained: f64::NAN,
        reduction_percent: f64::NAN,
        degenerate: false,
    };
    let market = match block.flatten() {
        Ok(m) => m,
        Err(_) => {
            row.degenerate = true;
            return row;
        }
    };
    let unconstrained = solve_unconstrained(&market, spec);
    row.variance_unconstrained = log_variance(&market, &unconstrained.pi, spec);
    row.riskless_fraction_unconstrained = unconstrained.riskless_fraction();
    row.car_unconstrained = unconstrained.car;
    match solve_pricing_kernel(block, spec, delta) {
        Ok(sol) => {
            row.variance_constrained = log_variance(&market, &sol.pi, spec);
            row.riskless_fraction_constrained = sol.riskless_fraction();
            row.car_constrained = sol.car;
            row.reduction_percent = if row.variance_unconstrained > 0.0 {
                100.0 * (1.0 - row.variance_constrained / row.variance_unconstrained)
            } else {
                0.0
            };
        }
        Err(CarError::DegenerateDirection) => row.degenerate = true,
        Err(_) => row.degenerate = true,
    }
    row
}

fn sigma11_sweep_rows(experiment: &str, config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let spec = config.risk_spec()?;
    let grid = config.sigma11_grid.values();
    let mut rows = Vec::new();
    for (base, label) in config.blocks()? {
        if base.m() != 1 {
            return Err(CarError::UnsupportedPartition(
                "sigma11 sweeps require m = 1".into(),
            ));
        }
        let tasks: Vec<(f64, f64)> = grid
            .iter()
            .flat_map(|&s11| config.deltas.iter().map(move |&delta| (s11, delta)))
            .collect();
        let mut chunk: Vec<ResultRow> = tasks
            .par_iter()
            .map(|&(s11, delta)| match base.with_scalar_sigma11(s11) {
                Ok(b) => point_row(experiment, &label, &b, &spec, delta, s11),
                Err(_) => ResultRow {
                    experiment: experiment.to_string(),
                    dataset: label.clone(),
                    delta,
                    sigma11: s11,
                    variance_unconstrained: f64::NAN,
                    variance_constrained: f64::NAN,
                    riskless_fraction_unconstrained: f64::NAN,
                    riskless_fraction_constrained: f64::NAN,
                    car_unconstrained: f64::NAN,
                    car_constrained: f64::NAN,
                    reduction_percent: f64::NAN,
                    degenerate: true,
                },
            })
            .collect();
        rows.append(&mut chunk);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.experiment.as_str(), a.dataset.as_str())
            .cmp(&(b.experiment.as_str(), b.dataset.as_str()))
            .then(a.delta.total_cmp(&b.delta))
            .then(a.sigma11.total_cmp(&b.sigma11))
    });
}

/// Log-return variance of the optimal portfolios across the `sigma11` grid.
pub fn run_variance_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let rows = sigma11_sweep_rows("variance", config)?;
    emit_sigma11_sweep(config, rows, "variance", "log return variance", |r, constrained| {
        if constrained {
            r.variance_constrained
        } else {
            r.variance_unconstrained
        }
    })
}

/// Riskless investment fraction of the optimal portfolios across the
/// `sigma11` grid.
pub fn run_riskless_fraction_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let rows = sigma11_sweep_rows("riskless", config)?;
    emit_sigma11_sweep(config, rows, "riskless", "riskless fraction pi0", |r, constrained| {
        if constrained {
            r.riskless_fraction_constrained
        } else {
            r.riskless_fraction_unconstrained
        }
    })
}

fn emit_sigma11_sweep(
    config: &ExperimentConfig,
    rows: Vec<ResultRow>,
    experiment: &str,
    y_label: &str,
    value: impl Fn(&ResultRow, bool) -> f64,
) -> Result<SweepOutput> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CarError::InvalidInput(format!("cannot create output dir: {e}")))?;
    let labels: Vec<String> = {
        let mut l: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
        l.dedup();
        l.sort();
        l.dedup();
        l
    };
    let mut csv_paths = Vec::new();
    let mut svg_paths = Vec::new();
    for label in &labels {
        let subset: Vec<&ResultRow> = rows.iter().filter(|r| &r.dataset == label).collect();
        let csv_path = config.output_dir.join(format!("{experiment}_{label}.csv"));
        write_csv(&csv_path, &subset)?;
        csv_paths.push(csv_path);

        let mut series = Vec::new();
        let mut unconstrained: Vec<(f64, f64)> = subset
            .iter()
            .filter(|r| r.delta == config.deltas.first().copied().unwrap_or(0.0))
            .map(|r| (r.sigma11, value(r, false)))
            .collect();
        unconstrained.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series { label: "unconstrained".into(), points: unconstrained });
        for &delta in &config.deltas {
            let mut pts: Vec<(f64, f64)> = subset
                .iter()
                .filter(|r| r.delta == delta)
                .map(|r| (r.sigma11, value(r, true)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            series.push(Series { label: format!("delta = {delta}"), points: pts });
        }
        let svg_path = config.output_dir.join(format!("{experiment}_{label}.svg"));
        render_line_chart(
            &svg_path,
            &format!("{y_label} vs sigma11 ({label})"),
            "sigma11",
            y_label,
            &series,
            None,
        )
        .map_err(|e| CarError::InvalidInput(format!("cannot write plot: {e}")))?;
        svg_paths.push(svg_path);
    }
    Ok(SweepOutput { rows, csv_paths, svg_paths, fifty_percent_crossings: Vec::new() })
}

/// Percentage of variance removed by the constraint across a `delta` grid,
/// with the base-dataset `sigma11` held fixed.
pub fn run_variance_reduction_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let spec = config.risk_spec()?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CarError::InvalidInput(format!("cannot create output dir: {e}")))?;
    let deltas = config.delta_grid.values();
    let mut rows = Vec::new();
    let mut crossings = Vec::new();
    let mut csv_paths = Vec::new();
    let mut svg_paths = Vec::new();
    for (block, label) in config.blocks()? {
        let sigma11 = block.sigma11()[(0, 0)];
        let mut chunk: Vec<ResultRow> = deltas
            .par_iter()
            .map(|&delta| point_row("reduction", &label, &block, &spec, delta, sigma11))
            .collect();
        sort_rows(&mut chunk);

        let curve: Vec<(f64, f64)> = chunk
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| (r.delta, r.reduction_percent))
            .collect();
        crossings.push((label.clone(), crossing_at(&curve, 50.0)));

        let csv_path = config.output_dir.join(format!("reduction_{label}.csv"));
        write_csv(&csv_path, &chunk.iter().collect::<Vec<_>>())?;
        csv_paths.push(csv_path);

        let svg_path = config.output_dir.join(format!("reduction_{label}.svg"));
        render_line_chart(
            &svg_path,
            &format!("variance reduction vs delta ({label})"),
            "delta",
            "variance reduction (%)",
            &[Series { label: format!("sigma11 = {sigma11:.4}"), points: curve }],
            Some(50.0),
        )
        .map_err(|e| CarError::InvalidInput(format!("cannot write plot: {e}")))?;
        svg_paths.push(svg_path);
        rows.append(&mut chunk);
    }
    sort_rows(&mut rows);
    Ok(SweepOutput { rows, csv_paths, svg_paths, fifty_percent_crossings: crossings })
}

/// First crossing of `level` by linear interpolation, `None` if never reached.
fn crossing_at(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    for pair in curve.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        if y0 < level && y1 >= level {
            return Some(x0 + (level - y0) / (y1 - y0) * (x1 - x0));
        }
    }
    curve.first().and_then(|&(x, y)| (y >= level).then_some(x))
}

fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.11e}")
    }
}

fn write_csv(path: &Path, rows: &[&ResultRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CarError::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record([
            "experiment",
            "dataset",
            "delta",
            "sigma11",
            "variance_unconstrained",
            "variance_constrained",
            "riskless_fraction_unconstrained",
            "riskless_fraction_constrained",
            "car_unconstrained",
            "car_constrained",
            "reduction_percent",
            "degenerate",
        ])
        .and_then(|()| {
            rows.iter().try_for_each(|r| {
                writer.write_record([
                    r.experiment.clone(),
                    r.dataset.clone(),
                    fmt_sig(r.delta),
                    fmt_sig(r.sigma11),
                    fmt_sig(r.variance_unconstrained),
                    fmt_sig(r.variance_constrained),
                    fmt_sig(r.riskless_fraction_unconstrained),
                    fmt_sig(r.riskless_fraction_constrained),
                    fmt_sig(r.car_unconstrained),
                    fmt_sig(r.car_constrained),
                    fmt_sig(r.reduction_percent),
                    r.degenerate.to_string(),
                ])
            })
        })
        .and_then(|()| writer.flush().map_err(Into::into))
        .map_err(|e| CarError::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifyReport {
    fn push(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        let check = CheckResult { name: name.into(), pass, detail: detail.into() };
        self.passed &= check.pass;
        self.checks.push(check);
    }
}

/// Runs oracle agreement, closed-form identities and the Monte Carlo checks
/// over the configured markets and thresholds.
pub fn run_verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    let spec = config.risk_spec()?;
    let mc = config.monte_carlo;
    let oracle_cfg = OracleConfig { seed: mc.seed, ..Default::default() };
    let mut report = VerifyReport { checks: Vec::new(), passed: true };

    for (block, label) in config.blocks()? {
        let market = block.flatten()?;
        let bench = growth_optimal_benchmark(&block)?;
        let unconstrained = solve_unconstrained(&market, &spec);

        // oracle vs closed form, unconstrained
        let (pi_o, car_o) = numeric_min_car(&market, &spec, None, &oracle_cfg)?;
        let coord_err = (&pi_o - &unconstrained.pi).amax();
        report.push(
            format!("{label}: oracle agreement (unconstrained)"),
            coord_err <= 1e-4 && (car_o - unconstrained.car).abs() <= 1e-6,
            format!("coordinate error {coord_err:.3e}, car error {:.3e}",
                (car_o - unconstrained.car).abs()),
        );

        // MC quantile at the unconstrained optimum
        let qc = mc_quantile_check(&market, &unconstrained.pi, &spec, config.initial_wealth, &mc)?;
        report.push(
            format!("{label}: MC quantile (unconstrained)"),
            qc.pass,
            format!("closed form {:.6} in [{:.6}, {:.6}]", qc.closed_form, qc.band_low, qc.band_high),
        );
        let mo = mc_moment_check(&market, &unconstrained.pi, &spec, config.initial_wealth, &mc)?;
        report.push(
            format!("{label}: MC moments (unconstrained)"),
            mo.pass,
            format!(
                "log variance sample {:.6} vs {:.6}",
                mo.sample_log_variance, mo.expected_log_variance
            ),
        );

        for &delta in &config.deltas {
            let constraint = ConstraintSpec::new(bench.clone(), delta)?;
            let sol = solve_constrained(&market, &spec, &constraint)?;
            let pk = solve_pricing_kernel(&block, &spec, delta)?;
            let consistency = (&sol.pi - &pk.pi).amax();
            report.push(
                format!("{label}: pricing-kernel consistency (delta = {delta})"),
                consistency <= 1e-10,
                format!("max coordinate gap {consistency:.3e}"),
            );

            let (pi_o, car_o) = numeric_min_car(&market, &spec, Some(&constraint), &oracle_cfg)?;
            let coord_err = (&pi_o - &sol.pi).amax();
            report.push(
                format!("{label}: oracle agreement (delta = {delta})"),
                coord_err <= 1e-4 && (car_o - sol.car).abs() <= 1e-6,
                format!("coordinate error {coord_err:.3e}, car error {:.3e}",
                    (car_o - sol.car).abs()),
            );

            if sol.binding {
                let corr = log_correlation(&market, &sol.pi, bench.eta())?;
                report.push(
                    format!("{label}: binding correlation (delta = {delta})"),
                    (corr + delta).abs() <= 1e-10,
                    format!("closed-form correlation {corr:.12}"),
                );
                let cc = mc_correlation_check(&market, &sol.pi, bench.eta(), &spec, &mc)?;
                report.push(
                    format!("{label}: MC correlation (delta = {delta})"),
                    cc.pass,
                    format!(
                        "sample {:.6}, target {:.6}, band [{:.6}, {:.6}]",
                        cc.sample, cc.closed_form, cc.band_low, cc.band_high
                    ),
                );
                let qc =
                    mc_quantile_check(&market, &sol.pi, &spec, config.initial_wealth, &mc)?;
                report.push(
                    format!("{label}: MC quantile (delta = {delta})"),
                    qc.pass,
                    format!(
                        "closed form {:.6} in [{:.6}, {:.6}]",
                        qc.closed_form, qc.band_low, qc.band_high
                    ),
                );
            }

            report.push(
                format!("{label}: CaR ordering (delta = {delta})"),
                sol.car >= unconstrained.car - 1e-12,
                format!("constrained {:.6e} vs unconstrained {:.6e}", sol.car, unconstrained.car),
            );
        }
    }
    Ok(report)
}
