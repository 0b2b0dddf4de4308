//! Analytic minimizers of capital at risk: the unconstrained solution, the
//! correlation-constrained solution with its Lagrange multiplier, the
//! pricing-kernel specialization, large-volatility limits and the
//! diversification comparison.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};
use crate::market::{BenchmarkPortfolio, BlockMarket, MarketModel, RiskSpec};

/// Relative tolerance below which the Cauchy-Schwarz gap
/// `||sigma^-1 b||^2 ||sigma' eta||^2 - (b'eta)^2` counts as degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

/// An optimal portfolio together with the quantities appearing in the
/// closed-form solution.
#[derive(Debug, Clone)]
pub struct PortfolioSolution {
    /// Optimal risky-asset weights.
    pub pi: DVector<f64>,
    /// Lagrange multiplier of the correlation constraint; `None` for the
    /// unconstrained problem.
    pub lambda: Option<f64>,
    /// Optimal ellipse radius `||sigma' pi||`.
    pub epsilon: f64,
    /// Optimal CaR value.
    pub car: f64,
    /// Whether the correlation constraint is active (always true for a
    /// nonzero constrained solution).
    pub binding: bool,
}

impl PortfolioSolution {
    pub fn riskless_fraction(&self) -> f64 {
        1.0 - self.pi.sum()
    }
}

/// A benchmark portfolio with a correlation threshold `delta in [0, 1)`.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    benchmark: BenchmarkPortfolio,
    delta: f64,
}

impl ConstraintSpec {
    pub fn new(benchmark: BenchmarkPortfolio, delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(CarError::InvalidThreshold(delta));
        }
        Ok(Self { benchmark, delta })
    }

    pub fn benchmark(&self) -> &BenchmarkPortfolio {
        &self.benchmark
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Minimum-CaR portfolio without the correlation constraint:
/// `pi* = (z_alpha/sqrt(T) + ||s^-1 b||)^+ (s s')^-1 b / ||s^-1 b||`.
pub fn solve_unconstrained(market: &MarketModel, spec: &RiskSpec) -> PortfolioSolution {
    let t = spec.horizon();
    let norm_sib = market.sigma_inv_b().norm();
    let epsilon = (spec.z_alpha() / t.sqrt() + norm_sib).max(0.0);
    let pi = if epsilon > 0.0 {
        market.merton_direction() * (epsilon / norm_sib)
    } else {
        DVector::zeros(market.asset_count())
    };
    PortfolioSolution {
        pi,
        lambda: None,
        epsilon,
        car: -0.5 * t * epsilon * epsilon,
        binding: false,
    }
}

/// Optimal ellipse radius for a fixed multiplier, the inner solution of the
/// two-phase reduction:
/// `e*(l) = (z_alpha sqrt(T) - l delta ||s'eta|| + ||s^-1 b T - l s'eta||)^+ / T`.
pub fn epsilon_star(
    lambda: f64,
    market: &MarketModel,
    spec: &RiskSpec,
    benchmark: &BenchmarkPortfolio,
    delta: f64,
) -> f64 {
    let t = spec.horizon();
    let residual = market.sigma_inv_b() * t - market.vol_loading(benchmark.eta()) * lambda;
    ((spec.z_alpha() * t.sqrt() - lambda * delta * benchmark.vol_norm() + residual.norm()) / t)
        .max(0.0)
}

/// Minimum-CaR portfolio under the correlation constraint
/// `Corr(log X(T), log Y(T)) <= -delta`.
pub fn solve_constrained(
    market: &MarketModel,
    spec: &RiskSpec,
    constraint: &ConstraintSpec,
) -> Result<PortfolioSolution> {
    let t = spec.horizon();
    let delta = constraint.delta();
    let bench = constraint.benchmark();
    let eta_norm = bench.vol_norm();
    let excess = bench.excess_return();
    let sib_sq = market.sigma_inv_b().norm_squared();

    // Cauchy-Schwarz gap; vanishes iff eta is parallel to the Merton direction.
    let gap = sib_sq * eta_norm * eta_norm - excess * excess;
    if gap <= DEGENERACY_TOL * sib_sq * eta_norm * eta_norm {
        return Err(CarError::DegenerateDirection);
    }
    let sqrt_gap = gap.sqrt();
    let root = (1.0 - delta * delta).sqrt();

    let lambda = (excess * t + t * delta / root * sqrt_gap) / (eta_norm * eta_norm);
    let argument = spec.z_alpha() * eta_norm / t.sqrt() + root * sqrt_gap - delta * excess;
    let clamped = argument.max(0.0);

    let pi = if clamped > 0.0 {
        let direction = market.merton_direction() * t - bench.eta() * lambda;
        direction * (root * clamped / (t * sqrt_gap))
    } else {
        DVector::zeros(market.asset_count())
    };
    Ok(PortfolioSolution {
        epsilon: market.vol_norm(&pi),
        car: -t / (2.0 * eta_norm * eta_norm) * clamped * clamped,
        binding: clamped > 0.0,
        pi,
        lambda: Some(lambda),
    })
}

/// Constrained solution when the benchmark is the growth-optimal portfolio of
/// the first-type stocks, written directly in terms of the market prices of
/// risk `theta_1` and `theta_2`.
pub fn solve_pricing_kernel(
    block: &BlockMarket,
    spec: &RiskSpec,
    delta: f64,
) -> Result<PortfolioSolution> {
    if !(0.0..1.0).contains(&delta) {
        return Err(CarError::InvalidThreshold(delta));
    }
    let t = spec.horizon();
    let theta1 = block.theta1();
    let theta2 = block.theta2();
    if theta2 <= DEGENERACY_TOL * theta1.max(1.0) {
        return Err(CarError::DegenerateDirection);
    }
    let root = (1.0 - delta * delta).sqrt();
    let lambda = t * (1.0 + delta * theta2 / (theta1 * root));
    let argument = spec.z_alpha() / t.sqrt() + root * theta2 - delta * theta1;
    let clamped = argument.max(0.0);

    let market = block.flatten()?;
    let pi = if clamped > 0.0 {
        let eta = crate::market::growth_optimal_benchmark(block)?;
        let direction = market.merton_direction() * t - eta.eta() * lambda;
        direction * (root * clamped / (t * theta2))
    } else {
        DVector::zeros(block.asset_count())
    };
    Ok(PortfolioSolution {
        epsilon: market.vol_norm(&pi),
        car: -0.5 * t * clamped * clamped,
        binding: clamped > 0.0,
        pi,
        lambda: Some(lambda),
    })
}

/// Large-`sigma11` limits of the optimal portfolios and log-return variances
/// for a block market whose first group is driven by a single Brownian
/// component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticLimits {
    pub unconstrained_pi: Vec<f64>,
    pub constrained_pi: Vec<f64>,
    pub unconstrained_variance: f64,
    pub constrained_variance: f64,
}

pub fn asymptotic_portfolios(
    block: &BlockMarket,
    spec: &RiskSpec,
    delta: f64,
) -> Result<AsymptoticLimits> {
    if block.m() != 1 {
        return Err(CarError::UnsupportedPartition(format!(
            "asymptotic limits require m = 1, got m = {}",
            block.m()
        )));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(CarError::InvalidThreshold(delta));
    }
    let t = spec.horizon();
    let z = spec.z_alpha();
    let s22 = block.sigma22();
    let s22_inv_b2 = s22
        .clone()
        .lu()
        .solve(block.b2())
        .expect("sigma22 invertibility checked at construction");
    let n2 = s22_inv_b2.norm();
    let tail = s22.transpose().lu().solve(&s22_inv_b2).unwrap(); // (s22 s22')^-1 b2
    let root = (1.0 - delta * delta).sqrt();

    let scale_u = (z / (n2 * t.sqrt()) + 1.0).max(0.0);
    let scale_c = root * (z / (n2 * t.sqrt()) + root).max(0.0);
    let embed = |scale: f64| -> Vec<f64> {
        std::iter::once(0.0).chain(tail.iter().map(|v| scale * v)).collect()
    };
    Ok(AsymptoticLimits {
        unconstrained_pi: embed(scale_u),
        constrained_pi: embed(scale_c),
        unconstrained_variance: t * (z / t.sqrt() + n2).max(0.0).powi(2),
        constrained_variance: t * (z / t.sqrt() + root * n2).max(0.0).powi(2),
    })
}

/// Closed-form log-return variances of the unconstrained and constrained
/// optima in the pricing-kernel setting, and the fraction of variance removed
/// by the constraint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub unconstrained: f64,
    pub constrained: f64,
    /// `1 - constrained/unconstrained`, zero when both variances vanish.
    pub reduction_fraction: f64,
}

pub fn variance_comparison(
    block: &BlockMarket,
    spec: &RiskSpec,
    delta: f64,
) -> Result<VarianceComparison> {
    if !(0.0..1.0).contains(&delta) {
        return Err(CarError::InvalidThreshold(delta));
    }
    let theta1 = block.theta1();
    let theta2 = block.theta2();
    if theta2 <= DEGENERACY_TOL * theta1.max(1.0) {
        return Err(CarError::DegenerateDirection);
    }
    let t = spec.horizon();
    let z = spec.z_alpha();
    let root = (1.0 - delta * delta).sqrt();
    let unconstrained = t * (z / t.sqrt() + (theta1 * theta1 + theta2 * theta2).sqrt())
        .max(0.0)
        .powi(2);
    let constrained = t * (z / t.sqrt() + root * theta2 - delta * theta1).max(0.0).powi(2);
    let reduction_fraction = if unconstrained > 0.0 {
        1.0 - constrained / unconstrained
    } else {
        0.0
    };
    Ok(VarianceComparison { unconstrained, constrained, reduction_fraction })
}
