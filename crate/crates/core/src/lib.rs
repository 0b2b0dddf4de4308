//! Capital-at-Risk optimal constant-proportion portfolios in a multi-asset
//! Black-Scholes market.
//!
//! The library provides closed-form minimizers of capital at risk, with and
//! without a negative-correlation constraint against a benchmark index, and
//! verifies them against a derivative-free numerical optimizer and exact
//! Monte Carlo sampling of the terminal wealth law.

pub mod error;
pub mod experiment;
pub mod market;
pub mod mc;
pub mod oracle;
pub mod plot;
pub mod risk;
pub mod solver;

pub use error::{CarError, Result};
pub use market::{
    build_volatility_from_correlation, growth_optimal_benchmark, normal_quantile,
    BenchmarkPortfolio, BlockMarket, MarketModel, RiskSpec,
};
pub use risk::{capital_at_risk, log_correlation, log_return_quantile, wealth_law, WealthLaw};
pub use solver::{
    asymptotic_portfolios, solve_constrained, solve_pricing_kernel, solve_unconstrained,
    variance_comparison, ConstraintSpec, PortfolioSolution,
};
