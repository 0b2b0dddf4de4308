//! Independent numerical re-solution of the risk-minimization problem:
//! multi-start derivative-free descent with an exterior quadratic penalty on
//! the correlation constraint. Used to cross-check the closed-form solvers
//! without sharing any code path with them.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CarError, Result};
use crate::market::{MarketModel, RiskSpec};
use crate::risk::{capital_at_risk, correlation_constraint_value};
use crate::solver::ConstraintSpec;

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub max_iterations: usize,
    /// Convergence tolerance on the simplex CaR spread.
    pub tolerance: f64,
    /// Initial penalty weight; escalated geometrically by `penalty_growth`.
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_stages: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            tolerance: 1e-14,
            penalty_initial: 1e2,
            penalty_growth: 100.0,
            penalty_stages: 7,
            restarts: 8,
            seed: 20_240_601,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        if self.tolerance <= 0.0 {
            return Err(CarError::InvalidInput("oracle tolerance must be positive".into()));
        }
        if self.restarts < 4 {
            return Err(CarError::InvalidInput("oracle needs at least 4 restarts".into()));
        }
        Ok(())
    }
}

/// Best feasible portfolio found by the derivative-free oracle and its CaR.
/// With a constraint, the reported point violates the homogeneous constraint
/// by at most 1e-8 in normalized (correlation) units.
pub fn numeric_min_car(
    market: &MarketModel,
    spec: &RiskSpec,
    constraint: Option<&ConstraintSpec>,
    config: &OracleConfig,
) -> Result<(DVector<f64>, f64)> {
    config.validate()?;
    let d = market.asset_count();
    let starts = start_points(market, config, d);

    let results: Vec<(DVector<f64>, f64, bool)> = starts
        .par_iter()
        .map(|x0| match constraint {
            None => {
                let f = |pi: &DVector<f64>| capital_at_risk(market, pi, spec);
                let (x, fx, converged) =
                    nelder_mead(&f, x0, 0.5, config.max_iterations, config.tolerance);
                (x, fx, converged)
            }
            Some(cons) => run_penalty_descent(market, spec, cons, x0, config),
        })
        .collect();

    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut any_converged = false;
    for (x, _, converged) in results {
        any_converged |= converged;
        let car = capital_at_risk(market, &x, spec);
        if feasible(market, constraint, &x) && best.as_ref().is_none_or(|(_, c)| car < *c) {
            best = Some((x, car));
        }
    }
    match best {
        Some(b) if any_converged => Ok(b),
        Some((_, car)) => Err(CarError::NoConvergence(car)),
        None => Err(CarError::NoConvergence(f64::INFINITY)),
    }
}

fn feasible(market: &MarketModel, constraint: Option<&ConstraintSpec>, pi: &DVector<f64>) -> bool {
    let Some(cons) = constraint else { return true };
    let g = correlation_constraint_value(market, pi, cons.benchmark().eta(), cons.delta());
    let denom = market.vol_norm(pi) * cons.benchmark().vol_norm();
    if denom <= 1e-6 {
        // near the zero portfolio the correlation is ill-conditioned; fall
        // back to the homogeneous constraint, which vanishes at pi = 0
        g <= 1e-8
    } else {
        g / denom <= 1e-8
    }
}

fn start_points(market: &MarketModel, config: &OracleConfig, d: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![
        DVector::from_element(d, 0.1),
        market.b().normalize(),
        -market.b().normalize(),
    ];
    while starts.len() < config.restarts {
        starts.push(DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)));
    }
    starts.truncate(config.restarts);
    starts
}

fn run_penalty_descent(
    market: &MarketModel,
    spec: &RiskSpec,
    constraint: &ConstraintSpec,
    x0: &DVector<f64>,
    config: &OracleConfig,
) -> (DVector<f64>, f64, bool) {
    let eta = constraint.benchmark().eta();
    let delta = constraint.delta();
    let mut mu = config.penalty_initial;
    let mut x = x0.clone();
    let mut fx = f64::INFINITY;
    let mut converged = false;
    let mut scale = 0.5;
    for _ in 0..config.penalty_stages {
        let f = |pi: &DVector<f64>| {
            let violation = correlation_constraint_value(market, pi, eta, delta).max(0.0);
            capital_at_risk(market, pi, spec) + mu * violation * violation
        };
        let (xn, fxn, ok) = nelder_mead(&f, &x, scale, config.max_iterations, config.tolerance);
        x = xn;
        fx = fxn;
        converged = ok;
        mu *= config.penalty_growth;
        scale = (scale * 0.2).max(1e-5);
    }
    (x, fx, converged)
}

/// Plain Nelder-Mead over R^d with standard coefficients. Returns the best
/// vertex, its value, and whether the value spread fell below `tol`.
pub fn nelder_mead(
    f: &dyn Fn(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
    scale: f64,
    max_iter: usize,
    tol: f64,
) -> (DVector<f64>, f64, bool) {
    let d = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..d {
        let mut v = x0.clone();
        v[i] += scale;
        let fv = f(&v);
        simplex.push((v, fv));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[d].1 - simplex[0].1;
        let diam = (&simplex[d].0 - &simplex[0].0).amax();
        if spread < tol && diam < 1e3 * tol.max(1e-12) {
            return (simplex[0].0.clone(), simplex[0].1, true);
        }

        let centroid: DVector<f64> = simplex[..d]
            .iter()
            .fold(DVector::zeros(d), |acc, (v, _)| acc + v)
            / d as f64;
        let worst = simplex[d].clone();

        let reflected = &centroid + (&centroid - &worst.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * 2.0;
            let fe = f(&expanded);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                &centroid + (&reflected - &centroid) * 0.5
            } else {
                &centroid + (&worst.0 - &centroid) * 0.5
            };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = &best + (&entry.0 - &best) * 0.5;
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, false)
}
