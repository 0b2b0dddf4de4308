//! Closed-form risk and moment functionals of a constant-proportion
//! portfolio under logarithmic returns.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};
use crate::market::{MarketModel, RiskSpec};

/// Constant wealth fractions held in the risky assets. No sign or leverage
/// restriction; the riskless fraction is `1 - 1'pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioVector {
    weights: DVector<f64>,
}

impl PortfolioVector {
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(CarError::InvalidInput("portfolio weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn zeros(d: usize) -> Self {
        Self { weights: DVector::zeros(d) }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `pi_0 = 1 - 1'pi`.
    pub fn riskless_fraction(&self) -> f64 {
        1.0 - self.weights.sum()
    }
}

impl From<PortfolioVector> for DVector<f64> {
    fn from(pi: PortfolioVector) -> Self {
        pi.weights
    }
}

/// Moments of the terminal wealth `X(T)` of a constant-proportion portfolio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WealthLaw {
    pub mean: f64,
    pub variance: f64,
    pub log_variance: f64,
    pub initial_wealth: f64,
}

/// The alpha-quantile of the log return over `[0, T]`:
/// `(r + b'pi)T - ||sigma' pi||^2 T / 2 + z_alpha ||sigma' pi|| sqrt(T)`.
/// Does not depend on the initial wealth.
pub fn log_return_quantile(market: &MarketModel, pi: &DVector<f64>, spec: &RiskSpec) -> f64 {
    let t = spec.horizon();
    let eps = market.vol_norm(pi);
    (market.r() + market.b().dot(pi)) * t - 0.5 * eps * eps * t + spec.z_alpha() * eps * t.sqrt()
}

/// Capital at risk: the riskless log return minus the log-return quantile,
/// `-b'pi T + ||sigma' pi||^2 T / 2 - z_alpha ||sigma' pi|| sqrt(T)`.
pub fn capital_at_risk(market: &MarketModel, pi: &DVector<f64>, spec: &RiskSpec) -> f64 {
    let t = spec.horizon();
    let eps = market.vol_norm(pi);
    -market.b().dot(pi) * t + 0.5 * eps * eps * t - spec.z_alpha() * eps * t.sqrt()
}

/// Correlation between the terminal log values of two constant-proportion
/// portfolios: `pi' sigma sigma' eta / (||sigma' pi|| ||sigma' eta||)`.
pub fn log_correlation(market: &MarketModel, pi: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
    let vp = market.vol_loading(pi);
    let ve = market.vol_loading(eta);
    let (np, ne) = (vp.norm(), ve.norm());
    if np == 0.0 || ne == 0.0 {
        return Err(CarError::ZeroVolatilityPortfolio);
    }
    Ok(vp.dot(&ve) / (np * ne))
}

/// Left side of the correlation constraint in homogeneous form:
/// `delta ||sigma' eta|| ||sigma' pi|| + pi' sigma sigma' eta`.
/// Nonpositive iff the constraint holds; identically zero at `pi = 0`, so the
/// zero portfolio is feasible for every threshold.
pub fn correlation_constraint_value(
    market: &MarketModel,
    pi: &DVector<f64>,
    eta: &DVector<f64>,
    delta: f64,
) -> f64 {
    let vp = market.vol_loading(pi);
    let ve = market.vol_loading(eta);
    delta * ve.norm() * vp.norm() + vp.dot(&ve)
}

/// Terminal wealth moments for initial wealth `x`.
pub fn wealth_law(
    market: &MarketModel,
    pi: &DVector<f64>,
    spec: &RiskSpec,
    x: f64,
) -> Result<WealthLaw> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(CarError::InvalidInput(format!(
            "initial wealth must be positive, got {x}"
        )));
    }
    let t = spec.horizon();
    let drift = market.r() + market.b().dot(pi);
    let eps2 = market.vol_loading(pi).norm_squared();
    Ok(WealthLaw {
        mean: x * (drift * t).exp(),
        variance: x * x * (2.0 * drift * t).exp() * ((eps2 * t).exp() - 1.0),
        log_variance: t * eps2,
        initial_wealth: x,
    })
}

/// `Var(log X(T)) = T pi' sigma sigma' pi`.
pub fn log_variance(market: &MarketModel, pi: &DVector<f64>, spec: &RiskSpec) -> f64 {
    spec.horizon() * market.vol_loading(pi).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;

    fn scalar_market(sigma: f64, b: f64, r: f64) -> MarketModel {
        MarketModel::new(
            r,
            DVector::from_vec(vec![b]),
            DMatrix::from_element(1, 1, sigma),
        )
        .unwrap()
    }

    fn random_market(rng: &mut impl Rng, d: usize) -> MarketModel {
        let mut a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
        a = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
        let l = crate::market::cholesky_lower(&a).unwrap();
        let b = DVector::from_fn(d, |_, _| rng.random_range(0.01..0.1));
        MarketModel::new(rng.random_range(0.0..0.05), b, l).unwrap()
    }

    #[test]
    fn riskless_portfolio_has_zero_car_and_quantile_rt() {
        let market = scalar_market(0.2, 0.07, 0.03);
        let spec = RiskSpec::new(0.05, 2.0).unwrap();
        let pi = DVector::zeros(1);
        assert_eq!(capital_at_risk(&market, &pi, &spec), 0.0);
        assert_abs_diff_eq!(
            log_return_quantile(&market, &pi, &spec),
            0.03 * 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn scalar_quantile_direct_substitution() {
        // d = 1, sigma = 1, b = 0.1, r = 0, T = 1, pi = 1
        let market = scalar_market(1.0, 0.1, 0.0);
        let spec = RiskSpec::new(0.05, 1.0).unwrap();
        let pi = DVector::from_vec(vec![1.0]);
        let expected = 0.1 - 0.5 + spec.z_alpha();
        assert_abs_diff_eq!(log_return_quantile(&market, &pi, &spec), expected, epsilon = 1e-14);
    }

    #[test]
    fn car_plus_quantile_equals_rt() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = rng.random_range(1..=4usize);
            let market = random_market(&mut rng, d);
            let spec = RiskSpec::new(rng.random_range(0.01..0.49), rng.random_range(0.5..10.0))
                .unwrap();
            let pi = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let sum = capital_at_risk(&market, &pi, &spec)
                + log_return_quantile(&market, &pi, &spec);
            assert_abs_diff_eq!(sum, market.r() * spec.horizon(), epsilon = 1e-12);
        }
    }

    #[test]
    fn car_lower_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let market = random_market(&mut rng, 3);
            let spec = RiskSpec::new(0.05, 5.0).unwrap();
            let pi = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let car = capital_at_risk(&market, &pi, &spec);
            assert!(car >= -market.b().dot(&pi) * spec.horizon() - 1e-12);
        }
    }

    #[test]
    fn correlation_extremes_and_orthogonality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let market = random_market(&mut rng, 3);
        let eta = DVector::from_vec(vec![0.5, 0.3, 0.2]);
        assert_abs_diff_eq!(log_correlation(&market, &eta, &eta).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            log_correlation(&market, &(-&eta), &eta).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        // project a vector orthogonal to sigma sigma' eta
        let target = market.sigma() * market.vol_loading(&eta);
        let v = DVector::from_vec(vec![1.0, -0.4, 0.7]);
        let pi = &v - &target * (v.dot(&target) / target.norm_squared());
        assert_abs_diff_eq!(log_correlation(&market, &pi, &eta).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_bounded_by_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..500 {
            let d = rng.random_range(2..=4usize);
            let market = random_market(&mut rng, d);
            let pi = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let eta = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            if market.vol_norm(&pi) == 0.0 || market.vol_norm(&eta) == 0.0 {
                continue;
            }
            let c = log_correlation(&market, &pi, &eta).unwrap();
            assert!(c.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn correlation_undefined_at_zero() {
        let market = scalar_market(0.2, 0.07, 0.0);
        let err = log_correlation(&market, &DVector::zeros(1), &DVector::from_vec(vec![1.0]));
        assert!(matches!(err, Err(CarError::ZeroVolatilityPortfolio)));
        // but the homogeneous constraint form reports feasibility
        let g = correlation_constraint_value(
            &market,
            &DVector::zeros(1),
            &DVector::from_vec(vec![1.0]),
            0.9,
        );
        assert_eq!(g, 0.0);
    }

    #[test]
    fn wealth_law_riskless_and_scalar_cases() {
        let market = scalar_market(0.2, 0.07, 0.02);
        let spec = RiskSpec::new(0.05, 5.0).unwrap();
        let law = wealth_law(&market, &DVector::zeros(1), &spec, 1.0).unwrap();
        assert_abs_diff_eq!(law.mean, (0.02_f64 * 5.0).exp(), epsilon = 1e-14);
        assert_eq!(law.variance, 0.0);
        assert_eq!(law.log_variance, 0.0);

        let law = wealth_law(&market, &DVector::from_vec(vec![1.0]), &spec, 1.0).unwrap();
        assert_abs_diff_eq!(law.mean, 0.45_f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(law.log_variance, 5.0 * 0.04, epsilon = 1e-14);
    }

    #[test]
    fn wealth_law_rejects_nonpositive_wealth() {
        let market = scalar_market(0.2, 0.07, 0.02);
        let spec = RiskSpec::new(0.05, 5.0).unwrap();
        assert!(wealth_law(&market, &DVector::zeros(1), &spec, 0.0).is_err());
    }

    #[test]
    fn car_convex_in_radius_along_fixed_direction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let market = random_market(&mut rng, 3);
        let spec = RiskSpec::new(0.05, 5.0).unwrap();
        let dir = DVector::from_vec(vec![0.6, -0.2, 0.4]);
        let dir = &dir / market.vol_norm(&dir); // unit ellipse radius
        let f = |s: f64| capital_at_risk(&market, &(&dir * s), &spec);
        let h = 1e-4;
        for i in 1..50 {
            let s = 0.05 * i as f64;
            let second = (f(s + h) - 2.0 * f(s) + f(s - h)) / (h * h);
            assert!(second >= -1e-8, "second difference {second} at radius {s}");
        }
    }

    #[test]
    fn portfolio_vector_riskless_fraction() {
        let pi = PortfolioVector::new(DVector::from_vec(vec![0.3, 0.4])).unwrap();
        assert_abs_diff_eq!(pi.riskless_fraction(), 0.3, epsilon = 1e-15);
        assert!(PortfolioVector::new(DVector::from_vec(vec![f64::NAN])).is_err());
    }
}
