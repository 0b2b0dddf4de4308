//! Monte Carlo verification of the closed-form quantile, moment and
//! correlation formulas. Terminal wealth is sampled exactly from its
//! lognormal law; no path discretization is involved.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};
use crate::market::{inverse_normal_cdf, MarketModel, RiskSpec};
use crate::risk::{log_correlation, log_return_quantile};

/// Paths per chunk; chunks map to independent RNG streams so parallel and
/// serial runs produce identical samples.
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// Confidence level of the distribution-free quantile band.
    pub confidence: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 1_000_000, seed: 42, confidence: 0.99 }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(CarError::InvalidInput("path count must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(CarError::InvalidInput(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

fn chunked_samples<T: Send>(
    paths: usize,
    seed: u64,
    body: impl Fn(&mut ChaCha8Rng, usize) -> Vec<T> + Sync,
) -> Vec<T> {
    let chunks = paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let n = CHUNK.min(paths - c * CHUNK);
            body(&mut rng, n)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// I.i.d. samples of `log X(T)` drawn from the exact terminal law
/// `log x + (r + b'pi - ||s'pi||^2/2) T + sqrt(T) (s'pi)'Z`.
pub fn mc_terminal_samples(
    market: &MarketModel,
    pi: &DVector<f64>,
    spec: &RiskSpec,
    x: f64,
    config: &McConfig,
) -> Result<Vec<f64>> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(CarError::InvalidInput(format!(
            "initial wealth must be positive, got {x}"
        )));
    }
    config.validate()?;
    let t = spec.horizon();
    let loading = market.vol_loading(pi);
    let base = x.ln() + (market.r() + market.b().dot(pi) - 0.5 * loading.norm_squared()) * t;
    let sqrt_t = t.sqrt();
    let d = market.asset_count();
    Ok(chunked_samples(config.paths, config.seed, |rng, n| {
        (0..n)
            .map(|_| {
                let mut shock = 0.0;
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    shock += loading[k] * z;
                }
                base + sqrt_t * shock
            })
            .collect()
    }))
}

/// Paired samples of `(log X(T), log Y(T))` driven by the same Brownian draw
/// per path, for the correlation check.
pub fn mc_paired_samples(
    market: &MarketModel,
    pi: &DVector<f64>,
    eta: &DVector<f64>,
    spec: &RiskSpec,
    config: &McConfig,
) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let t = spec.horizon();
    let lp = market.vol_loading(pi);
    let le = market.vol_loading(eta);
    let base_x = (market.r() + market.b().dot(pi) - 0.5 * lp.norm_squared()) * t;
    let base_y = (market.r() + market.b().dot(eta) - 0.5 * le.norm_squared()) * t;
    let sqrt_t = t.sqrt();
    let d = market.asset_count();
    Ok(chunked_samples(config.paths, config.seed, |rng, n| {
        (0..n)
            .map(|_| {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for k in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    sx += lp[k] * z;
                    sy += le[k] * z;
                }
                (base_x + sqrt_t * sx, base_y + sqrt_t * sy)
            })
            .collect()
    }))
}

/// Result of comparing the closed-form log-return quantile against the
/// order-statistic estimate with a Dvoretzky-Kiefer-Wolfowitz band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuantileCheck {
    pub empirical: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub closed_form: f64,
    pub pass: bool,
}

pub fn mc_quantile_check(
    market: &MarketModel,
    pi: &DVector<f64>,
    spec: &RiskSpec,
    x: f64,
    config: &McConfig,
) -> Result<QuantileCheck> {
    let mut log_returns: Vec<f64> = mc_terminal_samples(market, pi, spec, x, config)?
        .into_iter()
        .map(|lw| lw - x.ln())
        .collect();
    log_returns.sort_by(f64::total_cmp);
    let n = log_returns.len();
    let alpha = spec.alpha();

    // DKW: P(sup |F_n - F| > e) <= 2 exp(-2 n e^2)
    let eps = ((2.0 / (1.0 - config.confidence)).ln() / (2.0 * n as f64)).sqrt();
    let idx = |p: f64| -> usize {
        ((p * n as f64).ceil() as usize).clamp(1, n) - 1
    };
    let empirical = log_returns[idx(alpha)];
    let band_low = log_returns[idx((alpha - eps).max(0.0).max(1e-12))];
    let band_high = log_returns[idx((alpha + eps).min(1.0))];
    let closed_form = log_return_quantile(market, pi, spec);
    Ok(QuantileCheck {
        empirical,
        band_low,
        band_high,
        closed_form,
        pass: closed_form >= band_low && closed_form <= band_high,
    })
}

/// Result of comparing sample moments of `X(T)` and `log X(T)` against the
/// closed forms, using 4-standard-error bands.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentCheck {
    pub sample_log_mean: f64,
    pub expected_log_mean: f64,
    pub sample_log_variance: f64,
    pub expected_log_variance: f64,
    pub pass: bool,
}

pub fn mc_moment_check(
    market: &MarketModel,
    pi: &DVector<f64>,
    spec: &RiskSpec,
    x: f64,
    config: &McConfig,
) -> Result<MomentCheck> {
    let samples = mc_terminal_samples(market, pi, spec, x, config)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);

    let t = spec.horizon();
    let eps2 = market.vol_loading(pi).norm_squared();
    let expected_mean = x.ln() + (market.r() + market.b().dot(pi) - 0.5 * eps2) * t;
    let expected_var = t * eps2;

    let se_mean = (var / n).sqrt();
    let se_var = var * (2.0 / (n - 1.0)).sqrt();
    let pass = (mean - expected_mean).abs() <= 4.0 * se_mean.max(1e-15)
        && (var - expected_var).abs() <= 4.0 * se_var.max(1e-15);
    Ok(MomentCheck {
        sample_log_mean: mean,
        expected_log_mean: expected_mean,
        sample_log_variance: var,
        expected_log_variance: expected_var,
        pass,
    })
}

/// Result of comparing the Pearson correlation of paired terminal log values
/// against the closed form, via a Fisher-z confidence band.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationCheck {
    pub sample: f64,
    pub closed_form: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub pass: bool,
}

pub fn mc_correlation_check(
    market: &MarketModel,
    pi: &DVector<f64>,
    eta: &DVector<f64>,
    spec: &RiskSpec,
    config: &McConfig,
) -> Result<CorrelationCheck> {
    let closed_form = log_correlation(market, pi, eta)?;
    let pairs = mc_paired_samples(market, pi, eta, spec, config)?;
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    let sample = sxy / (sxx * syy).sqrt();

    // Degenerate correlations +-1 have no sampling noise.
    if closed_form.abs() >= 1.0 - 1e-12 {
        let pass = (sample - closed_form).abs() <= 1e-8;
        return Ok(CorrelationCheck {
            sample,
            closed_form,
            band_low: closed_form,
            band_high: closed_form,
            pass,
        });
    }

    let mult = inverse_normal_cdf(0.5 + config.confidence / 2.0)?;
    let se = 1.0 / (n - 3.0).sqrt();
    let z_sample = sample.atanh();
    let band_low = (z_sample - mult * se).tanh();
    let band_high = (z_sample + mult * se).tanh();
    Ok(CorrelationCheck {
        sample,
        closed_form,
        band_low,
        band_high,
        pass: closed_form >= band_low && closed_form <= band_high,
    })
}
