//! Black-Scholes market descriptions: volatility matrices built from
//! correlation data, block-partitioned markets and the growth-optimal
//! benchmark portfolio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CarError, Result};

/// Relative pivot tolerance used when rejecting non-positive-definite or
/// numerically singular matrices.
pub const PIVOT_TOL: f64 = 1e-12;

/// A frictionless market with one riskless asset and `d` risky assets whose
/// prices follow correlated geometric Brownian motions with constant
/// coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketModel {
    r: f64,
    b: DVector<f64>,
    sigma: DMatrix<f64>,
}

impl MarketModel {
    /// Builds a market, requiring every excess return to be strictly positive
    /// and the volatility matrix to be invertible.
    pub fn new(r: f64, b: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if b.iter().any(|&bi| bi <= 0.0) {
            return Err(CarError::InvalidInput(
                "every excess return must be strictly positive".into(),
            ));
        }
        Self::new_relaxed(r, b, sigma)
    }

    /// Like [`MarketModel::new`] but without the sign restriction on `b`.
    /// The constrained solver still requires the benchmark excess return
    /// `b'eta` to be positive; this constructor is an extension for markets
    /// where individual assets may have nonpositive excess returns.
    pub fn new_relaxed(r: f64, b: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(CarError::InvalidInput("need at least one risky asset".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(CarError::DimensionMismatch(format!(
                "b has length {d} but sigma is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if !is_invertible(&sigma) {
            return Err(CarError::SingularMatrix);
        }
        Ok(Self { r, b, sigma })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn asset_count(&self) -> usize {
        self.b.len()
    }

    /// `sigma' pi`, the volatility loading of a portfolio.
    pub fn vol_loading(&self, pi: &DVector<f64>) -> DVector<f64> {
        self.sigma.transpose() * pi
    }

    /// `||sigma' pi||`.
    pub fn vol_norm(&self, pi: &DVector<f64>) -> f64 {
        self.vol_loading(pi).norm()
    }

    /// `sigma^{-1} b`, computed by an LU solve.
    pub fn sigma_inv_b(&self) -> DVector<f64> {
        self.solve_sigma(&self.b)
    }

    /// `(sigma sigma')^{-1} b`, the Merton direction.
    pub fn merton_direction(&self) -> DVector<f64> {
        let y = self.solve_sigma(&self.b);
        self.solve_sigma_transpose(&y)
    }

    /// Solves `sigma x = rhs`.
    pub fn solve_sigma(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.sigma
            .clone()
            .lu()
            .solve(rhs)
            .expect("sigma invertibility checked at construction")
    }

    /// Solves `sigma' x = rhs`.
    pub fn solve_sigma_transpose(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.sigma
            .transpose()
            .lu()
            .solve(rhs)
            .expect("sigma invertibility checked at construction")
    }
}

/// Confidence level and horizon for the risk measurement, together with the
/// derived standard-normal quantile `z_alpha`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RiskSpec {
    alpha: f64,
    horizon: f64,
    z_alpha: f64,
}

impl RiskSpec {
    /// `alpha` must lie in `(0, 0.5)` so that `z_alpha < 0`; `horizon` is in
    /// years and must be positive.
    pub fn new(alpha: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CarError::InvalidInput(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let z_alpha = normal_quantile(alpha)?;
        Ok(Self { alpha, horizon, z_alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn z_alpha(&self) -> f64 {
        self.z_alpha
    }
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF on (0, 1): rational-approximation initial
/// guess refined by one Halley step against [`std_normal_cdf`].
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CarError::OutOfRange(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let x = acklam_guess(p);
    // Halley refinement: e is the CDF error, u the Newton step.
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// The quantile `z_alpha` under the standing assumption `alpha < 0.5`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(CarError::OutOfRange(format!(
            "confidence level must lie in (0, 0.5), got {alpha}"
        )));
    }
    inverse_normal_cdf(alpha)
}

// Peter Acklam's rational approximation, |relative error| < 1.15e-9.
fn acklam_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// rejecting pivots below `PIVOT_TOL * max(diag)`.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CarError::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            n,
            a.ncols()
        )));
    }
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = PIVOT_TOL * max_diag;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= tol {
            return Err(CarError::NotPositiveDefinite { row: j, pivot });
        }
        l[(j, j)] = pivot.sqrt();
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(l)
}

/// Builds the lower-triangular volatility matrix from per-asset return
/// standard deviations and a correlation matrix, so that
/// `L L' = diag(gamma) rho diag(gamma)`.
pub fn build_volatility_from_correlation(
    gammas: &[f64],
    rho: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = gammas.len();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(CarError::DimensionMismatch(format!(
            "{} standard deviations but correlation is {}x{}",
            d,
            rho.nrows(),
            rho.ncols()
        )));
    }
    if gammas.iter().any(|&g| g <= 0.0) {
        return Err(CarError::InvalidInput(
            "standard deviations must be strictly positive".into(),
        ));
    }
    for i in 0..d {
        if (rho[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(CarError::InvalidInput("correlation diagonal must be 1".into()));
        }
        for j in 0..d {
            let e = rho[(i, j)];
            if (e - rho[(j, i)]).abs() > 1e-12 || e.abs() > 1.0 + 1e-12 {
                return Err(CarError::InvalidInput(
                    "correlation matrix must be symmetric with entries in [-1, 1]".into(),
                ));
            }
        }
    }
    let cov = DMatrix::from_fn(d, d, |i, j| gammas[i] * rho[(i, j)] * gammas[j]);
    cholesky_lower(&cov)
}

/// A market whose volatility matrix is block lower-triangular: the first `m`
/// assets load only on the first `m` Brownian components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockMarket {
    m: usize,
    sigma11: DMatrix<f64>,
    sigma21: DMatrix<f64>,
    sigma22: DMatrix<f64>,
    b1: DVector<f64>,
    b2: DVector<f64>,
    r: f64,
}

impl BlockMarket {
    pub fn new(
        sigma11: DMatrix<f64>,
        sigma21: DMatrix<f64>,
        sigma22: DMatrix<f64>,
        b1: DVector<f64>,
        b2: DVector<f64>,
        r: f64,
    ) -> Result<Self> {
        let m = sigma11.nrows();
        let k = sigma22.nrows();
        if m == 0 || k == 0 {
            return Err(CarError::DimensionMismatch(
                "both asset groups must be nonempty (1 <= m < d)".into(),
            ));
        }
        if sigma11.ncols() != m || sigma22.ncols() != k {
            return Err(CarError::DimensionMismatch(
                "diagonal blocks must be square".into(),
            ));
        }
        if sigma21.nrows() != k || sigma21.ncols() != m {
            return Err(CarError::DimensionMismatch(format!(
                "sigma21 must be {}x{}, got {}x{}",
                k,
                m,
                sigma21.nrows(),
                sigma21.ncols()
            )));
        }
        if b1.len() != m || b2.len() != k {
            return Err(CarError::DimensionMismatch(
                "excess return blocks must match the partition".into(),
            ));
        }
        if !is_invertible(&sigma11) {
            return Err(CarError::SingularBlock("sigma11"));
        }
        if !is_invertible(&sigma22) {
            return Err(CarError::SingularBlock("sigma22"));
        }
        Ok(Self { m, sigma11, sigma21, sigma22, b1, b2, r })
    }

    /// Splits a full lower-triangular volatility matrix and excess-return
    /// vector at position `m`. The upper-right `m x (d-m)` block must vanish.
    pub fn from_full(sigma: &DMatrix<f64>, b: &DVector<f64>, r: f64, m: usize) -> Result<Self> {
        let d = sigma.nrows();
        if m == 0 || m >= d {
            return Err(CarError::DimensionMismatch(format!(
                "partition must satisfy 1 <= m < d, got m = {m}, d = {d}"
            )));
        }
        let k = d - m;
        for i in 0..m {
            for j in m..d {
                if sigma[(i, j)] != 0.0 {
                    return Err(CarError::InvalidInput(
                        "upper-right block of the volatility matrix must be zero".into(),
                    ));
                }
            }
        }
        Self::new(
            sigma.view((0, 0), (m, m)).into_owned(),
            sigma.view((m, 0), (k, m)).into_owned(),
            sigma.view((m, m), (k, k)).into_owned(),
            b.rows(0, m).into_owned(),
            b.rows(m, k).into_owned(),
            r,
        )
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn asset_count(&self) -> usize {
        self.m + self.sigma22.nrows()
    }

    pub fn sigma11(&self) -> &DMatrix<f64> {
        &self.sigma11
    }

    pub fn sigma21(&self) -> &DMatrix<f64> {
        &self.sigma21
    }

    pub fn sigma22(&self) -> &DMatrix<f64> {
        &self.sigma22
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Assembles the full volatility matrix `[[s11, 0], [s21, s22]]`.
    pub fn full_sigma(&self) -> DMatrix<f64> {
        let (m, k) = (self.m, self.sigma22.nrows());
        let d = m + k;
        let mut sigma = DMatrix::zeros(d, d);
        sigma.view_mut((0, 0), (m, m)).copy_from(&self.sigma11);
        sigma.view_mut((m, 0), (k, m)).copy_from(&self.sigma21);
        sigma.view_mut((m, m), (k, k)).copy_from(&self.sigma22);
        sigma
    }

    pub fn full_b(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.asset_count());
        b.rows_mut(0, self.m).copy_from(&self.b1);
        b.rows_mut(self.m, self.b2.len()).copy_from(&self.b2);
        b
    }

    /// Flattens into a general [`MarketModel`].
    pub fn flatten(&self) -> Result<MarketModel> {
        MarketModel::new_relaxed(self.r, self.full_b(), self.full_sigma())
    }

    /// The explicit block inverse `[[s11^-1, 0], [-s22^-1 s21 s11^-1, s22^-1]]`.
    pub fn block_inverse(&self) -> DMatrix<f64> {
        let inv11 = invert(&self.sigma11);
        let inv22 = invert(&self.sigma22);
        let lower_left = -&inv22 * &self.sigma21 * &inv11;
        let (m, k) = (self.m, self.sigma22.nrows());
        let d = m + k;
        let mut inv = DMatrix::zeros(d, d);
        inv.view_mut((0, 0), (m, m)).copy_from(&inv11);
        inv.view_mut((m, 0), (k, m)).copy_from(&lower_left);
        inv.view_mut((m, m), (k, k)).copy_from(&inv22);
        inv
    }

    /// `theta_1 = ||s11^-1 b1||`, the market price of risk of the first-type
    /// stocks.
    pub fn theta1(&self) -> f64 {
        solve(&self.sigma11, &self.b1).norm()
    }

    /// `theta_2 = ||s22^-1 b2 - s22^-1 s21 s11^-1 b1||`.
    pub fn theta2(&self) -> f64 {
        let u = solve(&self.sigma11, &self.b1);
        let rhs = &self.b2 - &self.sigma21 * u;
        solve(&self.sigma22, &rhs).norm()
    }

    /// Replaces the scalar first block volatility; only defined for `m = 1`.
    pub fn with_scalar_sigma11(&self, sigma11: f64) -> Result<Self> {
        if self.m != 1 {
            return Err(CarError::UnsupportedPartition(
                "scalar sigma11 override requires m = 1".into(),
            ));
        }
        if sigma11 <= 0.0 {
            return Err(CarError::InvalidInput("sigma11 must be positive".into()));
        }
        let mut out = self.clone();
        out.sigma11[(0, 0)] = sigma11;
        Ok(out)
    }
}

/// A target/index portfolio together with the derived quantities used by the
/// constrained solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkPortfolio {
    eta: DVector<f64>,
    vol_norm: f64,
    excess_return: f64,
}

impl BenchmarkPortfolio {
    /// Validates `b'eta > 0` and caches `||sigma' eta||` and `b'eta`.
    pub fn new(market: &MarketModel, eta: DVector<f64>) -> Result<Self> {
        if eta.len() != market.asset_count() {
            return Err(CarError::DimensionMismatch(format!(
                "benchmark has {} weights for {} assets",
                eta.len(),
                market.asset_count()
            )));
        }
        let excess_return = market.b().dot(&eta);
        if excess_return <= 0.0 {
            return Err(CarError::DegenerateBenchmark);
        }
        let vol_norm = market.vol_norm(&eta);
        Ok(Self { eta, vol_norm, excess_return })
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    /// `||sigma' eta||`.
    pub fn vol_norm(&self) -> f64 {
        self.vol_norm
    }

    /// `b'eta`.
    pub fn excess_return(&self) -> f64 {
        self.excess_return
    }
}

/// The growth-optimal portfolio of the first-type stocks, the inverse of
/// their pricing kernel: `eta' = [((s11 s11')^{-1} b1)', 0]`.
pub fn growth_optimal_benchmark(block: &BlockMarket) -> Result<BenchmarkPortfolio> {
    if block.b1().norm() == 0.0 {
        return Err(CarError::DegenerateBenchmark);
    }
    let theta = solve(block.sigma11(), block.b1());
    let head = solve_transpose(block.sigma11(), &theta);
    let mut eta = DVector::zeros(block.asset_count());
    eta.rows_mut(0, block.m()).copy_from(&head);
    BenchmarkPortfolio::new(&block.flatten()?, eta)
}

fn is_invertible(a: &DMatrix<f64>) -> bool {
    let max_entry = a.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    if max_entry == 0.0 || !max_entry.is_finite() {
        return false;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    (0..a.nrows()).all(|i| u[(i, i)].abs() > PIVOT_TOL * max_entry)
}

fn invert(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone()
        .lu()
        .try_inverse()
        .expect("invertibility checked at construction")
}

fn solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .lu()
        .solve(rhs)
        .expect("invertibility checked at construction")
}

fn solve_transpose(a: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    a.transpose()
        .lu()
        .solve(rhs)
        .expect("invertibility checked at construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Independent oracle: erf by Taylor series, then bisection on the CDF.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn cdf_series(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    fn quantile_bisect(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_series(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        for &alpha in &[0.001, 0.01, 0.05, 0.1, 0.25, 0.49] {
            let z = normal_quantile(alpha).unwrap();
            assert_abs_diff_eq!(z, quantile_bisect(alpha), epsilon = 1e-10);
            assert!(z < 0.0);
            assert!((std_normal_cdf(z) - alpha).abs() <= 1e-10);
        }
        // frozen from the bisection oracle
        assert_abs_diff_eq!(normal_quantile(0.05).unwrap(), -1.6449, epsilon = 5e-5);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        assert!(matches!(normal_quantile(0.5), Err(CarError::OutOfRange(_))));
        assert!(matches!(normal_quantile(0.0), Err(CarError::OutOfRange(_))));
        assert!(matches!(normal_quantile(0.7), Err(CarError::OutOfRange(_))));
    }

    #[test]
    fn quantile_approaches_zero_from_below() {
        let z = normal_quantile(0.4999999).unwrap();
        assert!(z < 0.0 && z > -1e-5);
    }

    #[test]
    fn inverse_cdf_antisymmetric_and_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let z = inverse_normal_cdf(p).unwrap();
            assert!(z > prev);
            prev = z;
            let z_mirror = inverse_normal_cdf(1.0 - p).unwrap();
            assert_abs_diff_eq!(z, -z_mirror, epsilon = 1e-12);
        }
    }

    fn dataset_gammas() -> Vec<f64> {
        vec![0.2, 0.25, 0.3]
    }

    pub(crate) fn rho1() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, -0.6, -0.8, -0.6, 1.0, 0.5, -0.8, 0.5, 1.0])
    }

    pub(crate) fn rho2() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, -0.3, 0.5, -0.3, 1.0, -0.9, 0.5, -0.9, 1.0])
    }

    #[test]
    fn cholesky_identity_correlation_is_diagonal() {
        let sigma =
            build_volatility_from_correlation(&dataset_gammas(), &DMatrix::identity(3, 3)).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(dataset_gammas()));
        assert!((sigma - expected).abs().max() < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs_dataset_covariances() {
        let gammas = dataset_gammas();
        for rho in [rho1(), rho2()] {
            let sigma = build_volatility_from_correlation(&gammas, &rho).unwrap();
            // lower triangular
            for i in 0..3 {
                for j in (i + 1)..3 {
                    assert_eq!(sigma[(i, j)], 0.0);
                }
            }
            let cov = DMatrix::from_fn(3, 3, |i, j| gammas[i] * rho[(i, j)] * gammas[j]);
            let resid = (&sigma * sigma.transpose() - cov).abs().max();
            assert!(resid <= 1e-12, "residual {resid}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        // perfectly correlated -> singular, pivot hits the tolerance
        let err = build_volatility_from_correlation(&[0.1, 0.2], &rho).unwrap_err();
        assert!(matches!(err, CarError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn cholesky_rejects_dimension_mismatch() {
        let err = build_volatility_from_correlation(&[0.1, 0.2], &DMatrix::identity(3, 3));
        assert!(matches!(err, Err(CarError::DimensionMismatch(_))));
    }

    #[test]
    fn market_rejects_nonpositive_excess_returns() {
        let err = MarketModel::new(
            0.0,
            DVector::from_vec(vec![0.1, -0.1]),
            DMatrix::identity(2, 2),
        );
        assert!(matches!(err, Err(CarError::InvalidInput(_))));
        assert!(MarketModel::new_relaxed(
            0.0,
            DVector::from_vec(vec![0.1, -0.1]),
            DMatrix::identity(2, 2)
        )
        .is_ok());
    }

    #[test]
    fn market_rejects_singular_sigma() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = MarketModel::new(0.0, DVector::from_vec(vec![0.1, 0.1]), sigma);
        assert!(matches!(err, Err(CarError::SingularMatrix)));
    }

    #[test]
    fn block_inverse_diagonal_case() {
        let block = BlockMarket::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5])),
            DMatrix::zeros(2, 1),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.2])),
            DVector::from_vec(vec![0.05]),
            DVector::from_vec(vec![0.04, 0.03]),
            0.02,
        )
        .unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 5.0]));
        assert!((block.block_inverse() - expected).abs().max() < 1e-14);
    }

    #[test]
    fn block_inverse_matches_formula_on_dataset_one() {
        let sigma = build_volatility_from_correlation(&dataset_gammas(), &rho1()).unwrap();
        let b = DVector::from_vec(vec![0.07, 0.05, 0.03]);
        let block = BlockMarket::from_full(&sigma, &b, 0.02, 1).unwrap();
        let product = &sigma * block.block_inverse();
        assert!((product - DMatrix::identity(3, 3)).abs().max() <= 1e-12);
    }

    #[test]
    fn block_partition_must_leave_second_type_nonempty() {
        let sigma = build_volatility_from_correlation(&dataset_gammas(), &rho1()).unwrap();
        let b = DVector::from_vec(vec![0.07, 0.05, 0.03]);
        let err = BlockMarket::from_full(&sigma, &b, 0.02, 3);
        assert!(matches!(err, Err(CarError::DimensionMismatch(_))));
    }

    #[test]
    fn growth_optimal_scalar_case() {
        let block = BlockMarket::new(
            DMatrix::from_element(1, 1, 0.2),
            DMatrix::zeros(2, 1),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.3])),
            DVector::from_vec(vec![0.07]),
            DVector::from_vec(vec![0.05, 0.03]),
            0.02,
        )
        .unwrap();
        let bench = growth_optimal_benchmark(&block).unwrap();
        let eta = bench.eta();
        assert_abs_diff_eq!(eta[0], 1.75, epsilon = 1e-14);
        assert_eq!(eta[1], 0.0);
        assert_eq!(eta[2], 0.0);
    }

    fn check_benchmark_identities(rho: DMatrix<f64>, b: Vec<f64>) {
        let sigma = build_volatility_from_correlation(&dataset_gammas(), &rho).unwrap();
        let b = DVector::from_vec(b);
        let block = BlockMarket::from_full(&sigma, &b, 0.02, 1).unwrap();
        let market = block.flatten().unwrap();
        let bench = growth_optimal_benchmark(&block).unwrap();

        let theta1 = block.theta1();
        let theta2 = block.theta2();
        assert!((bench.vol_norm() - theta1).abs() / theta1 <= 1e-10);
        assert!((bench.excess_return() - theta1 * theta1).abs() / (theta1 * theta1) <= 1e-10);

        let sib = market.sigma_inv_b().norm_squared();
        let lhs = (sib * bench.vol_norm().powi(2) - bench.excess_return().powi(2)).sqrt();
        let rhs = theta1 * theta2;
        assert!((lhs - rhs).abs() / rhs <= 1e-10);
    }

    #[test]
    fn growth_optimal_identities_on_bundled_datasets() {
        check_benchmark_identities(rho1(), vec![0.07, 0.05, 0.03]);
        check_benchmark_identities(rho2(), vec![0.03, 0.05, 0.07]);
    }

    #[test]
    fn growth_optimal_identities_randomized() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let d = rng.random_range(2..=4usize);
            let m = rng.random_range(1..d);
            let mut a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            a = &a * a.transpose() + DMatrix::identity(d, d) * 0.2;
            let l = match cholesky_lower(&a) {
                Ok(l) => l,
                Err(_) => continue,
            };
            let b = DVector::from_fn(d, |_, _| rng.random_range(0.01..0.1));
            let block = match BlockMarket::from_full(&l, &b, 0.02, m) {
                Ok(bl) => bl,
                Err(_) => continue,
            };
            let market = block.flatten().unwrap();
            let bench = growth_optimal_benchmark(&block).unwrap();
            let theta1 = block.theta1();
            let theta2 = block.theta2();
            assert!((bench.vol_norm() - theta1).abs() / theta1 <= 1e-10);
            assert!(
                (bench.excess_return() - theta1 * theta1).abs() / (theta1 * theta1) <= 1e-10
            );
            let sib = market.sigma_inv_b().norm_squared();
            let lhs = (sib * theta1 * theta1 - theta1.powi(4)).max(0.0).sqrt();
            let rhs = theta1 * theta2;
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
            checked += 1;
        }
    }
}
