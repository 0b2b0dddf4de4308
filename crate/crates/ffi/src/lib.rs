//! C ABI over the capital-at-risk solvers. Handles are opaque pointers owned
//! by the caller and released with the matching `*_free` function; every
//! fallible call returns a `CarStatus` and leaves a message retrievable with
//! `car_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::ptr;

use nalgebra::{DMatrix, DVector};

use car_core::market::{growth_optimal_benchmark, BlockMarket};
use car_core::{
    build_volatility_from_correlation, capital_at_risk, solve_pricing_kernel, solve_unconstrained,
    CarError, MarketModel, PortfolioSolution, RiskSpec,
};

/// Result code for every fallible call in this API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    SingularMatrix = 3,
    Degenerate = 4,
    NoConvergence = 5,
}

/// Opaque market handle.
pub struct CarMarket {
    inner: MarketModel,
}

/// Opaque solution handle.
pub struct CarSolution {
    inner: PortfolioSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(err: &CarError) -> CarStatus {
    match err {
        CarError::NotPositiveDefinite { .. }
        | CarError::SingularMatrix
        | CarError::SingularBlock(_) => CarStatus::SingularMatrix,
        CarError::DegenerateBenchmark | CarError::DegenerateDirection => CarStatus::Degenerate,
        CarError::NoConvergence(_) => CarStatus::NoConvergence,
        _ => CarStatus::InvalidInput,
    }
}

fn fail(err: CarError) -> CarStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null_arg(name: &str) -> CarStatus {
    set_error(format!("{name} must not be null"));
    CarStatus::NullPointer
}

/// Copies the most recent error message on this thread into `buffer`
/// (NUL-terminated, truncated to `capacity`). Returns the full message
/// length in bytes, or 0 when no error has occurred.
///
/// # Safety
/// `buffer` must point to at least `capacity` writable bytes, or be null
/// (in which case only the length is reported).
#[no_mangle]
pub unsafe extern "C" fn car_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let borrow = slot.borrow();
        let Some(message) = borrow.as_ref() else { return 0 };
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Creates a market from a riskless rate, `d` appreciation-rate spreads over
/// the riskless rate, and a row-major `d x d` volatility matrix.
///
/// # Safety
/// `b` must point to `d` doubles, `sigma` to `d * d` doubles, and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn car_market_new(
    r: f64,
    b: *const f64,
    sigma: *const f64,
    d: usize,
    out: *mut *mut CarMarket,
) -> CarStatus {
    if out.is_null() {
        return null_arg("out");
    }
    if b.is_null() {
        return null_arg("b");
    }
    if sigma.is_null() {
        return null_arg("sigma");
    }
    let b = DVector::from_column_slice(std::slice::from_raw_parts(b, d));
    let sigma = DMatrix::from_row_slice(d, d, std::slice::from_raw_parts(sigma, d * d));
    match MarketModel::new(r, b, sigma) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CarMarket { inner }));
            CarStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Creates a market from per-asset volatilities and a row-major correlation
/// matrix; the volatility matrix is the Cholesky factor of the implied
/// covariance.
///
/// # Safety
/// `b` and `vols` must point to `d` doubles, `correlation` to `d * d`
/// doubles, and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn car_market_from_correlation(
    r: f64,
    b: *const f64,
    vols: *const f64,
    correlation: *const f64,
    d: usize,
    out: *mut *mut CarMarket,
) -> CarStatus {
    if out.is_null() {
        return null_arg("out");
    }
    if b.is_null() || vols.is_null() || correlation.is_null() {
        return null_arg("b/vols/correlation");
    }
    let b = DVector::from_column_slice(std::slice::from_raw_parts(b, d));
    let vols = std::slice::from_raw_parts(vols, d);
    let corr = DMatrix::from_row_slice(d, d, std::slice::from_raw_parts(correlation, d * d));
    let sigma = match build_volatility_from_correlation(vols, &corr) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match MarketModel::new(r, b, sigma) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CarMarket { inner }));
            CarStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of risky assets in the market.
///
/// # Safety
/// `market` must be a live handle from `car_market_new` or
/// `car_market_from_correlation`.
#[no_mangle]
pub unsafe extern "C" fn car_market_asset_count(market: *const CarMarket) -> usize {
    if market.is_null() {
        return 0;
    }
    (*market).inner.asset_count()
}

/// Releases a market handle. Null is ignored.
///
/// # Safety
/// `market` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn car_market_free(market: *mut CarMarket) {
    if !market.is_null() {
        drop(Box::from_raw(market));
    }
}

/// Minimizes capital at risk without a correlation constraint.
///
/// # Safety
/// `market` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn car_solve_unconstrained(
    market: *const CarMarket,
    alpha: f64,
    horizon: f64,
    out: *mut *mut CarSolution,
) -> CarStatus {
    if market.is_null() {
        return null_arg("market");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let spec = match RiskSpec::new(alpha, horizon) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let inner = solve_unconstrained(&(*market).inner, &spec);
    *out = Box::into_raw(Box::new(CarSolution { inner }));
    CarStatus::Ok
}

/// Minimizes capital at risk subject to a log-return correlation with the
/// growth-optimal index of the first `m` assets of at most `-delta`.
///
/// # Safety
/// `market` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn car_solve_constrained(
    market: *const CarMarket,
    m: usize,
    alpha: f64,
    horizon: f64,
    delta: f64,
    out: *mut *mut CarSolution,
) -> CarStatus {
    if market.is_null() {
        return null_arg("market");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &(*market).inner;
    let spec = match RiskSpec::new(alpha, horizon) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let block = match BlockMarket::from_full(model.sigma(), model.b(), model.r(), m) {
        Ok(b) => b,
        Err(e) => return fail(e),
    };
    if let Err(e) = growth_optimal_benchmark(&block) {
        return fail(e);
    }
    match solve_pricing_kernel(&block, &spec, delta) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CarSolution { inner }));
            CarStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of weights in the solution.
///
/// # Safety
/// `solution` must be a live handle from a solve call.
#[no_mangle]
pub unsafe extern "C" fn car_solution_dim(solution: *const CarSolution) -> usize {
    if solution.is_null() {
        return 0;
    }
    (*solution).inner.pi.len()
}

/// Copies the optimal risky-asset weights into `weights`.
///
/// # Safety
/// `solution` must be a live handle and `weights` must point to at least
/// `car_solution_dim(solution)` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn car_solution_weights(
    solution: *const CarSolution,
    weights: *mut f64,
) -> CarStatus {
    if solution.is_null() {
        return null_arg("solution");
    }
    if weights.is_null() {
        return null_arg("weights");
    }
    let pi = &(*solution).inner.pi;
    ptr::copy_nonoverlapping(pi.as_slice().as_ptr(), weights, pi.len());
    CarStatus::Ok
}

/// Minimal capital at risk attained by the solution.
///
/// # Safety
/// `solution` must be a live handle from a solve call.
#[no_mangle]
pub unsafe extern "C" fn car_solution_car(solution: *const CarSolution) -> f64 {
    if solution.is_null() {
        return f64::NAN;
    }
    (*solution).inner.car
}

/// Fraction of wealth left in the riskless asset.
///
/// # Safety
/// `solution` must be a live handle from a solve call.
#[no_mangle]
pub unsafe extern "C" fn car_solution_riskless_fraction(solution: *const CarSolution) -> f64 {
    if solution.is_null() {
        return f64::NAN;
    }
    (*solution).inner.riskless_fraction()
}

/// Whether the correlation constraint binds at the optimum. Always false for
/// unconstrained solutions.
///
/// # Safety
/// `solution` must be a live handle from a solve call.
#[no_mangle]
pub unsafe extern "C" fn car_solution_binding(solution: *const CarSolution) -> bool {
    if solution.is_null() {
        return false;
    }
    (*solution).inner.binding
}

/// Writes the constraint multiplier into `lambda` and returns true when the
/// solution carries one.
///
/// # Safety
/// `solution` must be a live handle and `lambda` must point to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn car_solution_lambda(
    solution: *const CarSolution,
    lambda: *mut f64,
) -> bool {
    if solution.is_null() || lambda.is_null() {
        return false;
    }
    match (*solution).inner.lambda {
        Some(value) => {
            *lambda = value;
            true
        }
        None => false,
    }
}

/// Releases a solution handle. Null is ignored.
///
/// # Safety
/// `solution` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn car_solution_free(solution: *mut CarSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Evaluates capital at risk for an arbitrary constant-proportion portfolio.
///
/// # Safety
/// `market` must be a live handle, `weights` must point to
/// `car_market_asset_count(market)` doubles, and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn car_evaluate(
    market: *const CarMarket,
    weights: *const f64,
    alpha: f64,
    horizon: f64,
    out: *mut f64,
) -> CarStatus {
    if market.is_null() {
        return null_arg("market");
    }
    if weights.is_null() {
        return null_arg("weights");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &(*market).inner;
    let spec = match RiskSpec::new(alpha, horizon) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let pi = DVector::from_column_slice(std::slice::from_raw_parts(
        weights,
        model.asset_count(),
    ));
    *out = capital_at_risk(model, &pi, &spec);
    CarStatus::Ok
}
