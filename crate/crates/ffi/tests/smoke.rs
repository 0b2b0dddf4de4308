//! Exercises the C ABI end to end through the exported functions.

use std::ffi::c_char;
use std::ptr;

use car_ffi::*;

const GAMMAS: [f64; 3] = [0.2, 0.25, 0.3];
const CORRELATION: [f64; 9] = [1.0, -0.3, 0.5, -0.3, 1.0, -0.9, 0.5, -0.9, 1.0];
const B: [f64; 3] = [0.03, 0.05, 0.07];

unsafe fn make_market() -> *mut CarMarket {
    let mut market = ptr::null_mut();
    let status = car_market_from_correlation(
        0.05,
        B.as_ptr(),
        GAMMAS.as_ptr(),
        CORRELATION.as_ptr(),
        3,
        &mut market,
    );
    assert_eq!(status, CarStatus::Ok);
    assert!(!market.is_null());
    market
}

#[test]
fn round_trip_unconstrained() {
    unsafe {
        let market = make_market();
        assert_eq!(car_market_asset_count(market), 3);

        let mut solution = ptr::null_mut();
        assert_eq!(
            car_solve_unconstrained(market, 0.05, 5.0, &mut solution),
            CarStatus::Ok
        );
        assert_eq!(car_solution_dim(solution), 3);

        let mut weights = [0.0f64; 3];
        assert_eq!(car_solution_weights(solution, weights.as_mut_ptr()), CarStatus::Ok);
        let car = car_solution_car(solution);
        assert!(car <= 0.0);
        assert!(!car_solution_binding(solution));
        let mut lambda = 0.0;
        assert!(!car_solution_lambda(solution, &mut lambda));

        // the reported CaR must match a direct evaluation at the weights
        let mut evaluated = f64::NAN;
        assert_eq!(
            car_evaluate(market, weights.as_ptr(), 0.05, 5.0, &mut evaluated),
            CarStatus::Ok
        );
        assert!((evaluated - car).abs() < 1e-12);

        car_solution_free(solution);
        car_market_free(market);
    }
}

#[test]
fn round_trip_constrained() {
    unsafe {
        let market = make_market();
        let mut solution = ptr::null_mut();
        assert_eq!(
            car_solve_constrained(market, 1, 0.05, 5.0, 0.3, &mut solution),
            CarStatus::Ok
        );
        let car = car_solution_car(solution);
        assert!(car <= 0.0);
        if car_solution_binding(solution) {
            let mut lambda = 0.0;
            assert!(car_solution_lambda(solution, &mut lambda));
            assert!(lambda > 0.0);
        }
        let frac = car_solution_riskless_fraction(solution);
        assert!(frac.is_finite());
        car_solution_free(solution);

        // the constrained optimum cannot beat the unconstrained one
        let mut unconstrained = ptr::null_mut();
        assert_eq!(
            car_solve_unconstrained(market, 0.05, 5.0, &mut unconstrained),
            CarStatus::Ok
        );
        assert!(car_solution_car(unconstrained) <= car + 1e-12);
        car_solution_free(unconstrained);
        car_market_free(market);
    }
}

#[test]
fn errors_and_messages() {
    unsafe {
        // invalid alpha
        let market = make_market();
        let mut solution = ptr::null_mut();
        assert_eq!(
            car_solve_unconstrained(market, 0.7, 5.0, &mut solution),
            CarStatus::InvalidInput
        );
        let mut buffer = [0 as c_char; 256];
        let len = car_last_error(buffer.as_mut_ptr(), buffer.len());
        assert!(len > 0);
        assert_eq!(buffer[..len.min(255)].iter().position(|&c| c == 0), None);

        // null pointers
        assert_eq!(
            car_solve_unconstrained(ptr::null(), 0.05, 5.0, &mut solution),
            CarStatus::NullPointer
        );
        assert_eq!(
            car_market_new(0.0, ptr::null(), ptr::null(), 2, &mut ptr::null_mut()),
            CarStatus::NullPointer
        );

        // non-positive-definite correlation
        let bad_corr = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mut bad = ptr::null_mut();
        let status = car_market_from_correlation(
            0.05,
            B.as_ptr(),
            GAMMAS.as_ptr(),
            bad_corr.as_ptr(),
            3,
            &mut bad,
        );
        assert_eq!(status, CarStatus::SingularMatrix);

        // invalid block split
        assert_eq!(
            car_solve_constrained(market, 3, 0.05, 5.0, 0.3, &mut solution),
            CarStatus::InvalidInput
        );

        car_market_free(market);
    }
}

#[test]
fn generated_header_covers_the_api() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/car.h"),
    )
    .expect("include/car.h is generated at build time");
    for symbol in [
        "car_market_new",
        "car_market_from_correlation",
        "car_market_asset_count",
        "car_market_free",
        "car_solve_unconstrained",
        "car_solve_constrained",
        "car_solution_dim",
        "car_solution_weights",
        "car_solution_car",
        "car_solution_riskless_fraction",
        "car_solution_binding",
        "car_solution_lambda",
        "car_solution_free",
        "car_evaluate",
        "car_last_error",
        "CarStatus",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
