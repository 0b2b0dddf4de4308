#ifndef CAR_H
#define CAR_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code for every fallible call in this API.
typedef enum CarStatus {
  CAR_STATUS_OK = 0,
  CAR_STATUS_NULL_POINTER = 1,
  CAR_STATUS_INVALID_INPUT = 2,
  CAR_STATUS_SINGULAR_MATRIX = 3,
  CAR_STATUS_DEGENERATE = 4,
  CAR_STATUS_NO_CONVERGENCE = 5,
} CarStatus;

// Opaque market handle.
typedef struct CarMarket CarMarket;

// Opaque solution handle.
typedef struct CarSolution CarSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the most recent error message on this thread into `buffer`
// (NUL-terminated, truncated to `capacity`). Returns the full message
// length in bytes, or 0 when no error has occurred.
//
// # Safety
// `buffer` must point to at least `capacity` writable bytes, or be null
// (in which case only the length is reported).
uintptr_t car_last_error(char *buffer, uintptr_t capacity);

// Creates a market from a riskless rate, `d` appreciation-rate spreads over
// the riskless rate, and a row-major `d x d` volatility matrix.
//
// # Safety
// `b` must point to `d` doubles, `sigma` to `d * d` doubles, and `out` to a
// writable handle slot.
enum CarStatus car_market_new(double r,
                              const double *b,
                              const double *sigma,
                              uintptr_t d,
                              struct CarMarket **out);

// Creates a market from per-asset volatilities and a row-major correlation
// matrix; the volatility matrix is the Cholesky factor of the implied
// covariance.
//
// # Safety
// `b` and `vols` must point to `d` doubles, `correlation` to `d * d`
// doubles, and `out` to a writable handle slot.
enum CarStatus car_market_from_correlation(double r,
                                           const double *b,
                                           const double *vols,
                                           const double *correlation,
                                           uintptr_t d,
                                           struct CarMarket **out);

// Number of risky assets in the market.
//
// # Safety
// `market` must be a live handle from `car_market_new` or
// `car_market_from_correlation`.
uintptr_t car_market_asset_count(const struct CarMarket *market);

// Releases a market handle. Null is ignored.
//
// # Safety
// `market` must be null or a handle not yet freed.
void car_market_free(struct CarMarket *market);

// Minimizes capital at risk without a correlation constraint.
//
// # Safety
// `market` must be a live handle and `out` a writable handle slot.
enum CarStatus car_solve_unconstrained(const struct CarMarket *market,
                                       double alpha,
                                       double horizon,
                                       struct CarSolution **out);

// Minimizes capital at risk subject to a log-return correlation with the
// growth-optimal index of the first `m` assets of at most `-delta`.
//
// # Safety
// `market` must be a live handle and `out` a writable handle slot.
enum CarStatus car_solve_constrained(const struct CarMarket *market,
                                     uintptr_t m,
                                     double alpha,
                                     double horizon,
                                     double delta,
                                     struct CarSolution **out);

// Number of weights in the solution.
//
// # Safety
// `solution` must be a live handle from a solve call.
uintptr_t car_solution_dim(const struct CarSolution *solution);

// Copies the optimal risky-asset weights into `weights`.
//
// # Safety
// `solution` must be a live handle and `weights` must point to at least
// `car_solution_dim(solution)` writable doubles.
enum CarStatus car_solution_weights(const struct CarSolution *solution, double *weights);

// Minimal capital at risk attained by the solution.
//
// # Safety
// `solution` must be a live handle from a solve call.
double car_solution_car(const struct CarSolution *solution);

// Fraction of wealth left in the riskless asset.
//
// # Safety
// `solution` must be a live handle from a solve call.
double car_solution_riskless_fraction(const struct CarSolution *solution);

// Whether the correlation constraint binds at the optimum. Always false for
// unconstrained solutions.
//
// # Safety
// `solution` must be a live handle from a solve call.
bool car_solution_binding(const struct CarSolution *solution);

// Writes the constraint multiplier into `lambda` and returns true when the
// solution carries one.
//
// # Safety
// `solution` must be a live handle and `lambda` must point to a writable
// double.
bool car_solution_lambda(const struct CarSolution *solution, double *lambda);

// Releases a solution handle. Null is ignored.
//
// # Safety
// `solution` must be null or a handle not yet freed.
void car_solution_free(struct CarSolution *solution);

// Evaluates capital at risk for an arbitrary constant-proportion portfolio.
//
// # Safety
// `market` must be a live handle, `weights` must point to
// `car_market_asset_count(market)` doubles, and `out` to a writable double.
enum CarStatus car_evaluate(const struct CarMarket *market,
                            const double *weights,
                            double alpha,
                            double horizon,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAR_H */
