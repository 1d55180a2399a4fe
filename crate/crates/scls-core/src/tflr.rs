//! Kullback–Leibler divergence regression by multiplicative EM updates.
//!
//! Same model structure as the least-squares fit — `E(Y|X) = X B` with a
//! row-stochastic `B` — but estimated by minimizing the summed divergence
//! `sum_i KL(y_i || x_i B)`. The update treats the cell products
//! `x_ij B_jk` as latent allocations, multiplying each coefficient by the
//! ratio of observed to fitted mass and renormalizing its row, which makes
//! the divergence non-increasing at every iteration.

use crate::scls::{fit_scls, CoefficientMatrix, FitError};
use crate::simplex::CompositionMatrix;
use ndarray::Array2;
use thiserror::Error;

/// Convergence threshold on the divergence decrease between iterations.
pub const TFLR_TOLERANCE: f64 = 1e-10;

/// Iteration cap for the multiplicative updates.
pub const TFLR_MAX_ITER: usize = 5000;

/// Coefficient cells below this value are frozen at zero: the
/// multiplicative update can never revive them, and keeping subnormal
/// residue around only feeds rounding noise into the ratios.
pub const TFLR_ZERO_FREEZE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TflrError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("fitted cell ({row},{col}) is zero where the response is positive")]
    ZeroFittedCell { row: usize, col: usize },
    #[error("divergence not converged after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone)]
pub struct TflrFit {
    pub coefficients: CoefficientMatrix,
    /// Achieved summed divergence sum_i KL(y_i || x_i B).
    pub divergence: f64,
    pub fitted: CompositionMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Summed divergence of the observed rows from the fitted rows, erroring
/// when a fitted cell is zero but carries observed mass (the divergence is
/// infinite there and the update is undefined).
fn total_divergence(y: &Array2<f64>, fitted: &Array2<f64>) -> Result<f64, TflrError> {
    let mut total = 0.0;
    for ((i, k), &obs) in y.indexed_iter() {
        if obs > 0.0 {
            let fit = fitted[[i, k]];
            if fit <= 0.0 {
                return Err(TflrError::ZeroFittedCell { row: i, col: k });
            }
            total += obs * (obs / fit).ln();
        }
    }
    Ok(total)
}

/// Fit by multiplicative EM updates from a caller-supplied starting matrix.
pub fn fit_tflr_from(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    init: CoefficientMatrix,
) -> Result<TflrFit, TflrError> {
    if y.nrows() != x.nrows() {
        return Err(FitError::Shape(format!(
            "response has {} rows, predictor has {}",
            y.nrows(),
            x.nrows()
        ))
        .into());
    }
    if init.nrows() != x.ncols() || init.ncols() != y.ncols() {
        return Err(FitError::Shape(format!(
            "initial coefficients are {}x{}, expected {}x{}",
            init.nrows(),
            init.ncols(),
            x.ncols(),
            y.ncols()
        ))
        .into());
    }
    let xa = x.as_array();
    let ya = y.as_array();
    let (d_p, d_r) = (x.ncols(), y.ncols());
    let mut b = init.as_array().clone();
    b.mapv_inplace(|v| if v < TFLR_ZERO_FREEZE { 0.0 } else { v });
    for mut row in b.rows_mut() {
        let sum = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|v| v / sum);
        } else {
            // a fully-frozen row would make the fit degenerate; restart it
            // from the uniform composition
            row.fill(1.0 / d_r as f64);
        }
    }

    let mut fitted = xa.dot(&b);
    let mut div = total_divergence(ya, &fitted)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < TFLR_MAX_ITER {
        iterations += 1;
        // multiplier[j][k] = sum_i x_ij y_ik / yhat_ik
        let mut ratio = ya.clone();
        for ((i, k), v) in ratio.indexed_iter_mut() {
            let f = fitted[[i, k]];
            if *v > 0.0 {
                if f <= 0.0 {
                    return Err(TflrError::ZeroFittedCell { row: i, col: k });
                }
                *v /= f;
            } else {
                *v = 0.0;
            }
        }
        let multiplier = xa.t().dot(&ratio);
        for j in 0..d_p {
            let mut sum = 0.0;
            for k in 0..d_r {
                let updated = b[[j, k]] * multiplier[[j, k]];
                b[[j, k]] = if updated < TFLR_ZERO_FREEZE {
                    0.0
                } else {
                    updated
                };
                sum += b[[j, k]];
            }
            if sum > 0.0 {
                for k in 0..d_r {
                    b[[j, k]] /= sum;
                }
            } else {
                for k in 0..d_r {
                    b[[j, k]] = 1.0 / d_r as f64;
                }
            }
        }
        fitted = xa.dot(&b);
        let next = total_divergence(ya, &fitted)?;
        debug_assert!(next <= div + 1e-9, "divergence increased: {div} -> {next}");
        let drop = div - next;
        div = next;
        if drop.abs() < TFLR_TOLERANCE {
            converged = true;
            break;
        }
    }

    let coefficients = CoefficientMatrix::with_names(
        b,
        x.component_names().map(<[String]>::to_vec),
        y.component_names().map(<[String]>::to_vec),
    )
    .map_err(TflrError::Fit)?;
    let fitted_mat =
        CompositionMatrix::with_names(fitted, y.component_names().map(<[String]>::to_vec))
            .map_err(FitError::Simplex)?;
    Ok(TflrFit {
        coefficients,
        divergence: div,
        fitted: fitted_mat,
        iterations,
        converged,
    })
}

/// Fit starting from the least-squares estimate, which is feasible and
/// usually close to the divergence minimizer.
pub fn fit_tflr(y: &CompositionMatrix, x: &CompositionMatrix) -> Result<TflrFit, TflrError> {
    let scls = fit_scls(y, x)?;
    // lift exact zeros in the starting values: the multiplicative update
    // can never leave a zero, and a least-squares zero at finite n is
    // often a boundary artifact rather than a feature of the divergence
    // optimum. Cells that belong at zero are driven back down and frozen.
    const INIT_LIFT: f64 = 1e-6;
    let b = scls.coefficient_matrix().as_array();
    let d_r = b.ncols() as f64;
    let lifted = b.mapv(|v| (v + INIT_LIFT) / (1.0 + d_r * INIT_LIFT));
    let init = CoefficientMatrix::new(lifted)?;
    fit_tflr_from(y, x, init)
}

/// Divergence achieved by an arbitrary coefficient matrix, for comparing
/// candidates against a fit. Infinite when a positive observed cell has a
/// zero fitted value.
pub fn tflr_divergence(y: &CompositionMatrix, x: &CompositionMatrix, b: &CoefficientMatrix) -> f64 {
    let fitted = x.as_array().dot(b.as_array());
    total_divergence(y.as_array(), &fitted).unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{dirichlet_sample, kld_rows};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identity_is_fixed_point_when_y_equals_x() {
        let x = dirichlet_sample(&[2.0, 2.0, 2.0], 30, 5).unwrap();
        let fit = fit_tflr_from(&x, &x, CoefficientMatrix::identity(3)).unwrap();
        let b = fit.coefficients.as_array();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(b[[i, j]], expect, epsilon = 1e-10);
            }
        }
        assert!(fit.divergence < 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn divergence_never_increases() {
        // re-run the fit step by step, checking monotonicity externally
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 40, 6).unwrap();
        let y = dirichlet_sample(&[3.0, 1.0, 2.0], 40, 7).unwrap();
        let fit = fit_tflr(&y, &x).unwrap();
        assert!(
            fit.converged,
            "no convergence in {} iterations",
            fit.iterations
        );
        // the SCLS initializer itself cannot beat the converged fit
        let init = fit_scls(&y, &x).unwrap().coefficient_matrix().clone();
        assert!(fit.divergence <= tflr_divergence(&y, &x, &init) + 1e-12);
    }

    #[test]
    fn fit_dominates_random_candidates() {
        use rand::Rng;
        use rand::SeedableRng;
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 50, 8).unwrap();
        let y = dirichlet_sample(&[2.0, 2.0, 1.0], 50, 9).unwrap();
        let fit = fit_tflr(&y, &x).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let mut b = ndarray::Array2::zeros((3, 3));
            for mut row in b.rows_mut() {
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = rng.random_range(0.01..1.0);
                    sum += *v;
                }
                row.mapv_inplace(|v| v / sum);
            }
            let candidate = tflr_divergence(&y, &x, &CoefficientMatrix::new(b).unwrap());
            assert!(fit.divergence <= candidate + 1e-8);
        }
    }

    #[test]
    fn matches_divergence_recomputed_from_rows() {
        let x = dirichlet_sample(&[1.0, 2.0, 1.0], 25, 11).unwrap();
        let y = dirichlet_sample(&[1.0, 1.0, 3.0], 25, 12).unwrap();
        let fit = fit_tflr(&y, &x).unwrap();
        let recomputed: f64 = kld_rows(&y, &fit.fitted).unwrap().iter().sum();
        assert_abs_diff_eq!(fit.divergence, recomputed, epsilon = 1e-9);
    }

    #[test]
    fn zero_fitted_cell_detected() {
        // x puts all mass on component 1, init B maps component 1 entirely
        // away from response component 0, yet y has mass there: the fitted
        // cell is exactly zero and stays zero under the update.
        let x = CompositionMatrix::new(array![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let y = CompositionMatrix::new(array![[0.5, 0.5], [0.4, 0.6]]).unwrap();
        let init = CoefficientMatrix::new(array![[0.5, 0.5], [0.0, 1.0]]).unwrap();
        let err = fit_tflr_from(&y, &x, init).unwrap_err();
        assert!(matches!(err, TflrError::ZeroFittedCell { col: 0, .. }));
    }

    #[test]
    fn frozen_cells_stay_zero() {
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 60, 13).unwrap();
        let init =
            CoefficientMatrix::new(array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
                .unwrap();
        // build y from the init matrix so those zeros are compatible with
        // the data and the optimum keeps them
        let y = CompositionMatrix::new(x.as_array().dot(init.as_array())).unwrap();
        let fit = fit_tflr_from(&y, &x, init).unwrap();
        let b = fit.coefficients.as_array();
        assert_eq!(b[[0, 0]], 0.0);
        assert_eq!(b[[1, 1]], 0.0);
        assert_eq!(b[[2, 2]], 0.0);
    }
}
