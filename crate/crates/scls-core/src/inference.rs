//! Permutation tests, bootstrap coefficient distributions and ternary
//! confidence ellipses.
//!
//! All resampling is deterministic given a seed: replicate `r` draws from
//! its own random stream derived from `(seed, r)`, and replicate results
//! are collected in index order, so outputs are identical no matter how
//! many worker threads run them.

use crate::linalg;
use crate::parallel::run_indexed;
use crate::scls::{fit_scls, scls_loss, CoefficientMatrix, FitError, SclsSolverCache};
use crate::simplex::{CompositionMatrix, SimplexError};
use crate::tflr::{fit_tflr, TflrError};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Convergence tolerance of the minimum-volume enclosing ellipse iteration.
pub const MVEE_TOLERANCE: f64 = 1e-7;

/// How often a failed replicate (divergence fit hitting an empty fitted
/// cell) is redrawn before being dropped.
pub const REPLICATE_RESAMPLE_LIMIT: usize = 10;

/// Which regression estimator a permutation test is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Scls,
    Tflr,
}

/// The scale a test statistic lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StatisticKind {
    Sl,
    Kld,
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Tflr(#[from] TflrError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("R must be at least 1")]
    NoPermutations,
    #[error("column indices must differ")]
    EqualColumns,
    #[error("column index {index} out of range for {cols} columns")]
    ColumnOutOfRange { index: usize, cols: usize },
    #[error("need at least {required} bootstrap matrices, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("bootstrap scatter is degenerate along direction ({0}, {1})")]
    DegenerateScatter(f64, f64),
    #[error("confidence level must lie in (0, 1]")]
    BadLevel,
    #[error("ellipses require 3 response components, got {0}")]
    NotTernary(usize),
}

/// Outcome of a permutation test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic_observed: f64,
    /// One statistic per completed replicate; fewer than the requested
    /// count when divergence replicates were dropped.
    pub replicates: Vec<f64>,
    pub p_value: f64,
    /// Completed replicate count, the `R` of the p-value formula.
    pub r: usize,
    pub seed: u64,
    pub statistic_kind: StatisticKind,
    /// Replicates that failed (empty fitted cell) even after redrawing.
    pub dropped: usize,
    /// Redraws that were needed across all replicates.
    pub resampled: usize,
}

impl TestResult {
    /// p = (#{replicates <= observed} + 1) / (R + 1).
    fn from_replicates(
        observed: f64,
        replicates: Vec<f64>,
        seed: u64,
        kind: StatisticKind,
        dropped: usize,
        resampled: usize,
    ) -> Self {
        let r = replicates.len();
        let count = replicates.iter().filter(|&&v| v <= observed).count();
        let p_value = (count as f64 + 1.0) / (r as f64 + 1.0);
        Self {
            statistic_observed: observed,
            replicates,
            p_value,
            r,
            seed,
            statistic_kind: kind,
            dropped,
            resampled,
        }
    }

    /// JSON view; the replicate vector is included only on request.
    pub fn to_json(&self, include_replicates: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "statistic": self.statistic_observed,
            "p_value": self.p_value,
            "R": self.r,
            "seed": self.seed,
            "statistic_kind": self.statistic_kind,
        });
        if include_replicates {
            v["replicates"] = serde_json::json!(self.replicates);
        }
        v
    }
}

fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Squared-loss values of refits on row-permuted predictors, minus the
/// constant `tr(YY')`. The quadratic term `X'X` is permutation-invariant,
/// so its factorization is computed once and only the cross-product `X'Y`
/// is rebuilt per replicate.
pub fn fast_sl_replicates(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    permutations: &[Vec<usize>],
) -> Result<Vec<f64>, InferenceError> {
    let cache = SclsSolverCache::new(x, y.ncols())?;
    let results = run_indexed(permutations.len(), |r| {
        let xperm = x.select_rows(&permutations[r]);
        let xty = xperm.as_array().t().dot(y.as_array());
        cache
            .solve(&xty)
            .map(|sol| 2.0 * sol.objective)
            .map_err(InferenceError::Fit)
    });
    results.into_iter().collect()
}

fn trace_yy(y: &CompositionMatrix) -> f64 {
    y.as_array().iter().map(|v| v * v).sum()
}

/// Permutation test of linear independence between `Y` and `X`: the rows
/// of `X` are shuffled, the model refit, and the observed loss compared to
/// the permutation distribution. SCLS uses the squared loss, the
/// divergence model its summed divergence.
pub fn test_independence(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    r: usize,
    seed: u64,
    model: Model,
) -> Result<TestResult, InferenceError> {
    if r == 0 {
        return Err(InferenceError::NoPermutations);
    }
    let n = y.nrows();
    match model {
        Model::Scls => {
            let fit = fit_scls(y, x)?;
            let observed = fit.loss;
            let perms: Vec<Vec<usize>> = (0..r)
                .map(|i| random_permutation(n, &mut replicate_rng(seed, i)))
                .collect();
            let tr = trace_yy(y);
            let replicates: Vec<f64> = fast_sl_replicates(y, x, &perms)?
                .into_iter()
                .map(|v| v + tr)
                .collect();
            Ok(TestResult::from_replicates(
                observed,
                replicates,
                seed,
                StatisticKind::Sl,
                0,
                0,
            ))
        }
        Model::Tflr => {
            let fit = fit_tflr(y, x)?;
            let observed = fit.divergence;
            // a replicate redraws its permutation when the divergence fit
            // hits an empty fitted cell, then gives up and is dropped
            let raw = run_indexed(r, |i| {
                let mut rng = replicate_rng(seed, i);
                for attempt in 0..=REPLICATE_RESAMPLE_LIMIT {
                    let perm = random_permutation(n, &mut rng);
                    let xperm = x.select_rows(&perm);
                    match fit_tflr(y, &xperm) {
                        Ok(f) => return (Some(f.divergence), attempt),
                        Err(TflrError::ZeroFittedCell { .. }) => continue,
                        Err(_) => return (None, attempt),
                    }
                }
                (None, REPLICATE_RESAMPLE_LIMIT)
            });
            let mut replicates = Vec::with_capacity(r);
            let mut dropped = 0;
            let mut resampled = 0;
            for (value, attempts) in raw {
                resampled += attempts;
                match value {
                    Some(v) => replicates.push(v),
                    None => dropped += 1,
                }
            }
            Ok(TestResult::from_replicates(
                observed,
                replicates,
                seed,
                StatisticKind::Kld,
                dropped,
                resampled,
            ))
        }
    }
}

/// Permutation test of `H0: B = B0`. The statistic is
/// `SL(B_hat) - SL(B0)`, never positive since the estimate is optimal. The
/// null distribution refits on responses rebuilt as `X B0` plus
/// row-shuffled residuals, clipped and renormalized back onto the simplex.
pub fn test_coefficients(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    b0: &CoefficientMatrix,
    r: usize,
    seed: u64,
) -> Result<TestResult, InferenceError> {
    if r == 0 {
        return Err(InferenceError::NoPermutations);
    }
    if b0.nrows() != x.ncols() || b0.ncols() != y.ncols() {
        return Err(FitError::Shape(format!(
            "B0 is {}x{}, expected {}x{}",
            b0.nrows(),
            b0.ncols(),
            x.ncols(),
            y.ncols()
        ))
        .into());
    }
    let n = y.nrows();
    let fit = fit_scls(y, x)?;
    let null_fitted = x.as_array().dot(b0.as_array());
    let residuals = y.as_array() - &null_fitted;
    let observed = fit.loss - scls_loss(&y.as_array().view(), &x.as_array().view(), b0.as_array());

    let cache = SclsSolverCache::new(x, y.ncols())?;
    let replicates: Result<Vec<f64>, InferenceError> = run_indexed(r, |i| {
        let mut rng = replicate_rng(seed, i);
        let perm = random_permutation(n, &mut rng);
        // rebuild responses under the null and project onto the simplex
        let mut ystar = null_fitted.clone();
        for (dst, &src) in perm.iter().enumerate() {
            let mut row = ystar.row_mut(dst);
            row += &residuals.row(src);
            row.mapv_inplace(|v| v.max(0.0));
            let sum = row.sum();
            if sum > 0.0 {
                row.mapv_inplace(|v| v / sum);
            } else {
                let d = row.len() as f64;
                row.fill(1.0 / d);
            }
        }
        let xty = x.as_array().t().dot(&ystar);
        let sol = cache.solve(&xty)?;
        let tr: f64 = ystar.iter().map(|v| v * v).sum();
        let sl_hat = tr + 2.0 * sol.objective;
        let sl_null = scls_loss(&ystar.view(), &x.as_array().view(), b0.as_array());
        Ok(sl_hat - sl_null)
    })
    .into_iter()
    .collect();

    Ok(TestResult::from_replicates(
        observed,
        replicates?,
        seed,
        StatisticKind::Sl,
        0,
        0,
    ))
}

/// Permutation test of whether predictor components `l1` and `l2` carry
/// the same coefficient row and can be amalgamated. Replicates swap the
/// two column values within each row by a fair coin, keeping everything
/// else fixed; under the null the swap is distribution-preserving.
pub fn test_amalgamation(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    l1: usize,
    l2: usize,
    r: usize,
    seed: u64,
) -> Result<TestResult, InferenceError> {
    if r == 0 {
        return Err(InferenceError::NoPermutations);
    }
    if l1 == l2 {
        return Err(InferenceError::EqualColumns);
    }
    let cols = x.ncols();
    for idx in [l1, l2] {
        if idx >= cols {
            return Err(InferenceError::ColumnOutOfRange { index: idx, cols });
        }
    }
    let fit = fit_scls(y, x)?;
    let observed = fit.loss;
    // order the pair so the coin flips do not depend on argument order
    let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };

    let replicates: Result<Vec<f64>, InferenceError> = run_indexed(r, |i| {
        let mut rng = replicate_rng(seed, i);
        let mut xswap = x.as_array().clone();
        for mut row in xswap.rows_mut() {
            if rng.random::<bool>() {
                row.swap(lo, hi);
            }
        }
        let xm = CompositionMatrix::new(xswap).map_err(FitError::Simplex)?;
        Ok(fit_scls(y, &xm)?.loss)
    })
    .into_iter()
    .collect();

    Ok(TestResult::from_replicates(
        observed,
        replicates?,
        seed,
        StatisticKind::Sl,
        0,
        0,
    ))
}

/// Nonparametric bootstrap of the coefficient matrix: row pairs of
/// `(Y, X)` are resampled with replacement and the model refit.
pub fn bootstrap_coefficients(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    n_boot: usize,
    seed: u64,
) -> Result<Vec<CoefficientMatrix>, InferenceError> {
    if n_boot == 0 {
        return Err(InferenceError::NoPermutations);
    }
    let n = y.nrows();
    let results: Result<Vec<CoefficientMatrix>, InferenceError> = run_indexed(n_boot, |r| {
        let mut rng = replicate_rng(seed, r);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let yb = y.select_rows(&idx);
        let xb = x.select_rows(&idx);
        Ok(fit_scls(&yb, &xb)?.coefficient_matrix().clone())
    })
    .into_iter()
    .collect();
    results
}

/// A confidence region for one coefficient row in the ternary plane:
/// the points `p` with `(p - center)' shape (p - center) <= 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceEllipse {
    pub center: [f64; 2],
    /// Symmetric positive definite 2x2 matrix, row major.
    pub shape: [[f64; 2]; 2],
    pub level: f64,
    pub row_index: usize,
}

impl ConfidenceEllipse {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.mahalanobis(p) <= 1.0 + 1e-8
    }

    fn mahalanobis(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        self.shape[0][0] * dx * dx + 2.0 * self.shape[0][1] * dx * dy + self.shape[1][1] * dy * dy
    }
}

/// Planar coordinates of a 3-part composition inside the unit-edge
/// triangle: `(y1, y2, y3) -> (y2 + y3/2, sqrt(3)/2 * y3)`.
pub fn ternary_coordinates(y: &[f64]) -> [f64; 2] {
    [y[1] + y[2] / 2.0, 3f64.sqrt() / 2.0 * y[2]]
}

/// Minimum-volume ellipse containing the central `level` fraction of the
/// bootstrap draws of one coefficient row, in ternary coordinates. The
/// points are first trimmed by Mahalanobis distance from their mean, then
/// enclosed exactly.
pub fn confidence_ellipse(
    boot: &[CoefficientMatrix],
    row_index: usize,
    level: f64,
) -> Result<ConfidenceEllipse, InferenceError> {
    const MIN_SAMPLES: usize = 10;
    if boot.len() < MIN_SAMPLES {
        return Err(InferenceError::TooFewSamples {
            required: MIN_SAMPLES,
            got: boot.len(),
        });
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(InferenceError::BadLevel);
    }
    let d_r = boot[0].ncols();
    if d_r != 3 {
        return Err(InferenceError::NotTernary(d_r));
    }
    let rows = boot[0].nrows();
    if row_index >= rows {
        return Err(FitError::IndexOutOfRange {
            index: row_index,
            rows,
        }
        .into());
    }

    let points: Vec<[f64; 2]> = boot
        .iter()
        .map(|b| {
            let row = b.as_array().row(row_index);
            ternary_coordinates(row.as_slice().expect("contiguous row"))
        })
        .collect();

    // trim by Mahalanobis distance from the scatter mean
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut cov = [[0.0f64; 2]; 2];
    for p in &points {
        let dx = p[0] - mean[0];
        let dy = p[1] - mean[1];
        cov[0][0] += dx * dx;
        cov[0][1] += dx * dy;
        cov[1][1] += dy * dy;
    }
    cov[0][0] /= n;
    cov[0][1] /= n;
    cov[1][1] /= n;
    cov[1][0] = cov[0][1];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[0][1];
    let scale = cov[0][0].max(cov[1][1]);
    if det <= scale * scale * 1e-12 || scale <= 1e-24 {
        // scatter is (numerically) a line or a point; report the direction
        // of largest spread
        let cov_m = ndarray::arr2(&[[cov[0][0], cov[0][1]], [cov[1][0], cov[1][1]]]);
        let (_, vecs) = linalg::symmetric_eigen(&cov_m);
        return Err(InferenceError::DegenerateScatter(
            vecs[[0, 1]],
            vecs[[1, 1]],
        ));
    }
    let inv_det = 1.0 / det;
    let cov_inv = [
        [cov[1][1] * inv_det, -cov[0][1] * inv_det],
        [-cov[1][0] * inv_det, cov[0][0] * inv_det],
    ];
    let mut scored: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dx = p[0] - mean[0];
            let dy = p[1] - mean[1];
            let m =
                cov_inv[0][0] * dx * dx + 2.0 * cov_inv[0][1] * dx * dy + cov_inv[1][1] * dy * dy;
            (m, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let keep = ((level * points.len() as f64).ceil() as usize).max(3);
    let kept: Vec<[f64; 2]> = scored
        .iter()
        .take(keep.min(points.len()))
        .map(|&(_, i)| points[i])
        .collect();

    let (center, shape) = mvee(&kept)?;
    Ok(ConfidenceEllipse {
        center,
        shape,
        level,
        row_index,
    })
}

/// Minimum-volume enclosing ellipse of planar points by Khachiyan's
/// barycentric coordinate-descent, to relative tolerance [`MVEE_TOLERANCE`].
fn mvee(points: &[[f64; 2]]) -> Result<([f64; 2], [[f64; 2]; 2]), InferenceError> {
    const MAX_ITER: usize = 10_000;
    let m = points.len();
    let d = 2.0f64;
    let mut u = vec![1.0 / m as f64; m];

    for _ in 0..MAX_ITER {
        // X = sum_j u_j q_j q_j' with q = (x, y, 1)
        let mut xm = Array2::zeros((3, 3));
        for (p, &w) in points.iter().zip(&u) {
            let q = [p[0], p[1], 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    xm[[a, b]] += w * q[a] * q[b];
                }
            }
        }
        let xinv = match linalg::invert(&xm) {
            Some(inv) => inv,
            None => {
                return Err(InferenceError::DegenerateScatter(f64::NAN, f64::NAN));
            }
        };
        let mut kappa_max = f64::MIN;
        let mut j_max = 0;
        for (j, p) in points.iter().enumerate() {
            let q = [p[0], p[1], 1.0];
            let mut kappa = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    kappa += q[a] * xinv[[a, b]] * q[b];
                }
            }
            if kappa > kappa_max {
                kappa_max = kappa;
                j_max = j;
            }
        }
        if kappa_max - d - 1.0 <= MVEE_TOLERANCE * (d + 1.0) {
            break;
        }
        let step = (kappa_max - d - 1.0) / ((d + 1.0) * (kappa_max - 1.0));
        for w in u.iter_mut() {
            *w *= 1.0 - step;
        }
        u[j_max] += step;
    }

    let mut center = [0.0f64; 2];
    for (p, &w) in points.iter().zip(&u) {
        center[0] += w * p[0];
        center[1] += w * p[1];
    }
    let mut scatter = [[0.0f64; 2]; 2];
    for (p, &w) in points.iter().zip(&u) {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        scatter[0][0] += w * dx * dx;
        scatter[0][1] += w * dx * dy;
        scatter[1][1] += w * dy * dy;
    }
    scatter[1][0] = scatter[0][1];
    let det = scatter[0][0] * scatter[1][1] - scatter[0][1] * scatter[0][1];
    if det <= 0.0 {
        return Err(InferenceError::DegenerateScatter(f64::NAN, f64::NAN));
    }
    // shape = scatter^{-1} / d defines (p-c)' shape (p-c) <= 1
    let inv_det = 1.0 / (det * d);
    let mut shape = [
        [scatter[1][1] * inv_det, -scatter[0][1] * inv_det],
        [-scatter[1][0] * inv_det, scatter[0][0] * inv_det],
    ];
    // the iteration is approximate; inflate minimally so every input point
    // is inside
    let mut worst = 0.0f64;
    for p in points {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        let m = shape[0][0] * dx * dx + 2.0 * shape[0][1] * dx * dy + shape[1][1] * dy * dy;
        worst = worst.max(m);
    }
    if worst > 1.0 {
        for row in shape.iter_mut() {
            for v in row.iter_mut() {
                *v /= worst;
            }
        }
    }
    Ok((center, shape))
}
