//! Monte-Carlo studies: size and power of the independence test,
//! coefficient discrepancy, timing, and cross-validation.
//!
//! Replicate `r` of any study draws from a random stream derived from
//! `(seed, r)` and results are collected in replicate order, so every
//! number here is reproducible and independent of the worker count.

use crate::inference::{test_independence, InferenceError, Model};
use crate::parallel::run_indexed;
use crate::scls::{fit_alpha_scls, fit_scls, predict, CoefficientMatrix, FitError};
use crate::simplex::{dirichlet_sample_with, CompositionMatrix, SimplexError};
use crate::tflr::{fit_tflr, TflrError};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use thiserror::Error;

/// Zero-cell clamp applied inside coefficient-discrepancy logarithms.
pub const KLD_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("no ground-truth matrix for {0} response components")]
    NoGroundTruth(usize),
    #[error("need at least as many rows as folds: {rows} rows, {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Tflr(#[from] TflrError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Configuration of one Monte-Carlo cell.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Sample size per replicate.
    pub n: usize,
    /// Response components.
    pub d_r: usize,
    /// Predictor components; the reference studies fix 3.
    pub d_p: usize,
    /// Monte-Carlo replicates.
    pub replicates: usize,
    /// Permutations per test.
    pub permutations: usize,
    pub seed: u64,
    /// Dirichlet concentration of the linked generator.
    pub concentration: f64,
}

impl SimConfig {
    /// Study-faithful defaults: 3 predictor components, concentration 5.
    pub fn new(n: usize, d_r: usize, replicates: usize, permutations: usize, seed: u64) -> Self {
        Self {
            n,
            d_r,
            d_p: 3,
            replicates,
            permutations,
            seed,
            concentration: 5.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("n", self.n),
            ("d_r", self.d_r),
            ("d_p", self.d_p),
            ("replicates", self.replicates),
            ("permutations", self.permutations),
        ] {
            if v == 0 {
                return Err(SimError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.d_r < 2 || self.d_p < 2 {
            return Err(SimError::BadConfig("components must be at least 2".into()));
        }
        if self.concentration.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(SimError::BadConfig("concentration must be positive".into()));
        }
        Ok(())
    }
}

/// The four 3-row coefficient matrices of the reference study, exactly as
/// printed there. Some printed rows sum to 0.99 or 1.01 from rounding;
/// [`ground_truth_coefficients`] renormalizes them for use.
pub fn ground_truth_raw(d_r: usize) -> Option<Array2<f64>> {
    let rows: &[&[f64]] = match d_r {
        3 => &[
            &[0.45, 0.00, 0.55],
            &[0.20, 0.34, 0.46],
            &[0.76, 0.01, 0.23],
        ],
        5 => &[
            &[0.31, 0.00, 0.04, 0.65, 0.01],
            &[0.02, 0.01, 0.00, 0.48, 0.48],
            &[0.28, 0.02, 0.64, 0.06, 0.00],
        ],
        7 => &[
            &[0.16, 0.20, 0.00, 0.11, 0.32, 0.12, 0.09],
            &[0.63, 0.08, 0.00, 0.09, 0.10, 0.08, 0.01],
            &[0.10, 0.24, 0.20, 0.12, 0.03, 0.01, 0.30],
        ],
        10 => &[
            &[0.25, 0.00, 0.01, 0.09, 0.01, 0.00, 0.24, 0.14, 0.00, 0.26],
            &[0.44, 0.10, 0.18, 0.02, 0.01, 0.00, 0.09, 0.07, 0.00, 0.10],
            &[0.34, 0.03, 0.00, 0.14, 0.17, 0.00, 0.04, 0.00, 0.19, 0.09],
        ],
        _ => return None,
    };
    let mut m = Array2::zeros((3, d_r));
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Some(m)
}

/// Row-renormalized ground-truth matrix, valid as a coefficient matrix.
pub fn ground_truth_coefficients(d_r: usize) -> Result<CoefficientMatrix, SimError> {
    let mut raw = ground_truth_raw(d_r).ok_or(SimError::NoGroundTruth(d_r))?;
    for mut row in raw.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(CoefficientMatrix::new(raw)?)
}

fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Independent null data: `Y ~ Dir(a)` with `a ~ U(1,5)` per component
/// (redrawn each call), `X ~ Dir(1,1,1)`; `Y` carries no information
/// about `X`.
pub fn gen_null_data(cfg: &SimConfig) -> Result<(CompositionMatrix, CompositionMatrix), SimError> {
    cfg.validate()?;
    gen_null_data_with(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn gen_null_data_with<R: Rng>(
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(CompositionMatrix, CompositionMatrix), SimError> {
    let params: Vec<f64> = (0..cfg.d_r).map(|_| rng.random_range(1.0..5.0)).collect();
    let y = dirichlet_sample_with(&params, cfg.n, rng)?;
    let x = dirichlet_sample_with(&vec![1.0; cfg.d_p], cfg.n, rng)?;
    Ok((y, x))
}

/// Linked data: `X ~ Dir(1,1,1)`, `mu_i = x_i B`, `Y_i ~ Dir(c * mu_i)`,
/// so `E(Y_i | x_i) = mu_i`. Columns of `B` that are entirely zero force
/// `mu_ik = 0` for every `x`; those response components are structural
/// zeros and stay at zero. A zero in a column with positive support can
/// only come from a vertex `x` row, which is redrawn.
pub fn gen_linked_data(
    cfg: &SimConfig,
    b: &CoefficientMatrix,
) -> Result<(CompositionMatrix, CompositionMatrix), SimError> {
    cfg.validate()?;
    gen_linked_data_with(cfg, b, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn gen_linked_data_with<R: Rng>(
    cfg: &SimConfig,
    b: &CoefficientMatrix,
    rng: &mut R,
) -> Result<(CompositionMatrix, CompositionMatrix), SimError> {
    if b.nrows() != cfg.d_p || b.ncols() != cfg.d_r {
        return Err(SimError::BadConfig(format!(
            "coefficient matrix is {}x{}, config wants {}x{}",
            b.nrows(),
            b.ncols(),
            cfg.d_p,
            cfg.d_r
        )));
    }
    let ba = b.as_array();
    let structural_zero: Vec<bool> = (0..cfg.d_r)
        .map(|k| ba.column(k).iter().all(|&v| v == 0.0))
        .collect();

    let mut x = Array2::zeros((cfg.n, cfg.d_p));
    let mut y = Array2::zeros((cfg.n, cfg.d_r));
    let x_params = vec![1.0; cfg.d_p];
    for i in 0..cfg.n {
        loop {
            let xr = dirichlet_sample_with(&x_params, 1, rng)?;
            let xrow = xr.as_array().row(0).to_owned();
            let mu = xrow.dot(ba);
            // a vertex draw can zero out a component with positive support
            if mu
                .iter()
                .zip(&structural_zero)
                .any(|(&m, &sz)| m == 0.0 && !sz)
            {
                continue;
            }
            let mut sum = 0.0;
            let mut yrow = Array1::zeros(cfg.d_r);
            for k in 0..cfg.d_r {
                if structural_zero[k] {
                    continue;
                }
                let g = Gamma::new(cfg.concentration * mu[k], 1.0)
                    .map_err(|_| SimError::BadConfig("nonpositive Dirichlet shape".into()))?;
                yrow[k] = g.sample(rng);
                sum += yrow[k];
            }
            if sum == 0.0 {
                continue;
            }
            yrow.mapv_inplace(|v| v / sum);
            x.row_mut(i).assign(&xrow);
            y.row_mut(i).assign(&yrow);
            break;
        }
    }
    Ok((CompositionMatrix::new(y)?, CompositionMatrix::new(x)?))
}

fn rejection_rate<F>(cfg: &SimConfig, generate: F, model: Model) -> Result<f64, SimError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(CompositionMatrix, CompositionMatrix), SimError>
        + Sync
        + Send,
{
    cfg.validate()?;
    let results: Result<Vec<bool>, String> = run_indexed(cfg.replicates, |r| {
        let mut rng = replicate_rng(cfg.seed, r);
        let (y, x) = generate(&mut rng).map_err(|e| e.to_string())?;
        let test_seed: u64 = rng.random();
        let result = test_independence(&y, &x, cfg.permutations, test_seed, model)
            .map_err(|e| e.to_string())?;
        Ok(result.p_value <= 0.05)
    })
    .into_iter()
    .collect();
    let results = results.map_err(SimError::BadConfig)?;
    Ok(results.iter().filter(|&&b| b).count() as f64 / cfg.replicates as f64)
}

/// Empirical type-I error of the independence test at nominal 5% under
/// independent null data.
pub fn run_type1(cfg: &SimConfig, model: Model) -> Result<f64, SimError> {
    rejection_rate(cfg, |rng| gen_null_data_with(cfg, rng), model)
}

/// Empirical power of the independence test against the linked
/// alternative built from `b`.
pub fn run_power(cfg: &SimConfig, b: &CoefficientMatrix, model: Model) -> Result<f64, SimError> {
    rejection_rate(cfg, |rng| gen_linked_data_with(cfg, b, rng), model)
}

/// Average estimation error of both models against the generating matrix.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyResult {
    pub scls_kld: f64,
    pub scls_l1: f64,
    pub tflr_kld: f64,
    pub tflr_l1: f64,
    /// Cells with a true zero but a positive estimate, summed over
    /// replicates and both models: exactly the cells excluded from the
    /// divergence because their contribution is unbounded.
    pub clamped_cells: usize,
}

/// Divergence and L1 distance of an estimate from the truth, averaged per
/// cell so values are comparable across dimensionalities; the per-cell
/// average is what the reference discrepancy tables report (the raw cell
/// sums are an order of magnitude larger than the tabulated values, the
/// averages match them).
///
/// Cells where the truth is zero but the estimate positive have an
/// unbounded divergence contribution at any clamping level large enough to
/// distort the average; they are excluded from the divergence (the L1 term
/// still sees them) and counted instead.
pub fn coefficient_discrepancy(
    estimate: &CoefficientMatrix,
    truth: &CoefficientMatrix,
) -> (f64, f64, usize) {
    let mut kld = 0.0;
    let mut l1 = 0.0;
    let mut clamped = 0;
    for (e, t) in estimate.as_array().iter().zip(truth.as_array().iter()) {
        l1 += (e - t).abs();
        if *e > 0.0 {
            if *t <= 0.0 {
                clamped += 1;
            } else {
                kld += e * (e / t).ln();
            }
        }
    }
    let cells = estimate.as_array().len() as f64;
    (kld / cells, l1 / cells, clamped)
}

/// Mean discrepancy of both estimators over linked replicates.
pub fn run_discrepancy(
    cfg: &SimConfig,
    b: &CoefficientMatrix,
) -> Result<DiscrepancyResult, SimError> {
    cfg.validate()?;
    // (scls_kld, scls_l1, tflr_kld, tflr_l1, clamped) per replicate
    type ReplicateRow = (f64, f64, f64, f64, usize);
    let results: Result<Vec<ReplicateRow>, String> = run_indexed(cfg.replicates, |r| {
        let mut rng = replicate_rng(cfg.seed, r);
        let (y, x) = gen_linked_data_with(cfg, b, &mut rng).map_err(|e| e.to_string())?;
        let scls = fit_scls(&y, &x).map_err(|e| e.to_string())?;
        let tflr = fit_tflr(&y, &x).map_err(|e| e.to_string())?;
        let (sk, sl, sc) = coefficient_discrepancy(scls.coefficient_matrix(), b);
        let (tk, tl, tc) = coefficient_discrepancy(&tflr.coefficients, b);
        Ok((sk, sl, tk, tl, sc + tc))
    })
    .into_iter()
    .collect();
    let results = results.map_err(SimError::BadConfig)?;
    let n = results.len() as f64;
    let mut out = DiscrepancyResult {
        scls_kld: 0.0,
        scls_l1: 0.0,
        tflr_kld: 0.0,
        tflr_l1: 0.0,
        clamped_cells: 0,
    };
    for (sk, sl, tk, tl, c) in results {
        out.scls_kld += sk / n;
        out.scls_l1 += sl / n;
        out.tflr_kld += tk / n;
        out.tflr_l1 += tl / n;
        out.clamped_cells += c;
    }
    Ok(out)
}

/// One timing row: median wall time of each fit over repeated runs.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub d_r: usize,
    pub t_scls_ms: f64,
    pub t_tflr_ms: f64,
    /// TFLR time over SCLS time.
    pub ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

/// Time both estimators on linked data for each size combination; 20
/// repetitions per cell, median reported.
pub fn run_benchmark(
    sizes: &[usize],
    d_rs: &[usize],
    seed: u64,
) -> Result<Vec<BenchmarkRow>, SimError> {
    const REPETITIONS: usize = 20;
    let mut rows = Vec::new();
    for &n in sizes {
        for &d_r in d_rs {
            let b = ground_truth_coefficients(d_r)?;
            let cfg = SimConfig::new(n, d_r, 1, 1, seed);
            let (y, x) = gen_linked_data(&cfg, &b)?;
            let mut t_scls = Vec::with_capacity(REPETITIONS);
            let mut t_tflr = Vec::with_capacity(REPETITIONS);
            for _ in 0..REPETITIONS {
                let start = std::time::Instant::now();
                let _ = fit_scls(&y, &x)?;
                t_scls.push(start.elapsed().as_secs_f64() * 1e3);
                let start = std::time::Instant::now();
                let _ = fit_tflr(&y, &x)?;
                t_tflr.push(start.elapsed().as_secs_f64() * 1e3);
            }
            let t_scls_ms = median(t_scls);
            let t_tflr_ms = median(t_tflr);
            rows.push(BenchmarkRow {
                n,
                d_r,
                t_scls_ms,
                t_tflr_ms,
                ratio: t_tflr_ms / t_scls_ms,
            });
        }
    }
    Ok(rows)
}

/// Out-of-sample divergence used by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CvMetric {
    Kld,
    Jsd,
}

/// Which estimator cross-validation evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvModel {
    Scls { alpha: f64 },
    Tflr,
}

fn cv_metric_value(metric: CvMetric, observed: &Array2<f64>, predicted: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    let n = observed.nrows();
    for i in 0..n {
        let o = observed.row(i);
        let p = predicted.row(i);
        match metric {
            CvMetric::Kld => {
                for (&ov, &pv) in o.iter().zip(p.iter()) {
                    if ov > 0.0 {
                        total += ov * (ov / pv.max(KLD_CLAMP)).ln();
                    }
                }
            }
            CvMetric::Jsd => {
                for (&ov, &pv) in o.iter().zip(p.iter()) {
                    let m = 0.5 * (ov + pv);
                    if ov > 0.0 {
                        total += 0.5 * ov * (ov / m).ln();
                    }
                    if pv > 0.0 {
                        total += 0.5 * pv * (pv / m).ln();
                    }
                }
            }
        }
    }
    total / n as f64
}

/// Repeated k-fold cross-validation: every repeat shuffles the rows with
/// its own stream, splits them into `folds` near-equal parts, and averages
/// the held-out divergence over all folds. Returns one value per repeat.
pub fn cross_validate(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    folds: usize,
    repeats: usize,
    metric: CvMetric,
    model: CvModel,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    let n = y.nrows();
    if x.nrows() != n {
        return Err(SimError::BadConfig(format!(
            "response has {n} rows, predictor has {}",
            x.nrows()
        )));
    }
    if folds < 2 || n < folds {
        return Err(SimError::TooFewRows { rows: n, folds });
    }
    if repeats == 0 {
        return Err(SimError::BadConfig("repeats must be positive".into()));
    }
    let results: Result<Vec<f64>, String> = run_indexed(repeats, |rep| {
        let mut rng = replicate_rng(seed, rep);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut held_out_rows = 0usize;
        let base = n / folds;
        let extra = n % folds;
        let mut start = 0;
        for fold in 0..folds {
            let size = base + usize::from(fold < extra);
            let test_idx = &order[start..start + size];
            let train_idx: Vec<usize> = order[..start]
                .iter()
                .chain(&order[start + size..])
                .copied()
                .collect();
            start += size;

            let ytr = y.select_rows(&train_idx);
            let xtr = x.select_rows(&train_idx);
            let yte = y.select_rows(test_idx);
            let xte = x.select_rows(test_idx);
            let predicted = match model {
                CvModel::Scls { alpha } => {
                    let fit = fit_alpha_scls(&ytr, &xtr, alpha).map_err(|e| e.to_string())?;
                    predict(&fit, &xte).map_err(|e| e.to_string())?
                }
                CvModel::Tflr => {
                    let fit = fit_tflr(&ytr, &xtr).map_err(|e| e.to_string())?;
                    let raw = xte.as_array().dot(fit.coefficients.as_array());
                    CompositionMatrix::new(raw).map_err(|e| e.to_string())?
                }
            };
            total += cv_metric_value(metric, yte.as_array(), predicted.as_array()) * size as f64;
            held_out_rows += size;
        }
        Ok(total / held_out_rows as f64)
    })
    .into_iter()
    .collect();
    results.map_err(SimError::BadConfig)
}

/// Cross-validation curve over a grid of power-transformation parameters:
/// one (alpha, per-repeat values) pair per grid point, sharing the fold
/// assignments through the common seed.
pub fn cross_validate_alpha_grid(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    folds: usize,
    repeats: usize,
    metric: CvMetric,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, Vec<f64>)>, SimError> {
    alphas
        .iter()
        .map(|&alpha| {
            cross_validate(y, x, folds, repeats, metric, CvModel::Scls { alpha }, seed)
                .map(|v| (alpha, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{dirichlet_sample, ilr};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cfg(n: usize, d_r: usize) -> SimConfig {
        SimConfig::new(n, d_r, 20, 99, 42)
    }

    #[test]
    fn ground_truth_as_printed() {
        let b3 = ground_truth_raw(3).unwrap();
        assert_eq!(b3.row(0).to_vec(), vec![0.45, 0.00, 0.55]);
        let b10 = ground_truth_raw(10).unwrap();
        assert_eq!(b10[[1, 0]], 0.44);
        assert!(ground_truth_raw(4).is_none());
        for d_r in [3, 5, 7, 10] {
            let b = ground_truth_coefficients(d_r).unwrap();
            for row in b.as_array().rows() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn null_data_shapes_and_reproducibility() {
        let c = cfg(50, 5);
        let (y, x) = gen_null_data(&c).unwrap();
        assert_eq!(y.as_array().dim(), (50, 5));
        assert_eq!(x.as_array().dim(), (50, 3));
        let (y2, x2) = gen_null_data(&c).unwrap();
        assert_eq!(y.as_array(), y2.as_array());
        assert_eq!(x.as_array(), x2.as_array());
    }

    #[test]
    fn null_data_is_independent() {
        // sample correlation of the first log-ratio coordinates shrinks
        let c = SimConfig::new(5000, 3, 1, 1, 7);
        let (y, x) = gen_null_data(&c).unwrap();
        let mut ycoord = Vec::new();
        let mut xcoord = Vec::new();
        for i in 0..c.n {
            ycoord.push(ilr(&y.row(i)).unwrap()[0]);
            xcoord.push(ilr(&x.row(i)).unwrap()[0]);
        }
        let n = c.n as f64;
        let my = ycoord.iter().sum::<f64>() / n;
        let mx = xcoord.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vy = 0.0;
        let mut vx = 0.0;
        for (yv, xv) in ycoord.iter().zip(&xcoord) {
            cov += (yv - my) * (xv - mx);
            vy += (yv - my) * (yv - my);
            vx += (xv - mx) * (xv - mx);
        }
        let corr = cov / (vy.sqrt() * vx.sqrt());
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }

    #[test]
    fn linked_data_mean_matches_model() {
        let b = ground_truth_coefficients(3).unwrap();
        let c = SimConfig::new(20_000, 3, 1, 1, 11);
        let (y, x) = gen_linked_data(&c, &b).unwrap();
        let ymean = y.as_array().mean_axis(ndarray::Axis(0)).unwrap();
        let mu_mean = x
            .as_array()
            .dot(b.as_array())
            .mean_axis(ndarray::Axis(0))
            .unwrap();
        for (a, b) in ymean.iter().zip(mu_mean.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 0.01);
        }
    }

    #[test]
    fn linked_data_conditional_mean_binned() {
        // bin by the first predictor component and compare bin means
        let b = ground_truth_coefficients(3).unwrap();
        let c = SimConfig::new(20_000, 3, 1, 1, 13);
        let (y, x) = gen_linked_data(&c, &b).unwrap();
        let mu = x.as_array().dot(b.as_array());
        for lo in [0.0, 0.5] {
            let hi = lo + 0.5;
            let idx: Vec<usize> = (0..c.n)
                .filter(|&i| {
                    let v = x.as_array()[[i, 0]];
                    v >= lo && v < hi
                })
                .collect();
            assert!(idx.len() > 100);
            for k in 0..3 {
                let ybar: f64 =
                    idx.iter().map(|&i| y.as_array()[[i, k]]).sum::<f64>() / idx.len() as f64;
                let mubar: f64 = idx.iter().map(|&i| mu[[i, k]]).sum::<f64>() / idx.len() as f64;
                assert_abs_diff_eq!(ybar, mubar, epsilon = 0.02);
            }
        }
    }

    #[test]
    fn linked_data_structural_zero_column() {
        let b = ground_truth_coefficients(10).unwrap();
        let c = SimConfig::new(200, 10, 1, 1, 17);
        let (y, _) = gen_linked_data(&c, &b).unwrap();
        // column 5 of the 10-part matrix is all zero: responses must be too
        assert!(y.as_array().column(5).iter().all(|&v| v == 0.0));
        for row in y.as_array().rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn type1_rejects_bad_config() {
        let mut c = cfg(50, 3);
        c.permutations = 0;
        assert!(matches!(
            run_type1(&c, Model::Scls),
            Err(SimError::BadConfig(_))
        ));
    }

    #[test]
    fn type1_rate_is_plausible() {
        // small replicate count: just check the rate is far from 1
        let c = SimConfig::new(50, 3, 20, 99, 23);
        let rate = run_type1(&c, Model::Scls).unwrap();
        assert!(rate <= 0.25, "rate {rate}");
    }

    #[test]
    fn power_is_high_under_alternative() {
        let b = ground_truth_coefficients(3).unwrap();
        let c = SimConfig::new(100, 3, 10, 99, 29);
        let power = run_power(&c, &b, Model::Scls).unwrap();
        assert_abs_diff_eq!(power, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn discrepancy_zero_for_exact_estimate() {
        let b = ground_truth_coefficients(3).unwrap();
        let (kld, l1, clamped) = coefficient_discrepancy(&b, &b);
        assert_abs_diff_eq!(kld, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l1, 0.0, epsilon = 1e-12);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn discrepancy_counts_clamped_cells() {
        let truth = CoefficientMatrix::new(array![[0.5, 0.0, 0.5], [0.2, 0.3, 0.5]]).unwrap();
        let est = CoefficientMatrix::new(array![[0.4, 0.2, 0.4], [0.2, 0.3, 0.5]]).unwrap();
        let (kld, _, clamped) = coefficient_discrepancy(&est, &truth);
        assert_eq!(clamped, 1);
        assert!(kld.is_finite());
    }

    #[test]
    fn discrepancy_shrinks_with_sample_size() {
        let b = ground_truth_coefficients(3).unwrap();
        let small = run_discrepancy(&SimConfig::new(50, 3, 20, 1, 31), &b).unwrap();
        let large = run_discrepancy(&SimConfig::new(500, 3, 20, 1, 31), &b).unwrap();
        assert!(large.scls_kld < small.scls_kld);
        assert!(large.scls_l1 < small.scls_l1);
        assert!(large.tflr_kld < small.tflr_kld);
    }

    #[test]
    fn benchmark_schema_and_trend() {
        let rows = run_benchmark(&[100, 400], &[3], 37).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.t_scls_ms > 0.0 && r.t_tflr_ms > 0.0);
            assert_abs_diff_eq!(r.ratio, r.t_tflr_ms / r.t_scls_ms, epsilon = 1e-12);
        }
    }

    #[test]
    fn cross_validation_deterministic() {
        let y = dirichlet_sample(&[2.0, 1.0, 1.0], 60, 41).unwrap();
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 60, 43).unwrap();
        let a = cross_validate(
            &y,
            &x,
            10,
            3,
            CvMetric::Kld,
            CvModel::Scls { alpha: 1.0 },
            5,
        )
        .unwrap();
        let b = cross_validate(
            &y,
            &x,
            10,
            3,
            CvMetric::Kld,
            CvModel::Scls { alpha: 1.0 },
            5,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn cross_validation_constant_data_scores_zero() {
        let mut y = Array2::zeros((30, 3));
        for mut r in y.rows_mut() {
            r.assign(&array![0.2, 0.3, 0.5]);
        }
        let mut x = Array2::zeros((30, 3));
        for mut r in x.rows_mut() {
            r.assign(&array![0.4, 0.4, 0.2]);
        }
        let y = CompositionMatrix::new(y).unwrap();
        let x = CompositionMatrix::new(x).unwrap();
        let vals = cross_validate(
            &y,
            &x,
            10,
            2,
            CvMetric::Kld,
            CvModel::Scls { alpha: 1.0 },
            3,
        )
        .unwrap();
        for v in vals {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn cross_validation_too_few_rows() {
        let y = dirichlet_sample(&[1.0, 1.0, 1.0], 5, 47).unwrap();
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 5, 48).unwrap();
        assert!(matches!(
            cross_validate(&y, &x, 10, 2, CvMetric::Kld, CvModel::Tflr, 1),
            Err(SimError::TooFewRows { rows: 5, folds: 10 })
        ));
    }

    #[test]
    fn alpha_grid_shares_folds() {
        let b = ground_truth_coefficients(3).unwrap();
        let c = SimConfig::new(80, 3, 1, 1, 53);
        let (y, x) = gen_linked_data(&c, &b).unwrap();
        let grid = cross_validate_alpha_grid(&y, &x, 5, 2, CvMetric::Jsd, &[0.5, 1.0], 9).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[0].0, 0.5);
        // the alpha = 1 column must equal a direct run with the same seed
        let direct =
            cross_validate(&y, &x, 5, 2, CvMetric::Jsd, CvModel::Scls { alpha: 1.0 }, 9).unwrap();
        assert_eq!(grid[1].1, direct);
    }
}
