//! Simplicial constrained least squares.
//!
//! `E(Y|X) = X B` with `B` row-stochastic, estimated by minimizing the
//! squared loss `SL(B) = ||Y - X B||_F^2` as a quadratic program. The
//! vectorization convention stacks `B` column by column, so the quadratic
//! term is the block-diagonal `I_Dr (x) X'X` and the linear term is
//! `vec(X'Y)`.

use crate::qp::{
    factorize_dmat, nearest_positive_definite, solve_qp, solve_qp_factorized, DmatFactorization,
    QpError, QpSolution, QuadraticProgram,
};
use crate::simplex::{CompositionMatrix, SimplexError};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

/// Tolerance on coefficient-matrix invariants (entries in [0,1], unit row
/// sums).
pub const COEFFICIENT_TOLERANCE: f64 = 1e-8;

/// Eigenvalue floor used when repairing a rank-deficient quadratic term.
pub const PD_REPAIR_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("need at least 2 time points per group")]
    InsufficientTimePoints,
    #[error("categorical predictor has a single level")]
    SingleLevel,
    #[error("weighted fit did not converge in {0} alternations")]
    NoConvergence(usize),
    #[error("coefficient matrix violates row-stochasticity: {0}")]
    InvalidCoefficients(String),
}

/// A row-stochastic coefficient matrix: entries in [0, 1], rows summing to
/// one. Rows index predictor components, columns response components.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    b: Array2<f64>,
    predictor_names: Option<Vec<String>>,
    response_names: Option<Vec<String>>,
}

impl CoefficientMatrix {
    /// Validate within [`COEFFICIENT_TOLERANCE`]; stored entries are
    /// clamped to [0, 1] and rows renormalized to sum to one exactly.
    pub fn new(b: Array2<f64>) -> Result<Self, FitError> {
        Self::with_names(b, None, None)
    }

    pub fn with_names(
        mut b: Array2<f64>,
        predictor_names: Option<Vec<String>>,
        response_names: Option<Vec<String>>,
    ) -> Result<Self, FitError> {
        for (i, row) in b.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(-COEFFICIENT_TOLERANCE..=1.0 + COEFFICIENT_TOLERANCE).contains(&v) {
                    return Err(FitError::InvalidCoefficients(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > COEFFICIENT_TOLERANCE {
                return Err(FitError::InvalidCoefficients(format!(
                    "row {i} sums to {sum}"
                )));
            }
        }
        b.mapv_inplace(|v| v.clamp(0.0, 1.0));
        for mut row in b.rows_mut() {
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Ok(Self {
            b,
            predictor_names,
            response_names,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            b: Array2::eye(d),
            predictor_names: None,
            response_names: None,
        }
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.b
    }

    /// Predictor component count.
    pub fn nrows(&self) -> usize {
        self.b.nrows()
    }

    /// Response component count.
    pub fn ncols(&self) -> usize {
        self.b.ncols()
    }

    pub fn predictor_names(&self) -> Option<&[String]> {
        self.predictor_names.as_deref()
    }

    pub fn response_names(&self) -> Option<&[String]> {
        self.response_names.as_deref()
    }
}

/// Weights over simplicial predictors: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    a: Array1<f64>,
}

impl PredictorWeights {
    pub fn new(a: Array1<f64>) -> Result<Self, FitError> {
        for (i, &v) in a.iter().enumerate() {
            if v < -COEFFICIENT_TOLERANCE {
                return Err(FitError::InvalidCoefficients(format!(
                    "weight {i} = {v} negative"
                )));
            }
        }
        let sum = a.sum();
        if (sum - 1.0).abs() > COEFFICIENT_TOLERANCE {
            return Err(FitError::InvalidCoefficients(format!(
                "weights sum to {sum}"
            )));
        }
        let a = a.mapv(|v| v.max(0.0));
        let sum = a.sum();
        Ok(Self { a: a / sum })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            a: Array1::from_elem(m, 1.0 / m as f64),
        }
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.a
    }
}

/// Solver diagnostics carried on a fit.
#[derive(Debug, Clone)]
pub struct SolverDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub active_constraints: usize,
    pub pd_repaired: bool,
}

/// Estimated coefficients: one matrix, or one per predictor plus weights.
#[derive(Debug, Clone)]
pub enum FittedCoefficients {
    Single(CoefficientMatrix),
    Multi {
        per_predictor: Vec<CoefficientMatrix>,
        weights: PredictorWeights,
    },
}

#[derive(Debug, Clone)]
pub struct SclsFit {
    pub coefficients: FittedCoefficients,
    /// Achieved squared loss, on the transformed scale when `alpha != 1`.
    pub loss: f64,
    /// Power parameter of the response transformation; 1 is plain SCLS.
    pub alpha: f64,
    pub fitted: CompositionMatrix,
    pub solver: SolverDiagnostics,
}

impl SclsFit {
    /// The single coefficient matrix; panics on a multi-predictor fit.
    pub fn coefficient_matrix(&self) -> &CoefficientMatrix {
        match &self.coefficients {
            FittedCoefficients::Single(b) => b,
            FittedCoefficients::Multi { .. } => {
                panic!("multi-predictor fit has no single coefficient matrix")
            }
        }
    }
}

fn check_equal_rows(y: &CompositionMatrix, x: &CompositionMatrix) -> Result<(), FitError> {
    if y.nrows() != x.nrows() {
        return Err(FitError::Shape(format!(
            "response has {} rows, predictor has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    Ok(())
}

/// Squared loss ||Y - X B||_F^2.
pub fn scls_loss(y: &ArrayView2<'_, f64>, x: &ArrayView2<'_, f64>, b: &Array2<f64>) -> f64 {
    let residual = y - &x.dot(b);
    residual.iter().map(|r| r * r).sum()
}

/// Kronecker assembly of the SCLS program for `b = vec(B)` (columns of `B`
/// stacked): `Dmat = I_Dr (x) X'X`, `dvec = vec(X'Y)`, `D_p` equality rows
/// for the unit row sums and an identity block for non-negativity. The
/// redundant upper-bound block is omitted; see
/// [`assemble_qp_with_upper_bounds`] for the explicit variant.
pub fn assemble_qp(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
) -> Result<QuadraticProgram, FitError> {
    check_equal_rows(y, x)?;
    let xtx = x.as_array().t().dot(x.as_array());
    let xty = x.as_array().t().dot(y.as_array());
    Ok(assemble_from_grams(&xtx, &xty))
}

/// Assembly from the Gram matrices directly; shared with the permutation
/// fast path where `X'X` is fixed and only `X'Y` changes.
pub fn assemble_from_grams(xtx: &Array2<f64>, xty: &Array2<f64>) -> QuadraticProgram {
    let d_p = xtx.nrows();
    let d_r = xty.ncols();
    let m = d_p * d_r;

    let mut dmat = Array2::zeros((m, m));
    for k in 0..d_r {
        let off = k * d_p;
        for i in 0..d_p {
            for j in 0..d_p {
                dmat[[off + i, off + j]] = xtx[[i, j]];
            }
        }
    }
    let dvec = stack_columns(xty);

    let (amat_t, b0) = constraint_blocks(d_p, d_r, false);
    QuadraticProgram {
        dmat,
        dvec,
        amat_t,
        b0,
        n_equalities: d_p,
    }
}

/// Paper-faithful variant that keeps the redundant `-I` upper-bound block
/// with bounds of -1. Used to verify that omitting it never changes the
/// optimum.
pub fn assemble_qp_with_upper_bounds(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
) -> Result<QuadraticProgram, FitError> {
    let mut qp = assemble_qp(y, x)?;
    let d_p = x.ncols();
    let d_r = y.ncols();
    let (amat_t, b0) = constraint_blocks(d_p, d_r, true);
    qp.amat_t = amat_t;
    qp.b0 = b0;
    Ok(qp)
}

fn constraint_blocks(d_p: usize, d_r: usize, with_upper: bool) -> (Array2<f64>, Array1<f64>) {
    let m = d_p * d_r;
    let rows = d_p + m + if with_upper { m } else { 0 };
    let mut amat_t = Array2::zeros((rows, m));
    let mut b0 = Array1::zeros(rows);
    // unit row sums: row j touches position k*d_p + j in every block k
    for j in 0..d_p {
        for k in 0..d_r {
            amat_t[[j, k * d_p + j]] = 1.0;
        }
        b0[j] = 1.0;
    }
    for i in 0..m {
        amat_t[[d_p + i, i]] = 1.0;
    }
    if with_upper {
        for i in 0..m {
            amat_t[[d_p + m + i, i]] = -1.0;
            b0[d_p + m + i] = -1.0;
        }
    }
    (amat_t, b0)
}

/// vec(M) with columns stacked.
pub fn stack_columns(m: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(m.nrows() * m.ncols());
    let mut idx = 0;
    for col in m.columns() {
        for &v in col {
            out[idx] = v;
            idx += 1;
        }
    }
    out
}

/// Inverse of [`stack_columns`]: reshape a stacked vector into rows x cols.
pub fn unstack_columns(v: &Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    let mut idx = 0;
    for k in 0..cols {
        for j in 0..rows {
            out[[j, k]] = v[idx];
            idx += 1;
        }
    }
    out
}

/// Solve, repairing the quadratic term when it is not positive definite
/// (rank-deficient predictors, multi-predictor concatenations).
fn solve_with_repair(mut qp: QuadraticProgram) -> Result<(QpSolution, bool), FitError> {
    match solve_qp(&qp) {
        Ok(sol) => Ok((sol, false)),
        Err(QpError::NotPositiveDefinite) => {
            qp.dmat = nearest_positive_definite(&qp.dmat, PD_REPAIR_EPSILON)?;
            let sol = solve_qp(&qp)?;
            Ok((sol, true))
        }
        Err(e) => Err(e.into()),
    }
}

fn diagnostics(sol: &QpSolution, pd_repaired: bool) -> SolverDiagnostics {
    SolverDiagnostics {
        objective: sol.objective,
        iterations: sol.iterations,
        active_constraints: sol.active_set.len(),
        pd_repaired,
    }
}

/// Fit the single-predictor SCLS model.
pub fn fit_scls(y: &CompositionMatrix, x: &CompositionMatrix) -> Result<SclsFit, FitError> {
    let qp = assemble_qp(y, x)?;
    let (sol, repaired) = solve_with_repair(qp)?;
    let b = unstack_columns(&sol.b, x.ncols(), y.ncols());
    let coefficients = CoefficientMatrix::with_names(
        b,
        x.component_names().map(<[String]>::to_vec),
        y.component_names().map(<[String]>::to_vec),
    )?;
    let fitted_raw = x.as_array().dot(coefficients.as_array());
    let loss = {
        let residual = y.as_array() - &fitted_raw;
        residual.iter().map(|r| r * r).sum()
    };
    let fitted =
        CompositionMatrix::with_names(fitted_raw, y.component_names().map(<[String]>::to_vec))?;
    Ok(SclsFit {
        coefficients: FittedCoefficients::Single(coefficients),
        loss,
        alpha: 1.0,
        fitted,
        solver: diagnostics(&sol, repaired),
    })
}

/// Fit with a power-transformed response; `alpha = 1` reproduces
/// [`fit_scls`] exactly (same program, bit for bit).
pub fn fit_alpha_scls(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    alpha: f64,
) -> Result<SclsFit, FitError> {
    if alpha == 0.0 {
        return Err(FitError::Simplex(SimplexError::AlphaZero));
    }
    if alpha == 1.0 {
        return fit_scls(y, x);
    }
    let w = y.power_transform(alpha)?;
    let mut fit = fit_scls(&w, x)?;
    fit.alpha = alpha;
    fit.fitted = fit.fitted.power_transform_inverse(alpha)?;
    Ok(fit)
}

/// Predict responses for new predictor rows. For `alpha != 1`, the linear
/// prediction happens on the transformed scale and is back-transformed.
pub fn predict(fit: &SclsFit, x_new: &CompositionMatrix) -> Result<CompositionMatrix, FitError> {
    let b = fit.coefficient_matrix();
    if x_new.ncols() != b.nrows() {
        return Err(FitError::Shape(format!(
            "predictor has {} columns, coefficients expect {}",
            x_new.ncols(),
            b.nrows()
        )));
    }
    let raw = x_new.as_array().dot(b.as_array());
    let out = CompositionMatrix::with_names(raw, b.response_names().map(<[String]>::to_vec))?;
    if fit.alpha == 1.0 {
        Ok(out)
    } else {
        Ok(out.power_transform_inverse(fit.alpha)?)
    }
}

/// Expected change of the response when predictor component `j` gains
/// `delta` and component `l` loses it: `delta * (B_j - B_l)`. Sums to zero.
pub fn interpret_delta(
    b: &CoefficientMatrix,
    j: usize,
    l: usize,
    delta: f64,
) -> Result<Array1<f64>, FitError> {
    let rows = b.nrows();
    for idx in [j, l] {
        if idx >= rows {
            return Err(FitError::IndexOutOfRange { index: idx, rows });
        }
    }
    let diff = &b.as_array().row(j) - &b.as_array().row(l);
    Ok(diff.mapv(|v| v * delta))
}

/// Fit with `M >= 2` simplicial predictors under equal weights 1/M:
/// `E(Y) = sum_m X^m B^m / M`.
pub fn fit_multi(y: &CompositionMatrix, xs: &[&CompositionMatrix]) -> Result<SclsFit, FitError> {
    let m = xs.len();
    if m < 2 {
        return Err(FitError::Shape("need at least 2 predictors".into()));
    }
    let weights = PredictorWeights::uniform(m);
    fit_with_weights(y, xs, &weights)
}

/// Fit the given weighted combination `E(Y) = sum_m a_m X^m B^m` for fixed
/// weights, by one quadratic program over the concatenated scaled
/// predictors. The concatenation is rank-deficient (each predictor's
/// columns sum to 1_n), so the quadratic term goes through PD repair.
pub fn fit_with_weights(
    y: &CompositionMatrix,
    xs: &[&CompositionMatrix],
    weights: &PredictorWeights,
) -> Result<SclsFit, FitError> {
    let m = xs.len();
    if weights.as_array().len() != m {
        return Err(FitError::Shape(format!(
            "{} weights for {m} predictors",
            weights.as_array().len()
        )));
    }
    for x in xs {
        check_equal_rows(y, x)?;
    }
    let n = y.nrows();
    let d_r = y.ncols();
    let widths: Vec<usize> = xs.iter().map(|x| x.ncols()).collect();
    let total_width: usize = widths.iter().sum();

    // scaled concatenation [a_1 X^1 | ... | a_M X^M]
    let mut xcat = Array2::zeros((n, total_width));
    let mut off = 0;
    for (x, &a) in xs.iter().zip(weights.as_array()) {
        xcat.slice_mut(ndarray::s![.., off..off + x.ncols()])
            .assign(&(x.as_array() * a));
        off += x.ncols();
    }

    let xtx = xcat.t().dot(&xcat);
    let xty = xcat.t().dot(y.as_array());
    // the row-sum equality block of assemble_from_grams already covers all
    // stacked predictor rows, since the stacked coefficient rows are
    // exactly the rows of the individual B^m matrices
    let qp = assemble_from_grams(&xtx, &xty);
    let (sol, repaired) = solve_with_repair(qp)?;

    let stacked = unstack_columns(&sol.b, total_width, d_r);
    let mut per_predictor = Vec::with_capacity(m);
    let mut fitted_raw = Array2::zeros((n, d_r));
    let mut off = 0;
    for (x, &a) in xs.iter().zip(weights.as_array()) {
        let bm = stacked
            .slice(ndarray::s![off..off + x.ncols(), ..])
            .to_owned();
        fitted_raw = fitted_raw + x.as_array().dot(&bm) * a;
        per_predictor.push(CoefficientMatrix::with_names(
            bm,
            x.component_names().map(<[String]>::to_vec),
            y.component_names().map(<[String]>::to_vec),
        )?);
        off += x.ncols();
    }
    let loss = {
        let residual = y.as_array() - &fitted_raw;
        residual.iter().map(|r| r * r).sum()
    };
    let fitted =
        CompositionMatrix::with_names(fitted_raw, y.component_names().map(<[String]>::to_vec))?;
    Ok(SclsFit {
        coefficients: FittedCoefficients::Multi {
            per_predictor,
            weights: weights.clone(),
        },
        loss,
        alpha: 1.0,
        fitted,
        solver: diagnostics(&sol, repaired),
    })
}

/// Weighted multi-predictor fit: block coordinate descent alternating
/// between the coefficient matrices given the weights and the
/// simplex-constrained weights given the matrices. The objective is
/// non-increasing per half-step.
pub fn fit_weighted(y: &CompositionMatrix, xs: &[&CompositionMatrix]) -> Result<SclsFit, FitError> {
    const MAX_ALTERNATIONS: usize = 100;
    const TOLERANCE: f64 = 1e-8;

    let m = xs.len();
    if m < 2 {
        return Err(FitError::Shape("need at least 2 predictors".into()));
    }
    let mut weights = PredictorWeights::uniform(m);
    let mut fit = fit_with_weights(y, xs, &weights)?;
    let mut prev_loss = fit.loss;

    for _ in 0..MAX_ALTERNATIONS {
        // weights step: least squares over the simplex in the M fitted
        // directions f_m = vec(X^m B^m)
        let per_predictor = match &fit.coefficients {
            FittedCoefficients::Multi { per_predictor, .. } => per_predictor,
            FittedCoefficients::Single(_) => unreachable!(),
        };
        let n = y.nrows();
        let d_r = y.ncols();
        let mut f = Array2::zeros((n * d_r, m));
        for (col, (x, bm)) in xs.iter().zip(per_predictor).enumerate() {
            let fitted_m = x.as_array().dot(bm.as_array());
            f.column_mut(col).assign(&stack_columns(&fitted_m));
        }
        let yvec = stack_columns(y.as_array());
        let ftf = f.t().dot(&f);
        let fty = f.t().dot(&yvec);
        let mut wrows = Array2::zeros((1 + m, m));
        let mut wb0 = Array1::zeros(1 + m);
        for c in 0..m {
            wrows[[0, c]] = 1.0;
        }
        wb0[0] = 1.0;
        for c in 0..m {
            wrows[[1 + c, c]] = 1.0;
        }
        let wqp = QuadraticProgram {
            dmat: ftf,
            dvec: fty,
            amat_t: wrows,
            b0: wb0,
            n_equalities: 1,
        };
        let (wsol, _) = solve_with_repair(wqp)?;
        weights = PredictorWeights::new(wsol.b)?;

        // coefficients step under the new weights
        fit = fit_with_weights(y, xs, &weights)?;
        debug_assert!(fit.loss <= prev_loss + 1e-9, "objective increased");
        if prev_loss - fit.loss < TOLERANCE {
            return Ok(fit);
        }
        prev_loss = fit.loss;
    }
    Err(FitError::NoConvergence(MAX_ALTERNATIONS))
}

/// AR(1) fit: pairs `(Y_t, Y_{t-1})` within groups, then [`fit_scls`].
/// `groups[i]` labels row `i`; rows must be time-ordered within a group.
/// `None` treats the whole series as one group.
pub fn fit_ar1(series: &CompositionMatrix, groups: Option<&[usize]>) -> Result<SclsFit, FitError> {
    let n = series.nrows();
    if let Some(g) = groups {
        if g.len() != n {
            return Err(FitError::Shape(format!(
                "{} group labels for {n} rows",
                g.len()
            )));
        }
    }
    let mut lagged = Vec::new();
    let mut current = Vec::new();
    for i in 1..n {
        let same_group = groups.is_none_or(|g| g[i] == g[i - 1]);
        if same_group {
            lagged.push(i - 1);
            current.push(i);
        }
    }
    if lagged.is_empty() {
        return Err(FitError::InsufficientTimePoints);
    }
    let x = series.select_rows(&lagged);
    let y = series.select_rows(&current);
    fit_scls(&y, &x)
}

/// One-hot encode a categorical predictor: each row becomes the vertex
/// composition of its level. Levels are indexed in first-appearance order.
pub fn encode_categorical<S: AsRef<str>>(labels: &[S]) -> Result<CompositionMatrix, FitError> {
    let mut levels: Vec<&str> = Vec::new();
    let mut codes = Vec::with_capacity(labels.len());
    for l in labels {
        let l = l.as_ref();
        match levels.iter().position(|&x| x == l) {
            Some(i) => codes.push(i),
            None => {
                codes.push(levels.len());
                levels.push(l);
            }
        }
    }
    if levels.len() < 2 {
        return Err(FitError::SingleLevel);
    }
    let mut data = Array2::zeros((labels.len(), levels.len()));
    for (i, &c) in codes.iter().enumerate() {
        data[[i, c]] = 1.0;
    }
    let names = levels.iter().map(|s| s.to_string()).collect();
    Ok(CompositionMatrix::with_names(data, Some(names))?)
}

/// Mean row of a composition matrix, for barycentre comparisons.
pub fn mean_row(m: &CompositionMatrix) -> Array1<f64> {
    m.as_array().mean_axis(Axis(0)).expect("non-empty matrix")
}

/// Reusable state for solving many SCLS programs that share `X'X` and the
/// constraints but differ in `X'Y` (permutation replicates).
pub struct SclsSolverCache {
    fact: DmatFactorization,
    amat_t: Array2<f64>,
    b0: Array1<f64>,
    n_equalities: usize,
    d_p: usize,
    d_r: usize,
    pub pd_repaired: bool,
}

impl SclsSolverCache {
    pub fn new(x: &CompositionMatrix, d_r: usize) -> Result<Self, FitError> {
        let xtx = x.as_array().t().dot(x.as_array());
        let dummy_xty = Array2::zeros((x.ncols(), d_r));
        let qp = assemble_from_grams(&xtx, &dummy_xty);
        let (fact, pd_repaired) = match factorize_dmat(&qp.dmat) {
            Ok(f) => (f, false),
            Err(QpError::NotPositiveDefinite) => {
                let repaired = nearest_positive_definite(&qp.dmat, PD_REPAIR_EPSILON)?;
                (factorize_dmat(&repaired)?, true)
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            fact,
            amat_t: qp.amat_t,
            b0: qp.b0,
            n_equalities: qp.n_equalities,
            d_p: x.ncols(),
            d_r,
            pd_repaired,
        })
    }

    /// Solve for a given cross-product `X'Y`; returns the solution in the
    /// stacked vector form.
    pub fn solve(&self, xty: &Array2<f64>) -> Result<QpSolution, FitError> {
        let dvec = stack_columns(xty);
        Ok(solve_qp_factorized(
            &self.fact,
            &dvec,
            &self.amat_t,
            &self.b0,
            self.n_equalities,
        )?)
    }

    pub fn coefficient_shape(&self) -> (usize, usize) {
        (self.d_p, self.d_r)
    }
}
