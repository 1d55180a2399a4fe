//! Convex quadratic programming.
//!
//! Problems take the form
//!
//! ```text
//!     minimize  -d'b + 1/2 b' D b    subject to  A'b >= b0,
//! ```
//!
//! with the leading `n_equalities` constraint rows treated as equalities.
//! The solver is the dual active-set method of Goldfarb and Idnani with
//! Cholesky updates; it is deterministic, with degenerate choices broken by
//! lowest constraint index.

mod gi;

use crate::linalg;
use ndarray::{Array1, Array2};
use thiserror::Error;

/// Feasibility / KKT tolerance on returned solutions.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("quadratic term is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("quadratic term is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("positive-definiteness repair did not converge in {0} iterations")]
    NoConvergence(usize),
}

/// The (D, d, A, b0, #equalities) bundle.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    /// m x m symmetric quadratic term.
    pub dmat: Array2<f64>,
    /// m-vector linear term.
    pub dvec: Array1<f64>,
    /// c x m constraint matrix, one constraint per row.
    pub amat_t: Array2<f64>,
    /// c-vector of bounds.
    pub b0: Array1<f64>,
    /// Leading rows of `amat_t` treated as equalities.
    pub n_equalities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NotPositiveDefinite,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    /// The minimizer.
    pub b: Array1<f64>,
    /// Objective value -d'b + 1/2 b'Db at the minimizer.
    pub objective: f64,
    /// One multiplier per constraint; zero for inactive inequalities.
    pub lagrange: Vec<f64>,
    /// Indices of active constraints.
    pub active_set: Vec<usize>,
    /// Number of active-set changes performed.
    pub iterations: usize,
    pub status: QpStatus,
}

impl QuadraticProgram {
    pub fn validate(&self) -> Result<(), QpError> {
        let m = self.dvec.len();
        if self.dmat.nrows() != m || self.dmat.ncols() != m {
            return Err(QpError::BadShape(format!(
                "Dmat is {}x{} but dvec has {m} entries",
                self.dmat.nrows(),
                self.dmat.ncols()
            )));
        }
        if self.amat_t.nrows() != self.b0.len() {
            return Err(QpError::BadShape(format!(
                "{} constraint rows but {} bounds",
                self.amat_t.nrows(),
                self.b0.len()
            )));
        }
        if self.amat_t.nrows() > 0 && self.amat_t.ncols() != m {
            return Err(QpError::BadShape(format!(
                "constraint rows have {} columns, expected {m}",
                self.amat_t.ncols()
            )));
        }
        if self.n_equalities > self.amat_t.nrows() {
            return Err(QpError::BadShape(format!(
                "{} equalities among {} constraints",
                self.n_equalities,
                self.amat_t.nrows()
            )));
        }
        let mut asym = 0.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                asym = asym.max((self.dmat[[i, j]] - self.dmat[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(())
    }
}

/// Solve the program. `Err(Infeasible)` when no point satisfies the
/// constraints, `Err(NotPositiveDefinite)` when the Cholesky factorization
/// of `Dmat` fails.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let m = qp.dvec.len();
    let mut qmat = to_col_major(&qp.dmat);
    let (amat, bvec) = internal_constraints(qp);
    let cvec: Vec<f64> = qp.dvec.iter().map(|&v| -v).collect();
    let raw = gi::solve(&mut qmat, &cvec, &amat, &bvec, qp.n_equalities).map_err(map_err)?;
    Ok(finish(raw, m))
}

/// A reusable factorization of the quadratic term, for solving many
/// programs that differ only in their linear term (the permutation fast
/// path: X'X and the constraints never change, only d does).
#[derive(Debug, Clone)]
pub struct DmatFactorization {
    jmat: Vec<f64>,
    m: usize,
}

pub fn factorize_dmat(dmat: &Array2<f64>) -> Result<DmatFactorization, QpError> {
    let m = dmat.nrows();
    let mut jmat = to_col_major(dmat);
    gi::factorize(&mut jmat, m).map_err(map_err)?;
    Ok(DmatFactorization { jmat, m })
}

/// Solve with a pre-factorized quadratic term.
pub fn solve_qp_factorized(
    fact: &DmatFactorization,
    dvec: &Array1<f64>,
    amat_t: &Array2<f64>,
    b0: &Array1<f64>,
    n_equalities: usize,
) -> Result<QpSolution, QpError> {
    if dvec.len() != fact.m {
        return Err(QpError::BadShape(format!(
            "dvec has {} entries, factorization is {}-dimensional",
            dvec.len(),
            fact.m
        )));
    }
    let qp_like = QuadraticProgram {
        dmat: Array2::zeros((0, 0)),
        dvec: dvec.clone(),
        amat_t: amat_t.clone(),
        b0: b0.clone(),
        n_equalities,
    };
    let (amat, bvec) = internal_constraints(&qp_like);
    let cvec: Vec<f64> = dvec.iter().map(|&v| -v).collect();
    let mut jmat = fact.jmat.clone();
    let raw =
        gi::solve_factorized(&mut jmat, &cvec, &amat, &bvec, n_equalities).map_err(map_err)?;
    Ok(finish(raw, fact.m))
}

/// Nearest (in the Frobenius sense, by alternating projections with
/// Dykstra's correction) symmetric matrix with smallest eigenvalue at least
/// `epsilon`. Already-compliant inputs are returned unchanged.
pub fn nearest_positive_definite(m: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>, QpError> {
    const MAX_ITER: usize = 200;
    let n = m.nrows();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    if asym > 1e-10 {
        return Err(QpError::NotSymmetric(asym));
    }

    let (vals, _) = linalg::symmetric_eigen(m);
    if vals[0] >= epsilon {
        return Ok(m.clone());
    }

    let scale = linalg::frobenius(m).max(1.0);
    let mut y = m.clone();
    let mut correction = Array2::<f64>::zeros((n, n));
    for _ in 0..MAX_ITER {
        let shifted = &y - &correction;
        let (vals, vecs) = linalg::symmetric_eigen(&shifted);
        let clamped = Array2::from_diag(&vals.mapv(|v| v.max(epsilon)));
        let projected = vecs.dot(&clamped).dot(&vecs.t());
        correction = &projected - &shifted;
        let next = (&projected + &projected.t()) / 2.0;
        let delta = linalg::frobenius(&(&next - &y));
        y = next;
        if delta < 1e-12 * scale {
            let (check, _) = linalg::symmetric_eigen(&y);
            if check[0] >= epsilon * (1.0 - 1e-6) {
                return Ok(y);
            }
        }
    }
    Err(QpError::NoConvergence(MAX_ITER))
}

fn map_err(e: gi::GiError) -> QpError {
    match e {
        gi::GiError::NotPositiveDefinite => QpError::NotPositiveDefinite,
        gi::GiError::Infeasible => QpError::Infeasible,
    }
}

fn finish(raw: gi::GiSolution, m: usize) -> QpSolution {
    debug_assert_eq!(raw.x.len(), m);
    QpSolution {
        b: Array1::from(raw.x),
        objective: raw.objective,
        lagrange: raw.lagrange,
        active_set: raw.active,
        iterations: raw.iterations,
        status: QpStatus::Optimal,
    }
}

fn to_col_major(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            out[i + j * n] = m[[i, j]];
        }
    }
    out
}

/// Convert `A'b >= b0` to the solver's `a x <= b` form: inequality rows are
/// negated, equality rows pass through (their sense is two-sided).
fn internal_constraints(qp: &QuadraticProgram) -> (Vec<f64>, Vec<f64>) {
    let c = qp.amat_t.nrows();
    let m = if c > 0 {
        qp.amat_t.ncols()
    } else {
        qp.dvec.len()
    };
    let mut amat = Vec::with_capacity(c * m);
    let mut bvec = Vec::with_capacity(c);
    for (i, row) in qp.amat_t.rows().into_iter().enumerate() {
        if i < qp.n_equalities {
            amat.extend(row.iter().copied());
            bvec.push(qp.b0[i]);
        } else {
            amat.extend(row.iter().map(|&v| -v));
            bvec.push(-qp.b0[i]);
        }
    }
    (amat, bvec)
}
