//! Compositional data types and the operations on them: closure, log-ratio
//! and power transformations, divergences, entropy and Dirichlet sampling.

mod dirichlet;
mod divergence;
mod transform;

pub use dirichlet::{dirichlet_sample, dirichlet_sample_with};
pub use divergence::{jsd, kld, kld_rows, negated_entropy};
pub use transform::{
    alpha_transform, alr, alr_inverse, clr, helmert_submatrix, ilr, ilr_inverse, power_transform,
    power_transform_inverse, HelmertSubMatrix,
};

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

/// Tolerance for the unit-sum check on ingestion. Rows within it are
/// renormalized exactly; rows outside are rejected.
pub const UNIT_SUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("all entries are zero")]
    AllZero,
    #[error("negative entry at index {0}")]
    NegativeEntry(usize),
    #[error("zero component where strictly positive values are required")]
    ZeroComponent,
    #[error("need at least {required} components, got {got}")]
    DimensionTooSmall { required: usize, got: usize },
    #[error("zero component with non-positive alpha")]
    ZeroWithNonpositiveAlpha,
    #[error("alpha must be non-zero")]
    AlphaZero,
    #[error("Dirichlet parameter {0} is not strictly positive")]
    NonpositiveParameter(usize),
    #[error("support mismatch at row {row}, column {col}: p > 0 but q = 0")]
    SupportMismatch { row: usize, col: usize },
    #[error("row {row} does not lie on the simplex (sum = {sum})")]
    RowNotOnSimplex { row: usize, sum: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input is empty")]
    Empty,
}

/// A point on the standard simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    values: Array1<f64>,
}

impl Composition {
    /// Validate a vector as a composition. Entries must be non-negative and
    /// sum to 1 within [`UNIT_SUM_TOLERANCE`]; the stored values are
    /// renormalized to sum to 1 exactly.
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self, SimplexError> {
        let values = values.into();
        if values.is_empty() {
            return Err(SimplexError::Empty);
        }
        for (i, &v) in values.iter().enumerate() {
            if v < 0.0 {
                return Err(SimplexError::NegativeEntry(i));
            }
        }
        let sum: f64 = values.sum();
        if (sum - 1.0).abs() > UNIT_SUM_TOLERANCE {
            return Err(SimplexError::RowNotOnSimplex { row: 0, sum });
        }
        Ok(Self {
            values: &values / sum,
        })
    }

    /// Close an arbitrary non-negative vector onto the simplex.
    pub fn closure(raw: impl Into<Array1<f64>>) -> Result<Self, SimplexError> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err(SimplexError::Empty);
        }
        for (i, &v) in raw.iter().enumerate() {
            if v < 0.0 {
                return Err(SimplexError::NegativeEntry(i));
            }
        }
        let sum: f64 = raw.sum();
        if sum == 0.0 {
            return Err(SimplexError::AllZero);
        }
        Ok(Self { values: &raw / sum })
    }

    pub fn uniform(d: usize) -> Self {
        Self {
            values: Array1::from_elem(d, 1.0 / d as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }

    pub fn strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

/// An n x D matrix whose rows are compositions.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    data: Array2<f64>,
    component_names: Option<Vec<String>>,
}

impl CompositionMatrix {
    /// Validate every row per the [`Composition`] rules.
    pub fn new(data: Array2<f64>) -> Result<Self, SimplexError> {
        Self::with_names(data, None)
    }

    pub fn with_names(
        mut data: Array2<f64>,
        component_names: Option<Vec<String>>,
    ) -> Result<Self, SimplexError> {
        if data.nrows() == 0 {
            return Err(SimplexError::Empty);
        }
        if data.ncols() < 2 {
            return Err(SimplexError::DimensionTooSmall {
                required: 2,
                got: data.ncols(),
            });
        }
        if let Some(names) = &component_names {
            if names.len() != data.ncols() {
                return Err(SimplexError::ShapeMismatch(format!(
                    "{} component names for {} columns",
                    names.len(),
                    data.ncols()
                )));
            }
        }
        for (r, mut row) in data.rows_mut().into_iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(SimplexError::NegativeEntry(c));
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > UNIT_SUM_TOLERANCE {
                return Err(SimplexError::RowNotOnSimplex { row: r, sum });
            }
            row.mapv_inplace(|v| v / sum);
        }
        Ok(Self {
            data,
            component_names,
        })
    }

    /// Close every row, regardless of its raw sum. Negative entries are
    /// still rejected.
    pub fn closure(mut raw: Array2<f64>, names: Option<Vec<String>>) -> Result<Self, SimplexError> {
        if raw.nrows() == 0 {
            return Err(SimplexError::Empty);
        }
        for mut row in raw.rows_mut() {
            for (c, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(SimplexError::NegativeEntry(c));
                }
            }
            let sum: f64 = row.sum();
            if sum == 0.0 {
                return Err(SimplexError::AllZero);
            }
            row.mapv_inplace(|v| v / sum);
        }
        Self::with_names(raw, names)
    }

    pub fn from_rows(rows: &[Composition]) -> Result<Self, SimplexError> {
        if rows.is_empty() {
            return Err(SimplexError::Empty);
        }
        let d = rows[0].len();
        let mut data = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(SimplexError::ShapeMismatch(format!(
                    "row {i} has {} components, expected {d}",
                    row.len()
                )));
            }
            data.row_mut(i).assign(&row.values());
        }
        Self::new(data)
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn component_names(&self) -> Option<&[String]> {
        self.component_names.as_deref()
    }

    pub fn row(&self, i: usize) -> Composition {
        Composition {
            values: self.data.row(i).to_owned(),
        }
    }

    /// Row-wise power transformation; the result stays on the simplex.
    pub fn power_transform(&self, alpha: f64) -> Result<Self, SimplexError> {
        let mut out = Array2::zeros(self.data.dim());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let c = Composition {
                values: row.to_owned(),
            };
            out.row_mut(i)
                .assign(&power_transform(&c, alpha)?.into_values());
        }
        Ok(Self {
            data: out,
            component_names: self.component_names.clone(),
        })
    }

    /// Row-wise inverse power transformation.
    pub fn power_transform_inverse(&self, alpha: f64) -> Result<Self, SimplexError> {
        let mut out = Array2::zeros(self.data.dim());
        for (i, row) in self.data.rows().into_iter().enumerate() {
            let c = Composition {
                values: row.to_owned(),
            };
            out.row_mut(i)
                .assign(&power_transform_inverse(&c, alpha)?.into_values());
        }
        Ok(Self {
            data: out,
            component_names: self.component_names.clone(),
        })
    }

    /// Select rows by index (with repetition allowed, for resampling).
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Array2::zeros((idx.len(), self.ncols()));
        for (dst, &src) in idx.iter().enumerate() {
            data.row_mut(dst).assign(&self.data.row(src));
        }
        Self {
            data,
            component_names: self.component_names.clone(),
        }
    }
}
