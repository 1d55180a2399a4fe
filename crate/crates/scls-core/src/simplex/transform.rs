//! Log-ratio and power transformations between the simplex and Euclidean
//! space.

use super::{Composition, SimplexError};
use ndarray::{Array1, Array2};

/// The (D-1) x D Helmert sub-matrix: orthonormal rows, each summing to
/// zero. Row i has i entries 1/sqrt(i(i+1)) followed by -i/sqrt(i(i+1)),
/// then zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct HelmertSubMatrix {
    entries: Array2<f64>,
}

impl HelmertSubMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn helmert_submatrix(d: usize) -> Result<HelmertSubMatrix, SimplexError> {
    if d < 2 {
        return Err(SimplexError::DimensionTooSmall {
            required: 2,
            got: d,
        });
    }
    let mut entries = Array2::zeros((d - 1, d));
    for i in 1..d {
        let norm = 1.0 / ((i * (i + 1)) as f64).sqrt();
        for j in 0..i {
            entries[[i - 1, j]] = norm;
        }
        entries[[i - 1, i]] = -(i as f64) * norm;
    }
    Ok(HelmertSubMatrix { entries })
}

/// Additive log-ratio transformation: v_j = log(y_j / y_divisor) over the
/// non-divisor components, in order.
pub fn alr(y: &Composition, divisor_index: usize) -> Result<Array1<f64>, SimplexError> {
    if !y.strictly_positive() {
        return Err(SimplexError::ZeroComponent);
    }
    let values = y.values();
    let log_div = values[divisor_index].ln();
    Ok(values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != divisor_index)
        .map(|(_, &v)| v.ln() - log_div)
        .collect())
}

/// Inverse alr: softmax-style with max subtraction so arbitrarily large
/// inputs stay finite.
pub fn alr_inverse(v: &Array1<f64>, divisor_index: usize) -> Composition {
    let d = v.len() + 1;
    let mut logits = Array1::zeros(d);
    let mut k = 0;
    for j in 0..d {
        if j == divisor_index {
            continue;
        }
        logits[j] = v[k];
        k += 1;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|x| (x - max).exp());
    Composition::closure(exps).expect("softmax output is positive")
}

/// Centred log-ratio transformation: u_j = log(y_j / g(y)). Output sums to
/// zero.
pub fn clr(y: &Composition) -> Result<Array1<f64>, SimplexError> {
    if !y.strictly_positive() {
        return Err(SimplexError::ZeroComponent);
    }
    let logs = y.values().mapv(f64::ln);
    let mean = logs.sum() / logs.len() as f64;
    Ok(logs - mean)
}

/// Isometric log-ratio transformation: z0 = H clr(y).
pub fn ilr(y: &Composition) -> Result<Array1<f64>, SimplexError> {
    let u = clr(y)?;
    let h = helmert_submatrix(y.len())?;
    Ok(h.entries().dot(&u))
}

/// Inverse isometric log-ratio: reconstruct the composition from its
/// (D-1)-dimensional coordinates via the transposed Helmert sub-matrix.
pub fn ilr_inverse(z: &Array1<f64>) -> Result<Composition, SimplexError> {
    let d = z.len() + 1;
    let h = helmert_submatrix(d)?;
    let u = h.entries().t().dot(z);
    Composition::closure(u.mapv(f64::exp))
}

/// Power transformation: w_j = y_j^alpha / sum_l y_l^alpha. Stays on the
/// simplex.
pub fn power_transform(y: &Composition, alpha: f64) -> Result<Composition, SimplexError> {
    if alpha == 1.0 {
        return Ok(y.clone());
    }
    if alpha <= 0.0 && !y.strictly_positive() {
        return Err(SimplexError::ZeroWithNonpositiveAlpha);
    }
    let powered = y.values().mapv(|v| v.powf(alpha));
    Composition::closure(powered)
}

/// Inverse of the power transformation: y_j = w_j^(1/alpha), closed.
pub fn power_transform_inverse(w: &Composition, alpha: f64) -> Result<Composition, SimplexError> {
    if alpha == 0.0 {
        return Err(SimplexError::AlphaZero);
    }
    power_transform(w, 1.0 / alpha)
}

/// The alpha-transformation z_alpha = (1/alpha) H (D w_alpha - 1_D).
/// Converges to [`ilr`] as alpha -> 0; callers wanting the exact limit
/// should use `ilr` directly.
pub fn alpha_transform(y: &Composition, alpha: f64) -> Result<Array1<f64>, SimplexError> {
    if alpha == 0.0 {
        return Err(SimplexError::AlphaZero);
    }
    let d = y.len() as f64;
    let w = power_transform(y, alpha)?;
    let centered = w.values().mapv(|v| d * v - 1.0);
    let h = helmert_submatrix(y.len())?;
    Ok(h.entries().dot(&centered) / alpha)
}
