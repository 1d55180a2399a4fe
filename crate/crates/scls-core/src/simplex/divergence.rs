//! Divergences between compositional samples, with the convention
//! 0 * log 0 = 0 throughout.

use super::{Composition, CompositionMatrix, SimplexError};
use ndarray::ArrayView1;

/// KLD between two aligned probability rows, 0 log 0 = 0. Caller must have
/// checked support.
pub(crate) fn kld_row(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    p.iter()
        .zip(q.iter())
        .filter(|&(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Kullback-Leibler divergence summed over all rows.
///
/// Errors with [`SimplexError::SupportMismatch`] when `p` puts mass on a
/// cell where `q` has none; that is exactly the breakdown case of the
/// KLD-based fit.
pub fn kld(p: &CompositionMatrix, q: &CompositionMatrix) -> Result<f64, SimplexError> {
    check_shapes(p, q)?;
    for (r, (prow, qrow)) in p
        .as_array()
        .rows()
        .into_iter()
        .zip(q.as_array().rows())
        .enumerate()
    {
        for (c, (&pv, &qv)) in prow.iter().zip(qrow.iter()).enumerate() {
            if pv > 0.0 && qv == 0.0 {
                return Err(SimplexError::SupportMismatch { row: r, col: c });
            }
        }
    }
    Ok(p.as_array()
        .rows()
        .into_iter()
        .zip(q.as_array().rows())
        .map(|(prow, qrow)| kld_row(prow, qrow))
        .sum())
}

/// Per-row KLD values (same convention as [`kld`]).
pub fn kld_rows(p: &CompositionMatrix, q: &CompositionMatrix) -> Result<Vec<f64>, SimplexError> {
    kld(p, q)?; // support and shape check
    Ok(p.as_array()
        .rows()
        .into_iter()
        .zip(q.as_array().rows())
        .map(|(prow, qrow)| kld_row(prow, qrow))
        .collect())
}

/// Jensen-Shannon divergence, natural log, half/half mixture. Always
/// finite and symmetric.
pub fn jsd(p: &CompositionMatrix, q: &CompositionMatrix) -> Result<f64, SimplexError> {
    check_shapes(p, q)?;
    let mut total = 0.0;
    for (prow, qrow) in p.as_array().rows().into_iter().zip(q.as_array().rows()) {
        let m = (&prow + &qrow) / 2.0;
        total += 0.5 * kld_row(prow, m.view()) + 0.5 * kld_row(qrow, m.view());
    }
    Ok(total)
}

/// Negated entropy sum_j y_j log y_j: zero at the vertices, -log D at the
/// barycentre. Used for the entropy-surface plot.
pub fn negated_entropy(y: &Composition) -> f64 {
    y.values()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum()
}

fn check_shapes(p: &CompositionMatrix, q: &CompositionMatrix) -> Result<(), SimplexError> {
    if p.nrows() != q.nrows() || p.ncols() != q.ncols() {
        return Err(SimplexError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            p.nrows(),
            p.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn mat(data: Array2<f64>) -> CompositionMatrix {
        CompositionMatrix::new(data).unwrap()
    }

    #[test]
    fn kld_self_is_zero() {
        let p = mat(array![[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]]);
        assert_abs_diff_eq!(kld(&p, &p).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kld_vertex_vs_half() {
        let p = mat(array![[1.0, 0.0, 0.0]]);
        let q = mat(array![[0.5, 0.25, 0.25]]);
        assert_abs_diff_eq!(kld(&p, &q).unwrap(), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn kld_support_mismatch() {
        let p = mat(array![[0.5, 0.5]]);
        let q = mat(array![[1.0, 0.0]]);
        assert_eq!(
            kld(&p, &q).unwrap_err(),
            SimplexError::SupportMismatch { row: 0, col: 1 }
        );
    }

    #[test]
    fn jsd_opposite_vertices() {
        let p = mat(array![[1.0, 0.0]]);
        let q = mat(array![[0.0, 1.0]]);
        assert_abs_diff_eq!(jsd(&p, &q).unwrap(), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn jsd_self_is_zero() {
        let p = mat(array![[0.2, 0.8], [0.7, 0.3]]);
        assert_abs_diff_eq!(jsd(&p, &p).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn negated_entropy_extremes() {
        let uniform = Composition::uniform(4);
        assert_abs_diff_eq!(negated_entropy(&uniform), -(4f64.ln()), epsilon = 1e-14);
        let vertex = Composition::new(array![1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(negated_entropy(&vertex), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn negated_entropy_monotone_vertex_to_barycentre() {
        // walk from a vertex to the barycentre along a straight line; the
        // negated entropy must decrease monotonically.
        let vertex = Array1::from(vec![1.0, 0.0, 0.0]);
        let centre = Array1::from(vec![1.0 / 3.0; 3]);
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let t = step as f64 / 20.0;
            let point = Composition::new(&vertex * (1.0 - t) + &centre * t).unwrap();
            let value = negated_entropy(&point);
            assert!(value < prev + 1e-12, "not monotone at t={t}");
            prev = value;
        }
    }

    fn random_pair(seed: u64) -> (CompositionMatrix, CompositionMatrix) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut m = Array2::zeros((5, 4));
            for mut row in m.rows_mut() {
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = rng.random_range(0.05..1.0);
                    sum += *v;
                }
                row.mapv_inplace(|v| v / sum);
            }
            CompositionMatrix::new(m).unwrap()
        };
        (draw(&mut rng), draw(&mut rng))
    }

    #[test]
    fn kld_nonnegative_random_pairs() {
        for seed in 0..20 {
            let (p, q) = random_pair(seed);
            assert!(kld(&p, &q).unwrap() >= 0.0);
        }
    }

    proptest! {
        #[test]
        fn jsd_symmetric(seed in 0u64..1000) {
            let (p, q) = random_pair(seed);
            let a = jsd(&p, &q).unwrap();
            let b = jsd(&q, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
