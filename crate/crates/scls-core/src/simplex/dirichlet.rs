//! Seeded Dirichlet sampling via independent Gamma draws and closure.

use super::{CompositionMatrix, SimplexError};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Draw `n` independent Dirichlet(params) rows, deterministically for a
/// given seed.
pub fn dirichlet_sample(
    params: &[f64],
    n: usize,
    seed: u64,
) -> Result<CompositionMatrix, SimplexError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dirichlet_sample_with(params, n, &mut rng)
}

/// Same as [`dirichlet_sample`] but drawing from a caller-owned generator,
/// so several draws can share one stream.
pub fn dirichlet_sample_with<R: Rng>(
    params: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<CompositionMatrix, SimplexError> {
    if n == 0 {
        return Err(SimplexError::Empty);
    }
    let gammas: Vec<Gamma<f64>> = params
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if a > 0.0 {
                Gamma::new(a, 1.0).map_err(|_| SimplexError::NonpositiveParameter(i))
            } else {
                Err(SimplexError::NonpositiveParameter(i))
            }
        })
        .collect::<Result<_, _>>()?;

    let mut data = Array2::zeros((n, params.len()));
    for mut row in data.rows_mut() {
        let mut sum = 0.0;
        for (v, g) in row.iter_mut().zip(&gammas) {
            *v = g.sample(rng);
            sum += *v;
        }
        // Gamma draws can underflow to 0 for very small shape parameters;
        // an all-zero row is redrawn by perturbing with a fresh sample.
        while sum == 0.0 {
            for (v, g) in row.iter_mut().zip(&gammas) {
                *v = g.sample(rng);
                sum += *v;
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
    CompositionMatrix::new(data)
}
