use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{seeded_permutation, DataMatrix};
use crate::error::{Result, SomError};

/// I.i.d. uniform values in `[0, 1]`.
pub fn synth_uniform(n_rows: usize, n_cols: usize, seed: u64) -> Result<DataMatrix> {
    if n_rows == 0 || n_cols == 0 {
        return Err(SomError::InvalidArgument("synthetic matrix needs rows and columns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n_rows * n_cols).map(|_| rng.random::<f32>()).collect();
    DataMatrix::new(n_rows, n_cols, values)
}

/// Two concentric circles (radius 1.0 and 0.5) in the plane.
///
/// Angles are evenly spaced per circle; the outer circle takes the extra point for
/// odd counts. Gaussian noise with standard deviation `noise` is added per
/// coordinate and the rows are shuffled.
pub fn synth_rings(n_rows: usize, noise: f64, seed: u64) -> Result<DataMatrix> {
    if n_rows < 2 {
        return Err(SomError::InvalidArgument("rings need at least two points".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SomError::InvalidArgument(format!("noise {noise} must be >= 0")));
    }
    let n_outer = n_rows - n_rows / 2;
    let n_inner = n_rows / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| SomError::InvalidArgument(e.to_string()))?;

    let mut points = Vec::with_capacity(n_rows * 2);
    for (count, radius) in [(n_outer, 1.0f64), (n_inner, 0.5f64)] {
        for k in 0..count {
            let angle = TAU * k as f64 / count as f64;
            let (mut x, mut y) = (radius * angle.cos(), radius * angle.sin());
            if noise > 0.0 {
                x += normal.sample(&mut rng);
                y += normal.sample(&mut rng);
            }
            points.push([x as f32, y as f32]);
        }
    }

    let order = seeded_permutation(n_rows, rng.random());
    let values = order.iter().flat_map(|&i| points[i]).collect();
    DataMatrix::new(n_rows, 2, values)
}
