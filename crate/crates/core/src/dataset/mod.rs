//! Dataset ingestion, preprocessing and storage.
//!
//! Samples live in a dense row-major [`DataMatrix`] of `f32`. Larger inputs can be
//! written to self-describing binary shards ([`ShardSet`]) and streamed back one
//! bounded chunk at a time.

mod csv;
mod shard;
mod source;
mod synth;

pub use self::csv::{load_csv, parse_csv};
pub use self::shard::{
    read_shard, read_shard_header, stream_chunks, write_shard_file, write_shards, ShardChunks,
    ShardHeader, ShardSet, SHARD_HEADER_LEN, SHARD_MAGIC, SHARD_VERSION,
};
pub use self::source::DataSource;
pub use self::synth::{synth_rings, synth_uniform};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SomError};

/// Smallest standard deviation used when standardizing a column.
pub const STD_FLOOR: f64 = 1e-12;

/// Dense row-major sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f32>,
}

impl DataMatrix {
    /// Builds a matrix from row-major values. Zero rows are allowed (empty chunks);
    /// loaders reject empty inputs themselves.
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Result<Self> {
        if n_cols == 0 {
            return Err(SomError::InvalidArgument("matrix needs at least one column".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(SomError::DimensionMismatch {
                expected: n_rows * n_cols,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SomError::Parse {
                row: pos / n_cols,
                col: pos % n_cols,
                msg: "non-finite value".into(),
            });
        }
        Ok(DataMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn empty(n_cols: usize) -> Self {
        DataMatrix {
            n_rows: 0,
            n_cols,
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.n_cols)
    }

    /// Copies the given rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
        }
    }

    /// Contiguous row range `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> DataMatrix {
        DataMatrix {
            n_rows: end - start,
            n_cols: self.n_cols,
            values: self.values[start * self.n_cols..end * self.n_cols].to_vec(),
        }
    }

    pub(crate) fn from_parts_unchecked(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), n_rows * n_cols);
        DataMatrix {
            n_rows,
            n_cols,
            values,
        }
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

pub fn fit_standardizer(data: &DataMatrix) -> Result<StandardizerParams> {
    if data.is_empty() {
        return Err(SomError::Empty("cannot fit a standardizer on zero rows".into()));
    }
    let d = data.n_cols();
    let n = data.n_rows() as f64;
    let mut means = vec![0.0f64; d];
    for row in data.rows() {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0f64; d];
    for row in data.rows() {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&means) {
            let c = v as f64 - m;
            *s += c * c;
        }
    }
    let std_devs = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(StandardizerParams { means, std_devs })
}

pub fn apply_standardizer(data: &DataMatrix, params: &StandardizerParams) -> Result<DataMatrix> {
    if params.means.len() != data.n_cols() || params.std_devs.len() != data.n_cols() {
        return Err(SomError::DimensionMismatch {
            expected: data.n_cols(),
            actual: params.means.len(),
        });
    }
    let d = data.n_cols();
    let values = data
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let c = k % d;
            ((v as f64 - params.means[c]) / params.std_devs[c].max(STD_FLOOR)) as f32
        })
        .collect();
    DataMatrix::new(data.n_rows(), d, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Seeded Fisher-Yates permutation of `0..n`.
///
/// The generator is ChaCha8 seeded through `seed_from_u64`, and position `i`
/// (from `n - 1` down to 1) swaps with a uniform draw from `0..=i`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Deterministic shuffle-then-cut into (train, holdout).
pub fn split_train_holdout(data: &DataMatrix, spec: &SplitSpec) -> Result<(DataMatrix, DataMatrix)> {
    let (train_idx, holdout_idx) = split_indices(data.n_rows(), spec)?;
    Ok((data.select_rows(&train_idx), data.select_rows(&holdout_idx)))
}

pub fn split_indices(n_rows: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(SomError::InvalidArgument(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n_train = (spec.train_fraction * n_rows as f64).floor() as usize;
    if n_train == 0 || n_train >= n_rows {
        return Err(SomError::InvalidArgument(format!(
            "split of {n_rows} rows at fraction {} leaves an empty partition",
            spec.train_fraction
        )));
    }
    let mut perm = seeded_permutation(n_rows, spec.seed);
    let holdout = perm.split_off(n_train);
    Ok((perm, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f32]) -> DataMatrix {
        DataMatrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn standardizer_two_point() {
        let p = fit_standardizer(&col(&[1.0, 3.0])).unwrap();
        assert_eq!(p.means, vec![2.0]);
        assert_eq!(p.std_devs, vec![1.0]);
        let out = apply_standardizer(&col(&[1.0, 3.0]), &p).unwrap();
        assert_eq!(out.values(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardizer_constant_column_is_floored() {
        let data = col(&[5.0, 5.0, 5.0]);
        let p = fit_standardizer(&data).unwrap();
        assert_eq!(p.means, vec![5.0]);
        assert_eq!(p.std_devs, vec![STD_FLOOR]);
        let out = apply_standardizer(&data, &p).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardizer_population_std() {
        let p = fit_standardizer(&col(&[0.0, 0.0, 6.0])).unwrap();
        assert_eq!(p.means, vec![2.0]);
        // (4 + 4 + 16) / 3 = 8
        assert!((p.std_devs[0] - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn standardized_columns_have_zero_mean() {
        let data = DataMatrix::new(4, 2, vec![1.0, 10.0, 2.0, 20.0, 3.5, 5.0, 7.0, -3.0]).unwrap();
        let p = fit_standardizer(&data).unwrap();
        let out = apply_standardizer(&data, &p).unwrap();
        for c in 0..2 {
            let mean: f64 = out.rows().map(|r| r[c] as f64).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6, "column {c} mean {mean}");
        }
    }

    #[test]
    fn standardizer_dimension_mismatch() {
        let p = StandardizerParams {
            means: vec![0.0, 0.0],
            std_devs: vec![1.0, 1.0],
        };
        assert!(matches!(
            apply_standardizer(&col(&[1.0]), &p),
            Err(SomError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn split_counts_and_coverage() {
        let data = DataMatrix::new(10, 1, (0..10).map(|v| v as f32).collect()).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 42,
        };
        let (train, holdout) = split_train_holdout(&data, &spec).unwrap();
        assert_eq!((train.n_rows(), holdout.n_rows()), (7, 3));
        let mut all: Vec<f32> = train.values().iter().chain(holdout.values()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..10).map(|v| v as f32).collect::<Vec<_>>());

        let again = split_train_holdout(&data, &spec).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, holdout);
    }

    #[test]
    fn split_150_rows() {
        let (tr, ho) = split_indices(
            150,
            &SplitSpec {
                train_fraction: 0.7,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!((tr.len(), ho.len()), (105, 45));
    }

    #[test]
    fn split_rejects_empty_partition() {
        let spec = SplitSpec {
            train_fraction: 0.1,
            seed: 0,
        };
        assert!(split_indices(3, &spec).is_err());
        assert!(split_indices(1, &SplitSpec::default()).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(DataMatrix::new(1, 2, vec![1.0, f32::NAN]).is_err());
    }
}
