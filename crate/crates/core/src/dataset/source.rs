use super::{stream_chunks, DataMatrix, ShardSet};
use crate::error::{Result, SomError};

/// Training data held either in memory or in shard files on disk.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Memory(&'a DataMatrix),
    Shards(&'a ShardSet),
}

impl<'a> DataSource<'a> {
    pub fn n_rows(&self) -> usize {
        match self {
            DataSource::Memory(m) => m.n_rows(),
            DataSource::Shards(s) => s.total_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            DataSource::Memory(m) => m.n_cols(),
            DataSource::Shards(s) => s.n_cols,
        }
    }

    /// Visits all rows in order as `(first_row_index, row_major_values)` blocks.
    pub fn scan<F>(&self, mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &[f32]) -> Result<()>,
    {
        match self {
            DataSource::Memory(m) => visit(0, m.values()),
            DataSource::Shards(set) => {
                let mut start = 0;
                for i in 0..set.n_shards() {
                    for chunk in stream_chunks(set, i)? {
                        let chunk = chunk?;
                        visit(start, chunk.values())?;
                        start += chunk.n_rows();
                    }
                }
                Ok(())
            }
        }
    }

    /// Copies the requested rows, in request order (duplicates allowed).
    pub fn fetch_rows(&self, indices: &[usize]) -> Result<DataMatrix> {
        let n = self.n_rows();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(SomError::InvalidArgument(format!("row {bad} out of range for {n} rows")));
        }
        match self {
            DataSource::Memory(m) => Ok(m.select_rows(indices)),
            DataSource::Shards(_) => {
                let d = self.n_cols();
                let mut order: Vec<usize> = (0..indices.len()).collect();
                order.sort_by_key(|&k| indices[k]);
                let mut values = vec![0f32; indices.len() * d];
                let mut next = 0;
                self.scan(|start, block| {
                    let rows = block.len() / d;
                    while next < order.len() && indices[order[next]] < start + rows {
                        let local = indices[order[next]] - start;
                        let dst = order[next] * d;
                        values[dst..dst + d].copy_from_slice(&block[local * d..(local + 1) * d]);
                        next += 1;
                    }
                    Ok(())
                })?;
                DataMatrix::new(indices.len(), d, values)
            }
        }
    }
}
