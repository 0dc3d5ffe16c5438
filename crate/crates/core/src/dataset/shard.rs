//! Binary shard files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 8    | magic `FSOMSHRD`            |
//! | 8      | 4    | format version (u32, = 1)   |
//! | 12     | 8    | row count (u64)             |
//! | 20     | 4    | column count (u32)          |
//! | 24     | 4·n·d| row-major `f32` values      |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::DataMatrix;
use crate::error::{Result, SomError};
use crate::partition::balanced_ranges;

pub const SHARD_MAGIC: &[u8; 8] = b"FSOMSHRD";
pub const SHARD_VERSION: u32 = 1;
pub const SHARD_HEADER_LEN: u64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub n_rows: u64,
    pub n_cols: u32,
}

/// An ordered set of shard files that together hold one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardSet {
    pub shard_paths: Vec<PathBuf>,
    pub rows_per_shard: Vec<usize>,
    pub n_cols: usize,
    pub chunk_rows: usize,
}

impl ShardSet {
    /// Opens every `shard_*.bin` file in `dir`, in file-name order.
    pub fn open(dir: impl AsRef<Path>, chunk_rows: usize) -> Result<ShardSet> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| SomError::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("shard_") && n.ends_with(".bin"))
            })
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(SomError::Empty(format!("no shard files in {}", dir.display())));
        }
        Self::from_paths(paths, chunk_rows)
    }

    pub fn from_paths(paths: Vec<PathBuf>, chunk_rows: usize) -> Result<ShardSet> {
        if chunk_rows == 0 {
            return Err(SomError::InvalidArgument("chunk_rows must be at least 1".into()));
        }
        let mut rows_per_shard = Vec::with_capacity(paths.len());
        let mut n_cols = None;
        for path in &paths {
            let header = read_shard_header(path)?;
            match n_cols {
                None => n_cols = Some(header.n_cols as usize),
                Some(c) if c != header.n_cols as usize => {
                    return Err(SomError::CorruptShard {
                        path: path.clone(),
                        msg: format!("has {} columns, expected {c}", header.n_cols),
                    })
                }
                _ => {}
            }
            rows_per_shard.push(header.n_rows as usize);
        }
        Ok(ShardSet {
            shard_paths: paths,
            rows_per_shard,
            n_cols: n_cols.unwrap_or(0),
            chunk_rows,
        })
    }

    pub fn n_shards(&self) -> usize {
        self.shard_paths.len()
    }

    pub fn total_rows(&self) -> usize {
        self.rows_per_shard.iter().sum()
    }

    /// Global index of the first row of each shard.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.rows_per_shard
            .iter()
            .map(|&r| {
                let start = acc;
                acc += r;
                start
            })
            .collect()
    }

    /// Reads every shard into one in-memory matrix.
    pub fn load_all(&self) -> Result<DataMatrix> {
        let mut values = Vec::with_capacity(self.total_rows() * self.n_cols);
        for i in 0..self.n_shards() {
            for chunk in stream_chunks(self, i)? {
                values.extend_from_slice(chunk?.values());
            }
        }
        DataMatrix::new(self.total_rows(), self.n_cols, values)
    }
}

fn shard_file_name(index: usize) -> String {
    format!("shard_{index:05}.bin")
}

/// Splits `data` into `n_shards` contiguous, near-equal row blocks and writes one
/// file per block into `out_dir`.
pub fn write_shards(
    data: &DataMatrix,
    out_dir: impl AsRef<Path>,
    n_shards: usize,
    chunk_rows: usize,
) -> Result<ShardSet> {
    if n_shards == 0 {
        return Err(SomError::InvalidArgument("n_shards must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| SomError::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(n_shards);
    for (i, range) in balanced_ranges(data.n_rows(), n_shards).into_iter().enumerate() {
        let path = out_dir.join(shard_file_name(i));
        let d = data.n_cols();
        write_shard_file(
            &path,
            range.len(),
            d,
            &data.values()[range.start * d..range.end * d],
        )?;
        paths.push(path);
    }
    ShardSet::from_paths(paths, chunk_rows)
}

/// Writes one shard file through a temporary file and a rename.
pub fn write_shard_file(path: &Path, n_rows: usize, n_cols: usize, values: &[f32]) -> Result<()> {
    debug_assert_eq!(values.len(), n_rows * n_cols);
    let n_cols32 = u32::try_from(n_cols)
        .map_err(|_| SomError::InvalidArgument(format!("{n_cols} columns exceed u32")))?;
    crate::io_util::write_atomic_with(path, |w| {
        let mut w = BufWriter::new(w);
        w.write_all(SHARD_MAGIC)?;
        w.write_all(&SHARD_VERSION.to_le_bytes())?;
        w.write_all(&(n_rows as u64).to_le_bytes())?;
        w.write_all(&n_cols32.to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    })
}

fn parse_header(bytes: &[u8; SHARD_HEADER_LEN as usize], path: &Path) -> Result<ShardHeader> {
    let corrupt = |msg: String| SomError::CorruptShard {
        path: path.to_path_buf(),
        msg,
    };
    if &bytes[0..8] != SHARD_MAGIC {
        return Err(corrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != SHARD_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let n_rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let n_cols = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if n_cols == 0 {
        return Err(corrupt("zero columns".into()));
    }
    Ok(ShardHeader { n_rows, n_cols })
}

/// Reads and validates a shard header, including the file length it implies.
pub fn read_shard_header(path: impl AsRef<Path>) -> Result<ShardHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| SomError::io(path, e))?;
    let mut buf = [0u8; SHARD_HEADER_LEN as usize];
    file.read_exact(&mut buf).map_err(|_| SomError::CorruptShard {
        path: path.to_path_buf(),
        msg: "file shorter than header".into(),
    })?;
    let header = parse_header(&buf, path)?;
    let len = file.metadata().map_err(|e| SomError::io(path, e))?.len();
    let expected = SHARD_HEADER_LEN + header.n_rows * header.n_cols as u64 * 4;
    if len != expected {
        return Err(SomError::CorruptShard {
            path: path.to_path_buf(),
            msg: format!(
                "header declares {} rows ({expected} bytes) but file has {len} bytes",
                header.n_rows
            ),
        });
    }
    Ok(header)
}

/// Loads one whole shard file.
pub fn read_shard(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let header = read_shard_header(path)?;
    let set = ShardSet {
        shard_paths: vec![path.to_path_buf()],
        rows_per_shard: vec![header.n_rows as usize],
        n_cols: header.n_cols as usize,
        chunk_rows: (header.n_rows as usize).max(1),
    };
    set.load_all()
}

/// Streams one shard in chunks of at most `chunk_rows` rows.
pub fn stream_chunks(shards: &ShardSet, shard_index: usize) -> Result<ShardChunks> {
    let path = shards
        .shard_paths
        .get(shard_index)
        .ok_or_else(|| {
            SomError::InvalidArgument(format!(
                "shard index {shard_index} out of range ({} shards)",
                shards.n_shards()
            ))
        })?
        .clone();
    let header = read_shard_header(&path)?;
    if header.n_rows as usize != shards.rows_per_shard[shard_index]
        || header.n_cols as usize != shards.n_cols
    {
        return Err(SomError::CorruptShard {
            path,
            msg: "header changed since the shard set was opened".into(),
        });
    }
    let mut reader = BufReader::new(File::open(&path).map_err(|e| SomError::io(&path, e))?);
    let mut skip = [0u8; SHARD_HEADER_LEN as usize];
    reader.read_exact(&mut skip).map_err(|e| SomError::io(&path, e))?;
    Ok(ShardChunks {
        reader,
        path,
        remaining: header.n_rows as usize,
        n_cols: header.n_cols as usize,
        chunk_rows: shards.chunk_rows.max(1),
        buf: Vec::new(),
    })
}

/// Single-consumer chunk iterator over one shard file.
pub struct ShardChunks {
    reader: BufReader<File>,
    path: PathBuf,
    remaining: usize,
    n_cols: usize,
    chunk_rows: usize,
    buf: Vec<u8>,
}

impl Iterator for ShardChunks {
    type Item = Result<DataMatrix>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let rows = self.remaining.min(self.chunk_rows);
        self.buf.resize(rows * self.n_cols * 4, 0);
        if let Err(e) = self.reader.read_exact(&mut self.buf) {
            self.remaining = 0;
            return Some(Err(SomError::CorruptShard {
                path: self.path.clone(),
                msg: format!("truncated data: {e}"),
            }));
        }
        self.remaining -= rows;
        let values: Vec<f32> = self
            .buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            self.remaining = 0;
            return Some(Err(SomError::CorruptShard {
                path: self.path.clone(),
                msg: "non-finite value".into(),
            }));
        }
        Some(Ok(DataMatrix::from_parts_unchecked(rows, self.n_cols, values)))
    }
}
