//! Batch SOM training.
//!
//! Each iteration selects samples, refreshes the topology if due, and accumulates
//! for every node `j`
//!
//! ```text
//! U_j = Σ_x η_t · h(j, bmu(x)) · (x − w_j)        H_j = Σ_x h(j, bmu(x))
//! ```
//!
//! in `f64`, visiting samples in ascending global index. The node then moves by
//! `U_j / H_j` (plus optional momentum). Because the order of terms is fixed, the
//! result does not depend on how samples are chunked.

use std::borrow::Cow;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{stream_chunks, DataMatrix, DataSource, ShardSet};
use crate::error::{Result, SomError};
use crate::partition::balanced_ranges;
use crate::sampling::Sampler;
use crate::topology::{refresh_topology, RefreshPolicy, TopologyKind, TopologyState};

/// Nodes whose influence mass falls below this are left in place.
pub const H_FLOOR: f64 = 1e-12;
pub const LR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Linear,
    Exponential,
}

impl DecayKind {
    pub const ALL: [DecayKind; 2] = [DecayKind::Linear, DecayKind::Exponential];

    pub fn as_str(self) -> &'static str {
        match self {
            DecayKind::Linear => "linear",
            DecayKind::Exponential => "exponential",
        }
    }
}

impl std::str::FromStr for DecayKind {
    type Err = SomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DecayKind::Linear),
            "exponential" | "exp" => Ok(DecayKind::Exponential),
            _ => Err(SomError::Config(format!("unknown decay kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    SampleDraw,
    UniformBox,
    PcaPlane,
}

impl InitMethod {
    pub const ALL: [InitMethod; 3] = [InitMethod::SampleDraw, InitMethod::UniformBox, InitMethod::PcaPlane];

    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::SampleDraw => "sample_draw",
            InitMethod::UniformBox => "uniform_box",
            InitMethod::PcaPlane => "pca_plane",
        }
    }
}

impl std::str::FromStr for InitMethod {
    type Err = SomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample_draw" | "sample" => Ok(InitMethod::SampleDraw),
            "uniform_box" | "uniform" => Ok(InitMethod::UniformBox),
            "pca_plane" | "pca" => Ok(InitMethod::PcaPlane),
            _ => Err(SomError::Config(format!("unknown init method {s:?}"))),
        }
    }
}

/// Map shape, schedules and training controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub width: usize,
    pub height: usize,
    pub topology: TopologyKind,
    pub n_iters: usize,
    pub eta0: f64,
    pub lr_decay: DecayKind,
    pub sigma0: f64,
    pub radius_decay: DecayKind,
    pub sigma_min: f64,
    pub init_method: InitMethod,
    pub use_momentum: bool,
    pub momentum: f64,
    pub refresh: RefreshPolicy,
    /// Sequential chunks per worker and iteration.
    pub n_chunks: usize,
    /// Tile edge for pairwise distances, RNG candidates and Floyd-Warshall blocks.
    pub topo_chunk: usize,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        let n_iters = 20;
        SomConfig {
            width: 10,
            height: 10,
            topology: TopologyKind::Hexagonal,
            n_iters,
            eta0: 0.5,
            lr_decay: DecayKind::Exponential,
            sigma0: 1.0,
            radius_decay: DecayKind::Exponential,
            sigma_min: 0.3,
            init_method: InitMethod::SampleDraw,
            use_momentum: false,
            momentum: 0.5,
            refresh: RefreshPolicy::for_iterations(n_iters),
            n_chunks: 1,
            topo_chunk: 256,
            seed: 0,
        }
    }
}

impl SomConfig {
    pub fn n_nodes(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SomError::Config(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("grid {}x{} has no nodes", self.width, self.height));
        }
        if self.n_nodes() >= u16::MAX as usize {
            return bad(format!("{} nodes exceed the supported maximum", self.n_nodes()));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 {} must be > 0", self.eta0));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad(format!("sigma0 {} must be > 0", self.sigma0));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return bad(format!("sigma_min {} must be > 0", self.sigma_min));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.refresh.growth > 1.0 && self.refresh.growth.is_finite()) {
            return bad(format!("refresh growth {} must be > 1", self.refresh.growth));
        }
        if self.refresh.max_interval == 0 {
            return bad("refresh max_interval must be >= 1".into());
        }
        if self.n_chunks == 0 || self.topo_chunk == 0 {
            return bad("n_chunks and topo_chunk must be >= 1".into());
        }
        Ok(())
    }

    pub fn sigma_at(&self, t: usize) -> f64 {
        schedule_value(self.sigma0, self.radius_decay, t, self.n_iters, self.sigma_min)
    }

    pub fn eta_at(&self, t: usize) -> f64 {
        schedule_value(self.eta0, self.lr_decay, t, self.n_iters, LR_FLOOR)
    }
}

/// `max(floor, v0·(1 − t/T))` or `max(floor, v0·exp(−3t/T))`.
pub fn schedule_value(v0: f64, kind: DecayKind, t: usize, n_iters: usize, floor: f64) -> f64 {
    let frac = if n_iters == 0 { 0.0 } else { t as f64 / n_iters as f64 };
    let v = match kind {
        DecayKind::Linear => v0 * (1.0 - frac),
        DecayKind::Exponential => v0 * (-3.0 * frac).exp(),
    };
    v.max(floor)
}

/// Trained (or in-training) map state.
#[derive(Debug, Clone)]
pub struct SomModel {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    /// `P × d` row-major node weights.
    pub weights: Vec<f32>,
    pub topology: TopologyState,
    /// Last applied per-node step, zero unless momentum is enabled.
    pub prev_update: Vec<f64>,
    pub iter: usize,
}

impl SomModel {
    pub fn n_nodes(&self) -> usize {
        self.width * self.height
    }

    pub fn kind(&self) -> TopologyKind {
        self.topology.kind()
    }

    pub fn node(&self, j: usize) -> &[f32] {
        &self.weights[j * self.dim..(j + 1) * self.dim]
    }
}

/// Per-iteration update sums.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationAccumulators {
    pub n_nodes: usize,
    pub dim: usize,
    /// `P × d` displacement numerators.
    pub u: Vec<f64>,
    /// `P` influence denominators.
    pub h: Vec<f64>,
    /// Sum of BMU distances of the accumulated samples, for logging.
    pub qe_sum: f64,
    pub n_samples: u64,
}

impl IterationAccumulators {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        IterationAccumulators {
            n_nodes,
            dim,
            u: vec![0.0; n_nodes * dim],
            h: vec![0.0; n_nodes],
            qe_sum: 0.0,
            n_samples: 0,
        }
    }

    pub fn reset(&mut self) {
        self.u.iter_mut().for_each(|v| *v = 0.0);
        self.h.iter_mut().for_each(|v| *v = 0.0);
        self.qe_sum = 0.0;
        self.n_samples = 0;
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &IterationAccumulators) -> Result<()> {
        if other.u.len() != self.u.len() || other.h.len() != self.h.len() {
            return Err(SomError::DimensionMismatch {
                expected: self.u.len(),
                actual: other.u.len(),
            });
        }
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += b;
        }
        for (a, b) in self.h.iter_mut().zip(&other.h) {
            *a += b;
        }
        self.qe_sum += other.qe_sum;
        self.n_samples += other.n_samples;
        Ok(())
    }
}

/// Best-matching unit and its Euclidean distance for every row of `rows`.
/// Ties go to the lowest node index.
///
/// Squared distances are summed in `f64` over four interleaved lanes (feature `k`
/// goes to lane `k % 4`), so every row gets the same arithmetic wherever it is
/// evaluated.
pub fn find_bmus(rows: &[f32], weights: &[f32], dim: usize) -> (Vec<u32>, Vec<f64>) {
    let n = rows.len() / dim;
    let w64: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
    let mut x64 = vec![0.0f64; dim];
    let mut bmus = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for x in rows.chunks_exact(dim) {
        for (a, &b) in x64.iter_mut().zip(x) {
            *a = b as f64;
        }
        let (b, d2) = bmu_of(&x64, &w64, dim);
        bmus.push(b);
        dists.push(d2.max(0.0).sqrt());
    }
    (bmus, dists)
}

#[inline]
fn sq_dist(x: &[f64], w: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut xs = x.chunks_exact(4);
    let mut ws = w.chunks_exact(4);
    for (a, b) in (&mut xs).zip(&mut ws) {
        for l in 0..4 {
            let diff = a[l] - b[l];
            lanes[l] += diff * diff;
        }
    }
    for (l, (a, b)) in xs.remainder().iter().zip(ws.remainder()).enumerate() {
        let diff = a - b;
        lanes[l] += diff * diff;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

#[inline]
fn bmu_of(x: &[f64], weights: &[f64], dim: usize) -> (u32, f64) {
    let mut best = (0u32, f64::INFINITY);
    for (j, w) in weights.chunks_exact(dim).enumerate() {
        let d2 = sq_dist(x, w);
        if d2 < best.1 {
            best = (j as u32, d2);
        }
    }
    best
}

/// Adds the contributions of `rows` (in row order) to `acc`. `influence` is the
/// symmetric `P × P` neighbourhood matrix.
pub fn accumulate(
    rows: &[f32],
    bmus: &[u32],
    dists: &[f64],
    weights: &[f32],
    influence: &[f64],
    eta: f64,
    acc: &mut IterationAccumulators,
) {
    let (p, d) = (acc.n_nodes, acc.dim);
    debug_assert_eq!(influence.len(), p * p);
    debug_assert_eq!(weights.len(), p * d);
    let w64: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
    for ((x, &b), &dist) in rows.chunks_exact(d).zip(bmus).zip(dists) {
        let h_row = &influence[b as usize * p..(b as usize + 1) * p];
        for (j, &hv) in h_row.iter().enumerate() {
            acc.h[j] += hv;
            let coef = eta * hv;
            let u = &mut acc.u[j * d..(j + 1) * d];
            let w = &w64[j * d..(j + 1) * d];
            for k in 0..d {
                u[k] += coef * (x[k] as f64 - w[k]);
            }
        }
        acc.qe_sum += dist;
        acc.n_samples += 1;
    }
}

/// Applies `U_j / H_j` (plus momentum) to every node.
pub fn apply_update(model: &mut SomModel, acc: &IterationAccumulators, config: &SomConfig) -> Result<()> {
    let (p, d) = (model.n_nodes(), model.dim);
    if acc.n_nodes != p || acc.dim != d {
        return Err(SomError::DimensionMismatch {
            expected: p * d,
            actual: acc.n_nodes * acc.dim,
        });
    }
    let beta = if config.use_momentum { config.momentum } else { 0.0 };
    for j in 0..p {
        let hj = acc.h[j];
        let prev = &mut model.prev_update[j * d..(j + 1) * d];
        let w = &mut model.weights[j * d..(j + 1) * d];
        if hj < H_FLOOR {
            prev.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        for k in 0..d {
            let mut delta = acc.u[j * d + k] / hj;
            if config.use_momentum {
                delta += beta * prev[k];
            }
            let next = (w[k] as f64 + delta) as f32;
            if !delta.is_finite() || !next.is_finite() {
                return Err(SomError::NonFinite { node: j });
            }
            w[k] = next;
            prev[k] = if config.use_momentum { delta } else { 0.0 };
        }
    }
    Ok(())
}

/// Initial node weights, `P × d`.
pub fn init_weights<R: Rng + ?Sized>(config: &SomConfig, data: DataSource<'_>, rng: &mut R) -> Result<Vec<f32>> {
    let n = data.n_rows();
    let d = data.n_cols();
    let p = config.n_nodes();
    if n == 0 {
        return Err(SomError::Empty("cannot initialize from zero rows".into()));
    }
    match config.init_method {
        InitMethod::SampleDraw => {
            let picks: Vec<usize> = if p <= n {
                rand::seq::index::sample(rng, n, p).into_vec()
            } else {
                (0..p).map(|_| rng.random_range(0..n)).collect()
            };
            Ok(data.fetch_rows(&picks)?.into_values())
        }
        InitMethod::UniformBox => {
            let mut lo = vec![f32::INFINITY; d];
            let mut hi = vec![f32::NEG_INFINITY; d];
            data.scan(|_, block| {
                for row in block.chunks_exact(d) {
                    for k in 0..d {
                        lo[k] = lo[k].min(row[k]);
                        hi[k] = hi[k].max(row[k]);
                    }
                }
                Ok(())
            })?;
            let mut w = Vec::with_capacity(p * d);
            for _ in 0..p {
                for k in 0..d {
                    let u: f64 = rng.random();
                    let v = (lo[k] as f64 + u * (hi[k] as f64 - lo[k] as f64)) as f32;
                    w.push(v.clamp(lo[k], hi[k]));
                }
            }
            Ok(w)
        }
        InitMethod::PcaPlane => pca_plane(config, data),
    }
}

fn pca_plane(config: &SomConfig, data: DataSource<'_>) -> Result<Vec<f32>> {
    let n = data.n_rows() as f64;
    let d = data.n_cols();
    let mut mean = vec![0.0f64; d];
    data.scan(|_, block| {
        for row in block.chunks_exact(d) {
            for k in 0..d {
                mean[k] += row[k] as f64;
            }
        }
        Ok(())
    })?;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0f64; d * d];
    data.scan(|_, block| {
        let mut c = vec![0.0f64; d];
        for row in block.chunks_exact(d) {
            for k in 0..d {
                c[k] = row[k] as f64 - mean[k];
            }
            for a in 0..d {
                for b in a..d {
                    cov[a * d + b] += c[a] * c[b];
                }
            }
        }
        Ok(())
    })?;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / n;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }

    let (l1, v1) = power_iteration(&cov, d, &[]);
    let (l2, v2) = if d > 1 { power_iteration(&cov, d, &[&v1]) } else { (0.0, vec![0.0; d]) };
    let (s1, s2) = (l1.max(0.0).sqrt(), l2.max(0.0).sqrt());

    let span = |i: usize, len: usize| if len <= 1 { 0.0 } else { -2.0 + 4.0 * i as f64 / (len - 1) as f64 };
    let mut w = Vec::with_capacity(config.n_nodes() * d);
    for r in 0..config.height {
        let b = span(r, config.height) * s2;
        for c in 0..config.width {
            let a = span(c, config.width) * s1;
            for k in 0..d {
                w.push((mean[k] + a * v1[k] + b * v2[k]) as f32);
            }
        }
    }
    Ok(w)
}

/// Dominant eigenpair of a symmetric matrix restricted to the complement of
/// `deflate` (unit vectors).
fn power_iteration(m: &[f64], d: usize, deflate: &[&Vec<f64>]) -> (f64, Vec<f64>) {
    let project = |v: &mut Vec<f64>| {
        for u in deflate {
            let dot: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u.iter()).for_each(|(a, b)| *a -= dot * b);
        }
    };
    let normalize = |v: &mut Vec<f64>| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|a| *a /= norm);
        }
        norm
    };
    // fixed, non-symmetric start keeps the result deterministic
    let mut v: Vec<f64> = (0..d).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    project(&mut v);
    if normalize(&mut v) == 0.0 {
        return (0.0, vec![0.0; d]);
    }
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut next: Vec<f64> = (0..d)
            .map(|a| (0..d).map(|b| m[a * d + b] * v[b]).sum())
            .collect();
        project(&mut next);
        let norm = normalize(&mut next);
        if norm == 0.0 {
            return (0.0, v);
        }
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        lambda = norm;
        if change < 1e-13 {
            break;
        }
    }
    (lambda, v)
}

/// One worker's portion of the training rows.
#[derive(Debug, Clone)]
pub enum LocalShard<'a> {
    /// Rows `offset..offset + data.n_rows()` of the full dataset.
    Memory { data: Cow<'a, DataMatrix>, offset: usize },
    /// Whole shard files; `offsets[i]` is the global index of shard `i`'s first row.
    Disk { set: ShardSet, offsets: Vec<usize> },
}

impl LocalShard<'_> {
    pub fn row_range(&self) -> std::ops::Range<usize> {
        match self {
            LocalShard::Memory { data, offset } => *offset..offset + data.n_rows(),
            LocalShard::Disk { set, offsets } => match offsets.first() {
                Some(&start) => start..start + set.total_rows(),
                None => 0..0,
            },
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            LocalShard::Memory { data, .. } => data.n_cols(),
            LocalShard::Disk { set, .. } => set.n_cols,
        }
    }

    pub fn into_owned(self) -> LocalShard<'static> {
        match self {
            LocalShard::Memory { data, offset } => LocalShard::Memory {
                data: Cow::Owned(data.into_owned()),
                offset,
            },
            LocalShard::Disk { set, offsets } => LocalShard::Disk { set, offsets },
        }
    }
}

/// Everything a worker needs for one iteration. Shared read-only.
#[derive(Debug, Clone)]
pub struct IterationInput {
    pub iter: usize,
    pub weights: Arc<Vec<f32>>,
    pub influence: Arc<Vec<f64>>,
    pub eta: f64,
    /// Selected global row indices, ascending.
    pub selection: Arc<Vec<usize>>,
    pub want_distances: bool,
}

#[derive(Debug, Clone)]
pub struct ShardOutput {
    pub acc: IterationAccumulators,
    /// BMU distances of the processed rows, in selection order, when requested.
    pub distances: Option<Vec<f64>>,
}

/// Accumulates the selected rows that fall inside `shard`, in ascending order, in
/// `n_chunks` sequential chunks (memory) or in file chunks (disk).
pub fn accumulate_shard(shard: &LocalShard<'_>, input: &IterationInput, n_chunks: usize) -> Result<ShardOutput> {
    let d = shard.n_cols();
    let p = input.weights.len() / d;
    let mut acc = IterationAccumulators::zeros(p, d);
    let mut distances = input.want_distances.then(Vec::new);

    let range = shard.row_range();
    let sel = &input.selection[..];
    let lo = sel.partition_point(|&i| i < range.start);
    let hi = sel.partition_point(|&i| i < range.end);
    let local_sel = &sel[lo..hi];

    let mut process = |rows: &[f32]| {
        let (bmus, dists) = find_bmus(rows, &input.weights, d);
        accumulate(rows, &bmus, &dists, &input.weights, &input.influence, input.eta, &mut acc);
        if let Some(out) = distances.as_mut() {
            out.extend_from_slice(&dists);
        }
    };

    match shard {
        LocalShard::Memory { data, offset } => {
            for part in balanced_ranges(local_sel.len(), n_chunks.max(1)) {
                let idx = &local_sel[part];
                if idx.is_empty() {
                    continue;
                }
                let first = idx[0] - offset;
                let last = idx[idx.len() - 1] - offset;
                if last - first + 1 == idx.len() {
                    process(&data.values()[first * d..(last + 1) * d]);
                } else {
                    let local: Vec<usize> = idx.iter().map(|&i| i - offset).collect();
                    process(data.select_rows(&local).values());
                }
            }
        }
        LocalShard::Disk { set, offsets } => {
            let mut next = 0;
            for (s, &shard_start) in offsets.iter().enumerate() {
                let mut chunk_start = shard_start;
                for chunk in stream_chunks(set, s)? {
                    let chunk = chunk?;
                    let chunk_end = chunk_start + chunk.n_rows();
                    let begin = next;
                    while next < local_sel.len() && local_sel[next] < chunk_end {
                        next += 1;
                    }
                    let idx = &local_sel[begin..next];
                    if idx.len() == chunk.n_rows() {
                        process(chunk.values());
                    } else if !idx.is_empty() {
                        let local: Vec<usize> = idx.iter().map(|&i| i - chunk_start).collect();
                        process(chunk.select_rows(&local).values());
                    }
                    chunk_start = chunk_end;
                }
            }
        }
    }
    Ok(ShardOutput { acc, distances })
}

/// Produces the globally reduced accumulators for one iteration.
pub trait IterationExecutor {
    fn run_iteration(&mut self, input: &IterationInput) -> Result<ShardOutput>;

    /// Number of reductions performed so far.
    fn reduce_count(&self) -> usize {
        0
    }

    fn barrier_wait_secs(&self) -> f64 {
        0.0
    }
}

/// Single-process executor over one shard covering the whole dataset.
pub struct LocalExecutor<'a> {
    shard: LocalShard<'a>,
    n_chunks: usize,
    iterations: usize,
}

impl<'a> LocalExecutor<'a> {
    pub fn new(data: DataSource<'a>, n_chunks: usize) -> Self {
        let shard = match data {
            DataSource::Memory(m) => LocalShard::Memory {
                data: Cow::Borrowed(m),
                offset: 0,
            },
            DataSource::Shards(set) => LocalShard::Disk {
                set: set.clone(),
                offsets: set.row_offsets(),
            },
        };
        LocalExecutor {
            shard,
            n_chunks,
            iterations: 0,
        }
    }
}

impl IterationExecutor for LocalExecutor<'_> {
    fn run_iteration(&mut self, input: &IterationInput) -> Result<ShardOutput> {
        let out = accumulate_shard(&self.shard, input, self.n_chunks)?;
        self.iterations += 1;
        Ok(out)
    }

    /// With one worker the reduce is the identity, once per iteration.
    fn reduce_count(&self) -> usize {
        self.iterations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub eta: f64,
    pub sigma: f64,
    pub refreshed: bool,
    /// Mean BMU distance of this iteration's samples against the pre-update weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qe_train: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<IterationRecord>,
    pub reduce_count: usize,
    pub barrier_wait_s: f64,
    pub refresh_count: usize,
    /// Wall time spent rebuilding topologies and influence matrices.
    pub topology_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub log_qe: bool,
    pub use_influence_cache: bool,
    pub deadline: Option<Instant>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            log_qe: true,
            use_influence_cache: true,
            deadline: None,
        }
    }
}

/// The training loop shared by the local and the parallel trainers.
pub fn run_training(
    config: &SomConfig,
    data: DataSource<'_>,
    sampler: &mut Sampler,
    executor: &mut dyn IterationExecutor,
    options: &TrainOptions,
) -> Result<(SomModel, RunLog)> {
    config.validate()?;
    let d = data.n_cols();
    let p = config.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(crate::rng_streams::INIT);
    let weights = init_weights(config, data, &mut rng)?;

    let mut model = SomModel {
        width: config.width,
        height: config.height,
        dim: d,
        weights,
        topology: TopologyState::initial(config.topology, config.width, config.height),
        prev_update: vec![0.0; p * d],
        iter: 0,
    };
    let mut log = RunLog::default();

    for t in 0..config.n_iters {
        if options.deadline.is_some_and(|dl| Instant::now() >= dl) {
            return Err(SomError::Deadline { iter: t });
        }
        let selection = Arc::new(sampler.select());

        let topo_start = Instant::now();
        let (topology, refreshed) = refresh_topology(
            model.topology,
            &model.weights,
            d,
            &config.refresh,
            t,
            config.topo_chunk,
        )?;
        model.topology = topology;

        let sigma = config.sigma_at(t);
        let eta = config.eta_at(t);
        let influence = if options.use_influence_cache {
            model.topology.cached_influence(sigma)?
        } else {
            Arc::new(model.topology.uncached_influence(sigma)?)
        };
        log.topology_s += topo_start.elapsed().as_secs_f64();

        let input = IterationInput {
            iter: t,
            weights: Arc::new(model.weights.clone()),
            influence,
            eta,
            selection: Arc::clone(&selection),
            want_distances: sampler.wants_distances(),
        };
        let out = executor.run_iteration(&input)?;
        if let Some(dists) = &out.distances {
            sampler.observe(&selection, dists)?;
        }
        apply_update(&mut model, &out.acc, config)?;
        model.iter = t + 1;

        let qe_train = (options.log_qe && out.acc.n_samples > 0)
            .then(|| out.acc.qe_sum / out.acc.n_samples as f64);
        log.records.push(IterationRecord {
            iter: t,
            eta,
            sigma,
            refreshed,
            qe_train,
        });
    }
    log.reduce_count = executor.reduce_count();
    log.barrier_wait_s = executor.barrier_wait_secs();
    log.refresh_count = model.topology.refresh_count();
    Ok((model, log))
}

/// Trains in this thread without any worker reduction.
pub fn train(config: &SomConfig, data: DataSource<'_>, sampler: &mut Sampler) -> Result<(SomModel, RunLog)> {
    train_with(config, data, sampler, &TrainOptions::default())
}

pub fn train_with(
    config: &SomConfig,
    data: DataSource<'_>,
    sampler: &mut Sampler,
    options: &TrainOptions,
) -> Result<(SomModel, RunLog)> {
    let mut exec = LocalExecutor::new(data, config.n_chunks);
    run_training(config, data, sampler, &mut exec, options)
}

/// BMU index and distance for every row, against the model's current weights.
pub fn map_samples(model: &SomModel, data: &DataMatrix) -> Result<Vec<(u32, f64)>> {
    if data.n_cols() != model.dim {
        return Err(SomError::DimensionMismatch {
            expected: model.dim,
            actual: data.n_cols(),
        });
    }
    let (bmus, dists) = find_bmus(data.values(), &model.weights, model.dim);
    Ok(bmus.into_iter().zip(dists).collect())
}
