//! Shared-nothing data-parallel training.
//!
//! The dataset rows are split into `G` contiguous shards, each moved into its own
//! worker thread. Every iteration the coordinator broadcasts the current weights
//! and influence matrix, each worker accumulates the selected rows it owns, and the
//! coordinator sums the `G` results in worker order before applying one update.

use std::borrow::Cow;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::dataset::{DataSource, ShardSet};
use crate::error::{Result, SomError};
use crate::partition::balanced_ranges;
use crate::sampling::Sampler;
use crate::trainer::{
    accumulate_shard, run_training, IterationAccumulators, IterationExecutor, IterationInput, LocalShard,
    RunLog, ShardOutput, SomConfig, SomModel, TrainOptions,
};

pub const DEFAULT_BARRIER_TIMEOUT: Duration = Duration::from_secs(60);

/// Contiguous near-equal partition of `items` into `g` slices (sizes differ by at
/// most one; trailing slices may be empty).
pub fn assign_shards<T>(items: &[T], g: usize) -> Result<Vec<&[T]>> {
    if g == 0 {
        return Err(SomError::InvalidArgument("worker count must be at least 1".into()));
    }
    Ok(balanced_ranges(items.len(), g).into_iter().map(|r| &items[r]).collect())
}

/// Splits a data source into `g` owned worker shards. In-memory rows are split
/// evenly; shard files are handed out whole, in order.
pub fn shard_data(data: DataSource<'_>, g: usize) -> Result<Vec<LocalShard<'static>>> {
    if g == 0 {
        return Err(SomError::InvalidArgument("worker count must be at least 1".into()));
    }
    match data {
        DataSource::Memory(m) => Ok(balanced_ranges(m.n_rows(), g)
            .into_iter()
            .map(|r| LocalShard::Memory {
                offset: r.start,
                data: Cow::Owned(m.slice_rows(r.start, r.end)),
            })
            .collect()),
        DataSource::Shards(set) => {
            let offsets = set.row_offsets();
            Ok(balanced_ranges(set.n_shards(), g)
                .into_iter()
                .map(|r| LocalShard::Disk {
                    set: ShardSet {
                        shard_paths: set.shard_paths[r.clone()].to_vec(),
                        rows_per_shard: set.rows_per_shard[r.clone()].to_vec(),
                        n_cols: set.n_cols,
                        chunk_rows: set.chunk_rows,
                    },
                    offsets: offsets[r].to_vec(),
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkerContext {
    pub worker_id: usize,
    pub n_workers: usize,
    pub shard: LocalShard<'static>,
}

/// Accumulates this worker's share of the selection. Read-only on the inputs.
pub fn worker_step(ctx: &WorkerContext, input: &IterationInput, n_chunks: usize) -> Result<ShardOutput> {
    accumulate_shard(&ctx.shard, input, n_chunks)
}

/// Sums per-worker accumulators in ascending worker order.
pub fn reduce(buffers: &[IterationAccumulators]) -> Result<IterationAccumulators> {
    let (first, rest) = buffers
        .split_first()
        .ok_or_else(|| SomError::InvalidArgument("reduce needs at least one contribution".into()))?;
    let mut total = first.clone();
    for b in rest {
        total.add_assign(b)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct ParallelOptions {
    pub workers: usize,
    pub barrier_timeout: Duration,
    /// Test hook: this worker sleeps for the given time before every step.
    #[doc(hidden)]
    pub stall: Option<(usize, Duration)>,
}

impl ParallelOptions {
    pub fn new(workers: usize) -> Self {
        ParallelOptions {
            workers,
            barrier_timeout: DEFAULT_BARRIER_TIMEOUT,
            stall: None,
        }
    }
}

type WorkerReply = (usize, Result<ShardOutput>);

/// Coordinator side of the worker pool.
pub struct ThreadedExecutor {
    commands: Vec<Sender<Arc<IterationInput>>>,
    replies: Receiver<WorkerReply>,
    handles: Vec<JoinHandle<()>>,
    timeout: Duration,
    reduces: usize,
    barrier_wait: Duration,
    abandoned: bool,
}

impl ThreadedExecutor {
    pub fn spawn(shards: Vec<LocalShard<'static>>, n_chunks: usize, options: &ParallelOptions) -> Result<Self> {
        let g = shards.len();
        if g == 0 {
            return Err(SomError::InvalidArgument("worker count must be at least 1".into()));
        }
        let (reply_tx, replies) = mpsc::channel::<WorkerReply>();
        let mut commands = Vec::with_capacity(g);
        let mut handles = Vec::with_capacity(g);
        for (worker_id, shard) in shards.into_iter().enumerate() {
            let (tx, rx) = mpsc::channel::<Arc<IterationInput>>();
            let reply = reply_tx.clone();
            let ctx = WorkerContext {
                worker_id,
                n_workers: g,
                shard,
            };
            let stall = options.stall.filter(|&(w, _)| w == worker_id).map(|(_, d)| d);
            let handle = std::thread::Builder::new()
                .name(format!("som-worker-{worker_id}"))
                .spawn(move || {
                    for input in rx {
                        if let Some(d) = stall {
                            std::thread::sleep(d);
                        }
                        let out = worker_step(&ctx, &input, n_chunks);
                        if reply.send((ctx.worker_id, out)).is_err() {
                            break;
                        }
                    }
                })
                .map_err(|e| SomError::Worker {
                    worker: worker_id,
                    msg: format!("failed to spawn: {e}"),
                })?;
            commands.push(tx);
            handles.push(handle);
        }
        Ok(ThreadedExecutor {
            commands,
            replies,
            handles,
            timeout: options.barrier_timeout,
            reduces: 0,
            barrier_wait: Duration::ZERO,
            abandoned: false,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.commands.len()
    }
}

impl IterationExecutor for ThreadedExecutor {
    fn run_iteration(&mut self, input: &IterationInput) -> Result<ShardOutput> {
        let g = self.commands.len();
        let shared = Arc::new(input.clone());
        for (w, tx) in self.commands.iter().enumerate() {
            if tx.send(Arc::clone(&shared)).is_err() {
                self.abandoned = true;
                return Err(SomError::Worker {
                    worker: w,
                    msg: "worker exited".into(),
                });
            }
        }

        let deadline = Instant::now() + self.timeout;
        let mut slots: Vec<Option<ShardOutput>> = vec![None; g];
        let mut first_arrival = None;
        let mut received = 0;
        while received < g {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.replies.recv_timeout(wait) {
                Ok((w, out)) => {
                    first_arrival.get_or_insert_with(Instant::now);
                    let out = out.map_err(|e| {
                        self.abandoned = true;
                        SomError::Worker {
                            worker: w,
                            msg: e.to_string(),
                        }
                    })?;
                    slots[w] = Some(out);
                    received += 1;
                }
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                    self.abandoned = true;
                    let missing = slots
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.is_none())
                        .map(|(w, _)| w)
                        .collect();
                    return Err(SomError::ReduceTimeout {
                        missing,
                        waited_ms: self.timeout.as_millis(),
                    });
                }
            }
        }
        if let Some(t) = first_arrival {
            self.barrier_wait += t.elapsed();
        }

        let outputs: Vec<ShardOutput> = slots.into_iter().map(|s| s.expect("all slots filled")).collect();
        let accs: Vec<IterationAccumulators> = outputs.iter().map(|o| o.acc.clone()).collect();
        let acc = reduce(&accs)?;
        self.reduces += 1;
        let distances = input.want_distances.then(|| {
            outputs
                .into_iter()
                .flat_map(|o| o.distances.unwrap_or_default())
                .collect()
        });
        Ok(ShardOutput { acc, distances })
    }

    fn reduce_count(&self) -> usize {
        self.reduces
    }

    fn barrier_wait_secs(&self) -> f64 {
        self.barrier_wait.as_secs_f64()
    }
}

impl Drop for ThreadedExecutor {
    fn drop(&mut self) {
        self.commands.clear();
        // a stuck worker would block join forever; leave it detached instead
        if !self.abandoned {
            for h in self.handles.drain(..) {
                let _ = h.join();
            }
        }
    }
}

/// Trains with `options.workers` worker threads and one ordered reduce per
/// iteration.
pub fn train_parallel(
    config: &SomConfig,
    data: DataSource<'_>,
    sampler: &mut Sampler,
    options: &ParallelOptions,
    train_options: &TrainOptions,
) -> Result<(SomModel, RunLog)> {
    let shards = shard_data(data, options.workers)?;
    let mut exec = ThreadedExecutor::spawn(shards, config.n_chunks, options)?;
    run_training(config, data, sampler, &mut exec, train_options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_uniform, write_shards, DataMatrix};
    use crate::sampling::SamplingConfig;
    use crate::topology::TopologyKind;
    use crate::trainer::train;

    #[test]
    fn balanced_assignment() {
        let rows: Vec<usize> = (0..10).collect();
        let parts = assign_shards(&rows, 4).unwrap();
        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert_eq!(parts.concat(), rows);
        assert_eq!(assign_shards(&rows, 1).unwrap(), vec![&rows[..]]);
        assert!(assign_shards(&rows, 0).is_err());
        assert_eq!(assign_shards(&rows[..2], 3).unwrap()[2].len(), 0);
    }

    #[test]
    fn reduce_sums_in_order() {
        let mut a = IterationAccumulators::zeros(1, 1);
        a.u[0] = 1.5;
        a.h[0] = 2.0;
        let mut b = IterationAccumulators::zeros(1, 1);
        b.u[0] = -0.5;
        b.h[0] = 1.0;
        assert_eq!(reduce(std::slice::from_ref(&a)).unwrap(), a);
        let s = reduce(&[a, b]).unwrap();
        assert_eq!((s.u[0], s.h[0]), (1.0, 3.0));
        assert!(reduce(&[]).is_err());
    }

    fn small_config(kind: TopologyKind) -> SomConfig {
        SomConfig {
            width: 3,
            height: 3,
            topology: kind,
            n_iters: 6,
            ..SomConfig::default()
        }
    }

    #[test]
    fn empty_shard_contributes_zero() {
        let data = synth_uniform(3, 2, 0).unwrap();
        let shards = shard_data(DataSource::Memory(&data), 5).unwrap();
        let ctx = WorkerContext {
            worker_id: 4,
            n_workers: 5,
            shard: shards[4].clone(),
        };
        let input = IterationInput {
            iter: 0,
            weights: Arc::new(vec![0.0; 4]),
            influence: Arc::new(vec![1.0, 0.5, 0.5, 1.0]),
            eta: 0.5,
            selection: Arc::new(vec![0, 1, 2]),
            want_distances: true,
        };
        let out = worker_step(&ctx, &input, 2).unwrap();
        assert_eq!(out.acc, IterationAccumulators::zeros(2, 2));
        assert_eq!(out.distances, Some(vec![]));
    }

    #[test]
    fn single_worker_matches_local_training() {
        let data = synth_uniform(200, 3, 5).unwrap();
        let config = small_config(TopologyKind::Mst);
        let mut s1 = Sampler::new(SamplingConfig::full(), 200, 1).unwrap();
        let (local, _) = train(&config, DataSource::Memory(&data), &mut s1).unwrap();
        let mut s2 = Sampler::new(SamplingConfig::full(), 200, 1).unwrap();
        let (par, log) = train_parallel(
            &config,
            DataSource::Memory(&data),
            &mut s2,
            &ParallelOptions::new(1),
            &TrainOptions::default(),
        )
        .unwrap();
        assert_eq!(local.weights, par.weights);
        assert_eq!(log.reduce_count, config.n_iters);
    }

    #[test]
    fn disk_shards_assigned_whole() {
        let data = DataMatrix::new(10, 1, (0..10).map(|v| v as f32).collect()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let set = write_shards(&data, dir.path(), 3, 2).unwrap();
        let shards = shard_data(DataSource::Shards(&set), 2).unwrap();
        let ranges: Vec<_> = shards.iter().map(|s| s.row_range()).collect();
        assert_eq!(ranges, vec![0..7, 7..10]);
    }

    #[test]
    fn stalled_worker_times_out_by_name() {
        let data = synth_uniform(40, 2, 0).unwrap();
        let config = small_config(TopologyKind::Hexagonal);
        let mut sampler = Sampler::new(SamplingConfig::full(), 40, 0).unwrap();
        let options = ParallelOptions {
            workers: 3,
            barrier_timeout: Duration::from_millis(50),
            stall: Some((1, Duration::from_millis(400))),
        };
        let err = train_parallel(
            &config,
            DataSource::Memory(&data),
            &mut sampler,
            &options,
            &TrainOptions::default(),
        )
        .unwrap_err();
        match err {
            SomError::ReduceTimeout { missing, .. } => assert_eq!(missing, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
