//! Quantization error, wall-clock timing and scaling efficiency.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{DataMatrix, DataSource};
use crate::error::{Result, SomError};
use crate::trainer::{find_bmus, SomModel};

/// Mean Euclidean distance from each sample to its best-matching node.
pub fn quantization_error(model: &SomModel, data: &DataMatrix) -> Result<f64> {
    quantization_error_weights(&model.weights, model.dim, data)
}

pub fn quantization_error_weights(weights: &[f32], dim: usize, data: &DataMatrix) -> Result<f64> {
    if data.is_empty() {
        return Err(SomError::Empty("quantization error of zero samples".into()));
    }
    if data.n_cols() != dim {
        return Err(SomError::DimensionMismatch {
            expected: dim,
            actual: data.n_cols(),
        });
    }
    let (_, dists) = find_bmus(data.values(), weights, dim);
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Quantization error over any data source, streaming shard files chunk by chunk.
pub fn quantization_error_source(weights: &[f32], dim: usize, data: DataSource<'_>) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(SomError::Empty("quantization error of zero samples".into()));
    }
    if data.n_cols() != dim {
        return Err(SomError::DimensionMismatch {
            expected: dim,
            actual: data.n_cols(),
        });
    }
    let mut total = 0.0;
    data.scan(|_, block| {
        let (_, dists) = find_bmus(block, weights, dim);
        total += dists.iter().sum::<f64>();
        Ok(())
    })?;
    Ok(total / data.n_rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QeReport {
    pub qe_train: f64,
    pub qe_holdout: f64,
    pub qe_balanced: f64,
}

impl QeReport {
    pub fn new(qe_train: f64, qe_holdout: f64) -> Self {
        QeReport {
            qe_train,
            qe_holdout,
            qe_balanced: (qe_train + qe_holdout) / 2.0,
        }
    }
}

pub fn qe_report(model: &SomModel, train: &DataMatrix, holdout: &DataMatrix) -> Result<QeReport> {
    Ok(QeReport::new(
        quantization_error(model, train)?,
        quantization_error(model, holdout)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub mean_s: f64,
    pub std_s: f64,
    pub samples_s: Vec<f64>,
}

/// Mean and sample (n − 1) standard deviation; a single value has deviation 0.
pub fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `f` `repeats` times and reports wall-clock statistics.
pub fn time_run<F>(repeats: usize, mut f: F) -> Result<RunTiming>
where
    F: FnMut() -> Result<()>,
{
    if repeats == 0 {
        return Err(SomError::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut samples_s = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        samples_s.push(start.elapsed().as_secs_f64());
    }
    let (mean_s, std_s) = mean_and_sample_std(&samples_s);
    Ok(RunTiming {
        mean_s,
        std_s,
        samples_s,
    })
}

/// `(T_1 / T_G) / G × 100`.
pub fn scaling_efficiency(t1: f64, tg: f64, g: usize) -> Result<f64> {
    if !(t1 > 0.0 && tg > 0.0 && g > 0) {
        return Err(SomError::InvalidArgument(format!(
            "scaling efficiency needs positive inputs, got T1={t1} TG={tg} G={g}"
        )));
    }
    Ok(t1 / tg / g as f64 * 100.0)
}

/// Single-worker runtime at `target`, assuming runtime is proportional to the axis
/// value from the last measured point `(axis_value, runtime)`.
pub fn extrapolate_baseline(last_point: Option<(f64, f64)>, target: f64) -> Result<f64> {
    let (axis, runtime) =
        last_point.ok_or_else(|| SomError::InvalidArgument("no single-worker baseline to extrapolate from".into()))?;
    if !(axis > 0.0) || target < axis {
        return Err(SomError::InvalidArgument(format!(
            "cannot extrapolate from axis value {axis} to {target}"
        )));
    }
    Ok(runtime * (target / axis))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub workers: usize,
    pub runtime_s: f64,
    pub efficiency_pct: f64,
    pub baseline_extrapolated: bool,
}

/// One line of benchmark output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub axis: String,
    pub value: u64,
    #[serde(rename = "G")]
    pub workers: usize,
    pub topology: String,
    pub sampling: String,
    pub nodes: usize,
    pub runtime_mean_s: Option<f64>,
    pub runtime_std_s: Option<f64>,
    pub efficiency_pct: Option<f64>,
    pub extrapolated: bool,
    pub timed_out: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qe_single_term() {
        let data = DataMatrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        assert_eq!(quantization_error_weights(&[0.0, 0.0], 2, &data).unwrap(), 2.0);
        assert_eq!(quantization_error_weights(&[2.0, 0.0, 5.0, 5.0], 2, &data).unwrap(), 0.0);
        assert!(quantization_error_weights(&[0.0], 1, &data).is_err());
        assert!(quantization_error_weights(&[0.0, 0.0], 2, &DataMatrix::empty(2)).is_err());
    }

    #[test]
    fn balanced_is_mean() {
        let r = QeReport::new(0.2, 0.4);
        assert!((r.qe_balanced - 0.3).abs() < 1e-15);
    }

    #[test]
    fn efficiency_formula() {
        assert_eq!(scaling_efficiency(100.0, 50.0, 2).unwrap(), 100.0);
        assert_eq!(scaling_efficiency(100.0, 100.0, 2).unwrap(), 50.0);
        assert_eq!(scaling_efficiency(100.0, 20.0, 4).unwrap(), 125.0);
        assert_eq!(scaling_efficiency(3.7, 3.7, 1).unwrap(), 100.0);
        assert!(scaling_efficiency(0.0, 1.0, 1).is_err());
        assert!(scaling_efficiency(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn baseline_extrapolation() {
        assert_eq!(extrapolate_baseline(Some((1e8, 120.0)), 2e8).unwrap(), 240.0);
        assert_eq!(extrapolate_baseline(Some((1e8, 120.0)), 1e8).unwrap(), 120.0);
        assert_eq!(extrapolate_baseline(Some((5e8, 300.0)), 1e9).unwrap(), 600.0);
        assert!(extrapolate_baseline(None, 1e9).is_err());
    }

    #[test]
    fn timing_stats() {
        let t = time_run(1, || Ok(())).unwrap();
        assert_eq!(t.std_s, 0.0);
        assert!(time_run(0, || Ok(())).is_err());
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn stub_duration() {
        let t = time_run(2, || {
            std::thread::sleep(std::time::Duration::from_millis(100));
            Ok(())
        })
        .unwrap();
        assert!(t.mean_s >= 0.1 && t.mean_s < 0.3, "{}", t.mean_s);
    }
}
