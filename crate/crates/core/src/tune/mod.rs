//! Random-search hyperparameter tuning over `(QE_T, QE_H)`, Pareto extraction,
//! distillation of per-seed winners into one default configuration, and paired
//! statistics for comparing conditions.

mod distill;
mod pareto;
mod stats;

pub use self::distill::{best_per_seed, distill_defaults, relative_difference, stability_score, StabilityReport};
pub use self::pareto::{dominates, pareto_front};
pub use self::stats::{
    ln_gamma, paired_ci, paired_topk_summary, regularized_incomplete_beta, student_t_cdf, student_t_quantile,
    student_t_two_sided_p, top_k_median, PairedCi, PairedEffect, PairedSummary, UnitTrial, DEFAULT_TOP_K,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataMatrix, DataSource};
use crate::error::{Result, SomError};
use crate::metrics::qe_report;
use crate::parallel::{train_parallel, ParallelOptions};
use crate::sampling::{Sampler, SamplingConfig};
use crate::trainer::{train_with, DecayKind, InitMethod, SomConfig, TrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl NumericRange {
    pub fn linear(lo: f64, hi: f64) -> Self {
        NumericRange {
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        NumericRange { lo, hi, scale: Scale::Log }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(SomError::Config(format!("{name}: need lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if self.scale == Scale::Log && self.lo <= 0.0 {
            return Err(SomError::Config(format!("{name}: log scale needs lo > 0")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let v = match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        };
        v.clamp(self.lo, self.hi)
    }

    /// Uniform integer in `[ceil(lo), floor(hi)]`.
    pub fn sample_int<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let lo = self.lo.ceil().max(0.0) as usize;
        let hi = (self.hi.floor().max(0.0) as usize).max(lo);
        rng.random_range(lo..=hi)
    }
}

/// Bounds of the random search. Fields not listed are copied from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: SomConfig,
    pub eta0: NumericRange,
    pub sigma0: NumericRange,
    pub momentum: NumericRange,
    pub n_iters: NumericRange,
    pub refresh_warmup: NumericRange,
    pub refresh_growth: NumericRange,
    pub lr_decay: Vec<DecayKind>,
    pub radius_decay: Vec<DecayKind>,
    pub init_method: Vec<InitMethod>,
    pub use_momentum: Vec<bool>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            base: SomConfig::default(),
            eta0: NumericRange::log(0.05, 1.0),
            sigma0: NumericRange::linear(0.5, 4.0),
            momentum: NumericRange::linear(0.0, 0.9),
            n_iters: NumericRange::linear(10.0, 40.0),
            refresh_warmup: NumericRange::linear(0.0, 5.0),
            refresh_growth: NumericRange::linear(1.1, 2.5),
            lr_decay: DecayKind::ALL.to_vec(),
            radius_decay: DecayKind::ALL.to_vec(),
            init_method: InitMethod::ALL.to_vec(),
            use_momentum: vec![false, true],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.eta0.validate("eta0")?;
        self.sigma0.validate("sigma0")?;
        self.momentum.validate("momentum")?;
        self.n_iters.validate("n_iters")?;
        self.refresh_warmup.validate("refresh_warmup")?;
        self.refresh_growth.validate("refresh_growth")?;
        if self.momentum.lo < 0.0 || self.momentum.hi >= 1.0 {
            return Err(SomError::Config("momentum range must lie in [0, 1)".into()));
        }
        if self.refresh_growth.lo <= 1.0 {
            return Err(SomError::Config("refresh_growth range must lie above 1".into()));
        }
        if self.lr_decay.is_empty()
            || self.radius_decay.is_empty()
            || self.init_method.is_empty()
            || self.use_momentum.is_empty()
        {
            return Err(SomError::Config("categorical sets must be non-empty".into()));
        }
        self.base.validate()
    }
}

fn pick<T: Copy, R: Rng + ?Sized>(options: &[T], rng: &mut R) -> T {
    options[rng.random_range(0..options.len())]
}

/// Draws one configuration. The draw order is fixed, so a given rng state always
/// yields the same configuration.
pub fn sample_trial<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> SomConfig {
    let mut c = space.base.clone();
    c.eta0 = space.eta0.sample(rng);
    c.sigma0 = space.sigma0.sample(rng);
    c.momentum = space.momentum.sample(rng);
    c.n_iters = space.n_iters.sample_int(rng);
    c.refresh.warmup_iters = space.refresh_warmup.sample_int(rng);
    c.refresh.growth = space.refresh_growth.sample(rng);
    c.lr_decay = pick(&space.lr_decay, rng);
    c.radius_decay = pick(&space.radius_decay, rng);
    c.init_method = pick(&space.init_method, rng);
    c.use_momentum = pick(&space.use_momentum, rng);
    c
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub params: SomConfig,
    /// `+inf` (written as `null`) when the trial failed.
    #[serde(with = "inf_as_null")]
    pub qe_train: f64,
    #[serde(with = "inf_as_null")]
    pub qe_holdout: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn qe_balanced(&self) -> f64 {
        (self.qe_train + self.qe_holdout) / 2.0
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct StudySettings {
    pub n_trials: usize,
    pub seeds: Vec<u64>,
    pub sampling: SamplingConfig,
    pub workers: usize,
}

/// Trains and scores `n_trials` sampled configurations for every seed.
/// `on_record` sees each record as soon as it is produced.
pub fn run_study<F>(
    space: &SearchSpace,
    train: &DataMatrix,
    holdout: &DataMatrix,
    settings: &StudySettings,
    mut on_record: F,
) -> Result<Vec<TrialRecord>>
where
    F: FnMut(&TrialRecord) -> Result<()>,
{
    if settings.n_trials == 0 {
        return Err(SomError::InvalidArgument("n_trials must be at least 1".into()));
    }
    if settings.seeds.is_empty() {
        return Err(SomError::InvalidArgument("at least one seed is required".into()));
    }
    space.validate()?;
    let mut records = Vec::with_capacity(settings.n_trials * settings.seeds.len());
    for &seed in &settings.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::rng_streams::TUNE);
        for trial_index in 0..settings.n_trials {
            let mut params = sample_trial(space, &mut rng);
            params.seed = seed;
            let outcome = evaluate_config(&params, train, holdout, &settings.sampling, settings.workers);
            let record = match outcome {
                Ok((qe_train, qe_holdout)) => TrialRecord {
                    trial_index,
                    seed,
                    params,
                    qe_train,
                    qe_holdout,
                    error: None,
                },
                Err(e) => TrialRecord {
                    trial_index,
                    seed,
                    params,
                    qe_train: f64::INFINITY,
                    qe_holdout: f64::INFINITY,
                    error: Some(e.to_string()),
                },
            };
            on_record(&record)?;
            records.push(record);
        }
    }
    Ok(records)
}

/// Trains one configuration on `train` and returns `(QE_T, QE_H)`.
pub fn evaluate_config(
    config: &SomConfig,
    train: &DataMatrix,
    holdout: &DataMatrix,
    sampling: &SamplingConfig,
    workers: usize,
) -> Result<(f64, f64)> {
    let mut sampler = Sampler::new(sampling.clone(), train.n_rows(), config.seed)?;
    let options = TrainOptions {
        log_qe: false,
        ..TrainOptions::default()
    };
    let (model, _) = if workers > 1 {
        train_parallel(
            config,
            DataSource::Memory(train),
            &mut sampler,
            &ParallelOptions::new(workers),
            &options,
        )?
    } else {
        train_with(config, DataSource::Memory(train), &mut sampler, &options)?
    };
    let report = qe_report(&model, train, holdout)?;
    Ok((report.qe_train, report.qe_holdout))
}
