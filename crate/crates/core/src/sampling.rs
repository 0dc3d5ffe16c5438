//! Per-iteration sample selection: full, uniform random, and adaptive.
//!
//! Every selector returns distinct indices in ascending order, which fixes the
//! global summation order used by the trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SomError};

/// Error value assigned to samples that have never been selected.
pub const UNSEEN_ERROR: f64 = 1e30;
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingBudget {
    Fixed { m0: usize },
    Proportional { rho: f64 },
}

pub fn resolve_budget(budget: SamplingBudget, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(SomError::Empty("cannot sample from zero rows".into()));
    }
    match budget {
        SamplingBudget::Fixed { m0: 0 } => {
            Err(SomError::InvalidArgument("fixed sampling budget must be >= 1".into()))
        }
        SamplingBudget::Fixed { m0 } => Ok(m0),
        SamplingBudget::Proportional { rho } => {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(SomError::InvalidArgument(format!("rho {rho} outside (0, 1]")));
            }
            Ok(((n as f64 * rho).floor() as usize).max(1))
        }
    }
}

pub fn select_full(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Uniform size-`m` subset without replacement, redrawn on every call. Returns all
/// indices when `m >= n`.
pub fn select_random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    if m >= n {
        return select_full(n);
    }
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSamplerState {
    pub last_error: Vec<f64>,
    pub age: Vec<u64>,
    /// Exponent on the normalized error term.
    pub difficulty_weight: f64,
    /// Exponent on the normalized age term.
    pub staleness_weight: f64,
}

impl AdaptiveSamplerState {
    pub fn new(n: usize, difficulty_weight: f64, staleness_weight: f64) -> Self {
        AdaptiveSamplerState {
            last_error: vec![UNSEEN_ERROR; n],
            age: vec![0; n],
            difficulty_weight,
            staleness_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.last_error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_error.is_empty()
    }

    /// Selection weight `(e/max e)^alpha + (a/max a)^beta` per sample.
    pub fn weights(&self) -> Vec<f64> {
        let max_err = self.last_error.iter().copied().fold(0.0, f64::max).max(NORM_FLOOR);
        let max_age = (self.age.iter().copied().max().unwrap_or(0) as f64).max(NORM_FLOOR);
        self.last_error
            .iter()
            .zip(&self.age)
            .map(|(&e, &a)| {
                (e / max_err).powf(self.difficulty_weight)
                    + (a as f64 / max_age).powf(self.staleness_weight)
            })
            .collect()
    }
}

/// Weighted sampling without replacement by exponential keys: each sample draws
/// `-ln(u) / w` and the `m` smallest keys win (ties by index).
pub fn select_adaptive<R: Rng + ?Sized>(
    state: &AdaptiveSamplerState,
    m: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = state.len();
    let m = m.min(n);
    if m == n {
        return select_full(n);
    }
    let mut keyed: Vec<(f64, usize)> = state
        .weights()
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            // u in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if m > 0 {
        keyed.select_nth_unstable_by(m - 1, cmp);
    }
    let mut picked: Vec<usize> = keyed[..m].iter().map(|&(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

/// Records observed distances for the selected samples and advances ages: selected
/// samples reset to 0, all others grow by one.
pub fn update_adaptive(
    state: &mut AdaptiveSamplerState,
    selected: &[usize],
    distances: &[f64],
) -> Result<()> {
    if selected.len() != distances.len() {
        return Err(SomError::DimensionMismatch {
            expected: selected.len(),
            actual: distances.len(),
        });
    }
    let n = state.len();
    if let Some(&bad) = selected.iter().find(|&&i| i >= n) {
        return Err(SomError::InvalidArgument(format!(
            "sample index {bad} out of range for {n} samples"
        )));
    }
    state.age.iter_mut().for_each(|a| *a += 1);
    for (&i, &d) in selected.iter().zip(distances) {
        state.last_error[i] = d;
        state.age[i] = 0;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Full,
    Random,
    Adaptive,
}

impl std::str::FromStr for SamplingMode {
    type Err = SomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SamplingMode::Full),
            "random" => Ok(SamplingMode::Random),
            "adaptive" | "hdssom" => Ok(SamplingMode::Adaptive),
            _ => Err(SomError::Config(format!("unknown sampling mode {s:?}"))),
        }
    }
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::Full => "full",
            SamplingMode::Random => "random",
            SamplingMode::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    pub budget: SamplingBudget,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            mode: SamplingMode::Full,
            budget: SamplingBudget::Proportional { rho: 1.0 },
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl SamplingConfig {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn random(budget: SamplingBudget) -> Self {
        SamplingConfig {
            mode: SamplingMode::Random,
            budget,
            ..Self::default()
        }
    }

    pub fn adaptive(budget: SamplingBudget) -> Self {
        SamplingConfig {
            mode: SamplingMode::Adaptive,
            budget,
            ..Self::default()
        }
    }
}

/// Stateful selector owned by one training run.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: SamplingConfig,
    n: usize,
    m: usize,
    rng: ChaCha8Rng,
    adaptive: Option<AdaptiveSamplerState>,
}

impl Sampler {
    pub fn new(config: SamplingConfig, n: usize, seed: u64) -> Result<Self> {
        let m = match config.mode {
            SamplingMode::Full => n,
            _ => resolve_budget(config.budget, n)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(crate::rng_streams::SAMPLER);
        let adaptive = (config.mode == SamplingMode::Adaptive)
            .then(|| AdaptiveSamplerState::new(n, config.alpha, config.beta));
        Ok(Sampler {
            config,
            n,
            m,
            rng,
            adaptive,
        })
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn budget(&self) -> usize {
        self.m
    }

    /// Whether [`Sampler::observe`] needs per-sample distances.
    pub fn wants_distances(&self) -> bool {
        self.adaptive.is_some()
    }

    pub fn select(&mut self) -> Vec<usize> {
        match self.config.mode {
            SamplingMode::Full => select_full(self.n),
            SamplingMode::Random => select_random(self.n, self.m, &mut self.rng),
            SamplingMode::Adaptive => {
                select_adaptive(self.adaptive.as_ref().unwrap(), self.m, &mut self.rng)
            }
        }
    }

    pub fn observe(&mut self, selected: &[usize], distances: &[f64]) -> Result<()> {
        match self.adaptive.as_mut() {
            Some(state) => update_adaptive(state, selected, distances),
            None => Ok(()),
        }
    }

    pub fn adaptive_state(&self) -> Option<&AdaptiveSamplerState> {
        self.adaptive.as_ref()
    }
}
