use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SearchSpace, TrialRecord};
use crate::error::{Result, SomError};
use crate::trainer::SomConfig;

/// Guard in the relative-difference denominator.
pub const STABILITY_EPS: f64 = 1e-12;

/// The lowest-QE_B record of every seed, in order of first appearance. Ties go to
/// the lower trial index.
pub fn best_per_seed(records: &[TrialRecord]) -> Vec<TrialRecord> {
    let mut order: Vec<u64> = Vec::new();
    let mut best: BTreeMap<u64, &TrialRecord> = BTreeMap::new();
    for r in records {
        match best.get(&r.seed) {
            None => {
                order.push(r.seed);
                best.insert(r.seed, r);
            }
            Some(cur) => {
                let better = r.qe_balanced() < cur.qe_balanced()
                    || (r.qe_balanced() == cur.qe_balanced() && r.trial_index < cur.trial_index);
                if better {
                    best.insert(r.seed, r);
                }
            }
        }
    }
    order.into_iter().map(|s| best[&s].clone()).collect()
}

fn numeric_params(c: &SomConfig) -> [(&'static str, f64); 6] {
    [
        ("eta0", c.eta0),
        ("sigma0", c.sigma0),
        ("momentum", c.momentum),
        ("n_iters", c.n_iters as f64),
        ("refresh_warmup", c.refresh.warmup_iters as f64),
        ("refresh_growth", c.refresh.growth),
    ]
}

fn categorical_params(c: &SomConfig) -> [(&'static str, String); 4] {
    [
        ("lr_decay", c.lr_decay.as_str().to_string()),
        ("radius_decay", c.radius_decay.as_str().to_string()),
        ("init_method", c.init_method.as_str().to_string()),
        ("use_momentum", c.use_momentum.to_string()),
    ]
}

/// Most frequent value; ties resolved by position in `declared`.
fn mode<T: Copy + PartialEq>(values: &[T], declared: &[T]) -> T {
    let mut best = values[0];
    let mut best_count = 0;
    for cand in declared.iter().chain(values) {
        let count = values.iter().filter(|v| *v == cand).count();
        if count > best_count {
            best = *cand;
            best_count = count;
        }
    }
    best
}

/// Collapses per-seed winners into one configuration: means for real parameters,
/// rounded means for integers and modes for categoricals. Other fields come from
/// the first record.
pub fn distill_defaults(best: &[TrialRecord], space: &SearchSpace) -> Result<SomConfig> {
    let first = best
        .first()
        .ok_or_else(|| SomError::Empty("no records to distill".into()))?;
    let n = best.len() as f64;
    let mean = |f: &dyn Fn(&SomConfig) -> f64| best.iter().map(|r| f(&r.params)).sum::<f64>() / n;
    let params: Vec<&SomConfig> = best.iter().map(|r| &r.params).collect();

    let mut c = first.params.clone();
    c.eta0 = mean(&|p| p.eta0);
    c.sigma0 = mean(&|p| p.sigma0);
    c.momentum = mean(&|p| p.momentum);
    c.refresh.growth = mean(&|p| p.refresh.growth);
    c.n_iters = mean(&|p| p.n_iters as f64).round() as usize;
    c.refresh.warmup_iters = mean(&|p| p.refresh.warmup_iters as f64).round() as usize;
    c.lr_decay = mode(&params.iter().map(|p| p.lr_decay).collect::<Vec<_>>(), &space.lr_decay);
    c.radius_decay = mode(&params.iter().map(|p| p.radius_decay).collect::<Vec<_>>(), &space.radius_decay);
    c.init_method = mode(&params.iter().map(|p| p.init_method).collect::<Vec<_>>(), &space.init_method);
    c.use_momentum = mode(&params.iter().map(|p| p.use_momentum).collect::<Vec<_>>(), &space.use_momentum);
    Ok(c)
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(STABILITY_EPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n_seeds: usize,
    /// Mean pairwise relative difference per numeric parameter.
    pub numeric: BTreeMap<String, f64>,
    /// Fraction of seed pairs that disagree, per categorical parameter.
    pub categorical: BTreeMap<String, f64>,
    pub numeric_stability: f64,
    pub categorical_mismatch_rate: f64,
    /// Mean over all parameters, each weighted equally.
    pub overall: f64,
}

/// Agreement of the per-seed winners over every unordered pair of seeds.
pub fn stability_score(best: &[TrialRecord]) -> Result<StabilityReport> {
    if best.len() < 2 {
        return Err(SomError::InvalidArgument(format!(
            "stability needs at least 2 seeds, got {}",
            best.len()
        )));
    }
    let mut numeric: BTreeMap<String, f64> = BTreeMap::new();
    let mut categorical: BTreeMap<String, f64> = BTreeMap::new();
    let mut pairs = 0usize;
    for i in 0..best.len() {
        for j in i + 1..best.len() {
            pairs += 1;
            let (a, b) = (&best[i].params, &best[j].params);
            for ((name, x), (_, y)) in numeric_params(a).into_iter().zip(numeric_params(b)) {
                *numeric.entry(name.into()).or_default() += relative_difference(x, y);
            }
            for ((name, x), (_, y)) in categorical_params(a).into_iter().zip(categorical_params(b)) {
                *categorical.entry(name.into()).or_default() += if x == y { 0.0 } else { 1.0 };
            }
        }
    }
    numeric.values_mut().for_each(|v| *v /= pairs as f64);
    categorical.values_mut().for_each(|v| *v /= pairs as f64);
    let avg = |m: &BTreeMap<String, f64>| m.values().sum::<f64>() / m.len() as f64;
    let overall = numeric.values().chain(categorical.values()).sum::<f64>() / (numeric.len() + categorical.len()) as f64;
    Ok(StabilityReport {
        n_seeds: best.len(),
        numeric_stability: avg(&numeric),
        categorical_mismatch_rate: avg(&categorical),
        numeric,
        categorical,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::DecayKind;

    fn rec(seed: u64, trial_index: usize, qe: f64, f: impl FnOnce(&mut SomConfig)) -> TrialRecord {
        let mut params = SomConfig::default();
        f(&mut params);
        TrialRecord {
            trial_index,
            seed,
            params,
            qe_train: qe,
            qe_holdout: qe,
            error: None,
        }
    }

    #[test]
    fn relative_difference_cases() {
        assert!((relative_difference(1.0, 3.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(relative_difference(0.0, 0.0), 0.0);
    }

    #[test]
    fn best_per_seed_picks_lowest_balanced() {
        let recs = vec![
            rec(7, 0, 0.5, |_| {}),
            rec(3, 0, 0.4, |_| {}),
            rec(7, 1, 0.2, |_| {}),
            rec(7, 2, 0.2, |_| {}),
        ];
        let best = best_per_seed(&recs);
        assert_eq!(best.iter().map(|r| (r.seed, r.trial_index)).collect::<Vec<_>>(), vec![(7, 1), (3, 0)]);
    }

    #[test]
    fn distill_mean_mode_round() {
        let space = SearchSpace::default();
        let recs = vec![
            rec(0, 0, 1.0, |c| {
                c.eta0 = 0.1;
                c.n_iters = 80;
                c.lr_decay = DecayKind::Exponential;
            }),
            rec(1, 0, 1.0, |c| {
                c.eta0 = 0.3;
                c.n_iters = 100;
                c.lr_decay = DecayKind::Exponential;
            }),
            rec(2, 0, 1.0, |c| {
                c.eta0 = 0.2;
                c.n_iters = 110;
                c.lr_decay = DecayKind::Linear;
            }),
        ];
        let d = distill_defaults(&recs, &space).unwrap();
        assert!((d.eta0 - 0.2).abs() < 1e-15);
        assert_eq!(d.n_iters, 97);
        assert_eq!(d.lr_decay, DecayKind::Exponential);
        assert!(distill_defaults(&[], &space).is_err());
    }

    #[test]
    fn mode_tie_uses_declared_order() {
        assert_eq!(mode(&[DecayKind::Exponential, DecayKind::Linear], &DecayKind::ALL), DecayKind::Linear);
    }

    #[test]
    fn stability_identical_and_pairwise() {
        let same = vec![rec(0, 0, 1.0, |_| {}), rec(1, 0, 1.0, |_| {})];
        let s = stability_score(&same).unwrap();
        assert_eq!(s.overall, 0.0);
        assert!(stability_score(&same[..1]).is_err());

        let diff = vec![
            rec(0, 0, 1.0, |c| c.eta0 = 1.0),
            rec(1, 0, 1.0, |c| {
                c.eta0 = 3.0;
                c.use_momentum = true;
            }),
        ];
        let s = stability_score(&diff).unwrap();
        assert!((s.numeric["eta0"] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.categorical["use_momentum"], 1.0);
        assert_eq!(s.categorical_mismatch_rate, 0.25);
    }
}
