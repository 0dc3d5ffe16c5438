//! Paired top-k summaries and Student-t inference.
//!
//! The t distribution is evaluated through the regularized incomplete beta
//! function, `P(|T| > t) = I_{ν/(ν+t²)}(ν/2, 1/2)`, computed with the Lentz
//! continued fraction. Quantiles are found by bisection on that CDF.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SomError};

/// One trial outcome inside a matched unit (e.g. a dataset/seed/split triple).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitTrial {
    pub unit: String,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEffect {
    pub unit: String,
    pub median_a: f64,
    pub median_b: f64,
    /// `median_a − median_b`; negative favours A for lower-is-better metrics.
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub effects: Vec<PairedEffect>,
    /// Units present in only one condition.
    pub dropped_units: Vec<String>,
}

pub const DEFAULT_TOP_K: usize = 5;

/// Median of the `k` smallest values.
pub fn top_k_median(values: &[f64], k: usize) -> Option<f64> {
    if values.is_empty() || k == 0 {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.truncate(k);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Per matched unit, the difference of the conditions' top-`k` medians. Units are
/// reported in key order.
pub fn paired_topk_summary(a: &[UnitTrial], b: &[UnitTrial], k: usize) -> Result<PairedSummary> {
    if k == 0 {
        return Err(SomError::InvalidArgument("k must be at least 1".into()));
    }
    let group = |trials: &[UnitTrial]| {
        let mut m: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for t in trials {
            m.entry(t.unit.clone()).or_default().push(t.metric);
        }
        m
    };
    let (ga, gb) = (group(a), group(b));
    let mut effects = Vec::new();
    let mut dropped_units = Vec::new();
    for (unit, va) in &ga {
        match gb.get(unit) {
            Some(vb) => {
                let median_a = top_k_median(va, k).expect("non-empty group");
                let median_b = top_k_median(vb, k).expect("non-empty group");
                effects.push(PairedEffect {
                    unit: unit.clone(),
                    median_a,
                    median_b,
                    effect: median_a - median_b,
                });
            }
            None => dropped_units.push(unit.clone()),
        }
    }
    dropped_units.extend(gb.keys().filter(|u| !ga.contains_key(*u)).cloned());
    dropped_units.sort();
    for u in &dropped_units {
        eprintln!("warning: unit {u:?} present in only one condition; dropped");
    }
    Ok(PairedSummary {
        effects,
        dropped_units,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedCi {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub t: f64,
    /// Half-width of the two-sided 95% interval.
    pub half_width: f64,
    pub p_value: f64,
}

/// One-sample two-sided t test of the effects against zero.
///
/// With zero variance the interval has width 0 and `p` is 1 when the mean is 0,
/// otherwise 0.
pub fn paired_ci(effects: &[f64]) -> Result<PairedCi> {
    let n = effects.len();
    if n < 2 {
        return Err(SomError::InvalidArgument(format!("paired t test needs >= 2 effects, got {n}")));
    }
    if effects.iter().any(|e| !e.is_finite()) {
        return Err(SomError::InvalidArgument("effects must be finite".into()));
    }
    let nf = n as f64;
    let mean = effects.iter().sum::<f64>() / nf;
    let var = effects.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let std_dev = var.sqrt();
    let df = nf - 1.0;
    let se = std_dev / nf.sqrt();
    if se == 0.0 {
        let (t, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(PairedCi {
            n,
            mean,
            std_dev,
            t,
            half_width: 0.0,
            p_value,
        });
    }
    let t = mean / se;
    Ok(PairedCi {
        n,
        mean,
        std_dev,
        t,
        half_width: student_t_quantile(0.975, df) * se,
        p_value: student_t_two_sided_p(t, df),
    })
}

/// `P(|T| ≥ |t|)` for `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF by bisection, to full double precision on the argument.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level {p} outside (0, 1)");
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    let mut hi = 1.0;
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms), `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(unit: &str, metrics: &[f64]) -> Vec<UnitTrial> {
        metrics
            .iter()
            .map(|&metric| UnitTrial {
                unit: unit.into(),
                metric,
            })
            .collect()
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(2.5, 1.0, 0.4) - 0.4f64.powf(2.5)).abs() < 1e-14);
    }

    #[test]
    fn cauchy_quantile() {
        // df = 1 is Cauchy: F^-1(p) = tan(pi (p - 1/2))
        let q = student_t_quantile(0.975, 1.0);
        let exact = (std::f64::consts::PI * 0.475).tan();
        assert!((q - exact).abs() < 1e-9, "{q} vs {exact}");
    }

    #[test]
    fn ci_degenerate_branches() {
        let z = paired_ci(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((z.mean, z.half_width, z.p_value), (0.0, 0.0, 1.0));
        let c = paired_ci(&[-1.0; 4]).unwrap();
        assert_eq!((c.mean, c.half_width, c.p_value), (-1.0, 0.0, 0.0));
        assert!(paired_ci(&[1.0]).is_err());
    }

    #[test]
    fn topk_single_pair() {
        let s = paired_topk_summary(&trials("u", &[1.0]), &trials("u", &[1.5]), 5).unwrap();
        assert_eq!(s.effects[0].effect, -0.5);
    }

    #[test]
    fn topk_identity_and_drop() {
        let a: Vec<UnitTrial> = trials("x", &[3.0, 1.0, 2.0])
            .into_iter()
            .chain(trials("y", &[0.5]))
            .collect();
        let s = paired_topk_summary(&a, &a, 2).unwrap();
        assert!(s.effects.iter().all(|e| e.effect == 0.0));
        let s = paired_topk_summary(&a, &trials("x", &[1.0]), 5).unwrap();
        assert_eq!(s.effects.len(), 1);
        assert_eq!(s.dropped_units, vec!["y".to_string()]);
    }
}
