use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Result, SomError};

/// Radii are keyed (and evaluated) at this resolution.
pub const RADIUS_QUANTUM: f64 = 1e-6;

/// Weights below this are stored as exact zeros. Even divided by the smallest
/// accepted influence mass they sit far below f32 resolution, and keeping them
/// would push the accumulators into subnormal arithmetic.
pub const INFLUENCE_FLUSH: f64 = 1e-290;

/// Gaussian neighbourhood weights `exp(-dist² / (2σ²))`, element-wise.
pub fn influence_matrix(dist: impl IntoIterator<Item = f64>, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SomError::InvalidArgument(format!("radius {sigma} must be > 0")));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(dist
        .into_iter()
        .map(|d| {
            let v = (-(d * d) / denom).exp();
            if v < INFLUENCE_FLUSH {
                0.0
            } else {
                v
            }
        })
        .collect())
}

pub fn radius_key(sigma: f64) -> i64 {
    (sigma / RADIUS_QUANTUM).round() as i64
}

/// The radius actually used for a requested `sigma`: the centre of its cache bucket.
pub fn quantize_radius(sigma: f64) -> f64 {
    radius_key(sigma) as f64 * RADIUS_QUANTUM
}

/// Influence matrices keyed by quantized radius, bounded to `capacity` entries with
/// oldest-first eviction.
#[derive(Debug, Clone)]
pub struct InfluenceCache {
    entries: VecDeque<(i64, Arc<Vec<f64>>)>,
    capacity: usize,
    hits: u64,
    misses: u64,
}

impl Default for InfluenceCache {
    fn default() -> Self {
        Self::with_capacity(8)
    }
}

impl InfluenceCache {
    pub fn with_capacity(capacity: usize) -> Self {
        InfluenceCache {
            entries: VecDeque::new(),
            capacity: capacity.max(1),
            hits: 0,
            misses: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn get_or_insert_with<F>(&mut self, sigma: f64, compute: F) -> Result<Arc<Vec<f64>>>
    where
        F: FnOnce(f64) -> Result<Vec<f64>>,
    {
        let key = radius_key(sigma);
        if let Some((_, m)) = self.entries.iter().find(|(k, _)| *k == key) {
            self.hits += 1;
            return Ok(Arc::clone(m));
        }
        self.misses += 1;
        let m = Arc::new(compute(quantize_radius(sigma))?);
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((key, Arc::clone(&m)));
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let h = influence_matrix([0.0, 1.5, 3.0], 1.5).unwrap();
        assert_eq!(h[0], 1.0);
        assert!((h[1] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((h[1] - 0.60653).abs() < 1e-5);
        assert!(h[2] < h[1]);
        assert!(influence_matrix([0.0], 0.0).is_err());
        assert!(influence_matrix([0.0], -1.0).is_err());
    }

    #[test]
    fn quantized_keys_share_entries() {
        let mut cache = InfluenceCache::default();
        let dist = [0.0, 1.0];
        let a = cache
            .get_or_insert_with(1.2345678, |s| influence_matrix(dist, s))
            .unwrap();
        let b = cache
            .get_or_insert_with(1.2345681, |s| influence_matrix(dist, s))
            .unwrap();
        assert_eq!(cache.len(), 1);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut cache = InfluenceCache::with_capacity(2);
        for s in [1.0, 2.0, 3.0] {
            cache.get_or_insert_with(s, |s| influence_matrix([1.0], s)).unwrap();
        }
        assert_eq!(cache.len(), 2);
        cache.get_or_insert_with(1.0, |s| influence_matrix([1.0], s)).unwrap();
        assert_eq!(cache.misses(), 4);
    }
}
