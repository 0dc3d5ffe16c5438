use serde::{Deserialize, Serialize};

/// When graph topologies are rebuilt: every iteration during warmup, then at
/// intervals `ceil(growth^k)` (capped at `max_interval`), where `k` counts the
/// refreshes performed since warmup ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshPolicy {
    pub warmup_iters: usize,
    pub growth: f64,
    pub max_interval: usize,
}

impl RefreshPolicy {
    pub const DEFAULT_GROWTH: f64 = 1.5;
    pub const DEFAULT_MAX_INTERVAL: usize = 25;

    /// Default policy for a run of `n_iters` iterations: warmup is 10% of the run.
    pub fn for_iterations(n_iters: usize) -> Self {
        RefreshPolicy {
            warmup_iters: (n_iters as f64 * 0.1).ceil() as usize,
            growth: Self::DEFAULT_GROWTH,
            max_interval: Self::DEFAULT_MAX_INTERVAL,
        }
    }

    /// Required gap after `k` post-warmup refreshes.
    pub fn interval(&self, k: usize) -> usize {
        let raw = self.growth.powi(k.min(i32::MAX as usize) as i32).ceil();
        let capped = raw.min(self.max_interval.max(1) as f64);
        (capped as usize).max(1)
    }
}

/// Bookkeeping consulted by [`should_refresh`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefreshClock {
    pub last_refresh_iter: Option<usize>,
    pub refresh_count: usize,
    pub post_warmup_refreshes: usize,
}

impl RefreshClock {
    pub fn record(&mut self, policy: &RefreshPolicy, iter: usize) {
        self.last_refresh_iter = Some(iter);
        self.refresh_count += 1;
        if iter >= policy.warmup_iters {
            self.post_warmup_refreshes += 1;
        }
    }
}

/// Refresh decision for a graph topology at iteration `iter`. Lattice topologies
/// never call this after their initial build.
pub fn should_refresh(policy: &RefreshPolicy, iter: usize, clock: &RefreshClock) -> bool {
    let Some(last) = clock.last_refresh_iter else {
        return true;
    };
    if iter < policy.warmup_iters {
        return true;
    }
    iter.saturating_sub(last) >= policy.interval(clock.post_warmup_refreshes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refresh_iters(policy: RefreshPolicy, until: usize) -> Vec<usize> {
        let mut clock = RefreshClock::default();
        (0..until)
            .filter(|&t| {
                let go = should_refresh(&policy, t, &clock);
                if go {
                    clock.record(&policy, t);
                }
                go
            })
            .collect()
    }

    #[test]
    fn warmup_always_refreshes() {
        let policy = RefreshPolicy {
            warmup_iters: 10,
            growth: 2.0,
            max_interval: 50,
        };
        let mut clock = RefreshClock::default();
        clock.record(&policy, 0);
        assert!(should_refresh(&policy, 3, &clock));
    }

    #[test]
    fn geometric_intervals() {
        let policy = RefreshPolicy {
            warmup_iters: 10,
            growth: 2.0,
            max_interval: 50,
        };
        let iters = refresh_iters(policy, 30);
        let expected: Vec<usize> = (0..10).chain([10, 12, 16, 24]).collect();
        assert_eq!(iters, expected);
    }

    #[test]
    fn intervals_are_capped() {
        let policy = RefreshPolicy {
            warmup_iters: 0,
            growth: 2.0,
            max_interval: 50,
        };
        assert_eq!(policy.interval(5), 32);
        assert_eq!(policy.interval(6), 50);
        assert_eq!(policy.interval(60), 50);
        let iters = refresh_iters(policy, 400);
        let gaps: Vec<usize> = iters.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.windows(2).all(|g| g[0] <= g[1]));
        assert!(gaps.iter().all(|&g| g <= 50));
        assert_eq!(*gaps.last().unwrap(), 50);
    }

    #[test]
    fn default_warmup_is_ten_percent() {
        assert_eq!(RefreshPolicy::for_iterations(100).warmup_iters, 10);
        assert_eq!(RefreshPolicy::for_iterations(10).warmup_iters, 1);
    }
}
