use super::graph::Edge;
use crate::error::{Result, SomError};

pub const UNREACHABLE: u16 = u16::MAX;

/// Unit-weight all-pairs hop counts via blocked Floyd-Warshall with square blocks of
/// edge `chunk_size`. Fails if any pair is unreachable.
pub fn hop_distances(edges: &[Edge], p: usize, chunk_size: usize) -> Result<Vec<u16>> {
    if p >= UNREACHABLE as usize {
        return Err(SomError::InvalidArgument(format!(
            "{p} nodes exceed the 16-bit hop matrix"
        )));
    }
    let mut dist = vec![UNREACHABLE; p * p];
    for i in 0..p {
        dist[i * p + i] = 0;
    }
    for &(a, b) in edges {
        let (a, b) = (a as usize, b as usize);
        if a >= p || b >= p {
            return Err(SomError::InvalidArgument(format!("edge ({a}, {b}) out of range")));
        }
        if a != b {
            dist[a * p + b] = 1;
            dist[b * p + a] = 1;
        }
    }

    let block = chunk_size.clamp(1, p.max(1));
    let n_blocks = p.div_ceil(block);
    let range = |b: usize| (b * block)..((b + 1) * block).min(p);

    for kb in 0..n_blocks {
        let ks = range(kb);
        relax(&mut dist, p, ks.clone(), ks.clone(), ks.clone());
        for b in (0..n_blocks).filter(|&b| b != kb) {
            relax(&mut dist, p, ks.clone(), range(b), ks.clone());
            relax(&mut dist, p, range(b), ks.clone(), ks.clone());
        }
        for ib in (0..n_blocks).filter(|&b| b != kb) {
            for jb in (0..n_blocks).filter(|&b| b != kb) {
                relax(&mut dist, p, range(ib), range(jb), ks.clone());
            }
        }
    }

    let unreachable = dist.iter().filter(|&&v| v == UNREACHABLE).count();
    if unreachable > 0 {
        return Err(SomError::Disconnected(unreachable / 2));
    }
    Ok(dist)
}

/// `d[i][j] = min(d[i][j], d[i][k] + d[k][j])` for `k` in `ks` (outermost), `i` in
/// `is`, `j` in `js`.
fn relax(
    dist: &mut [u16],
    p: usize,
    is: std::ops::Range<usize>,
    js: std::ops::Range<usize>,
    ks: std::ops::Range<usize>,
) {
    for k in ks {
        for i in is.clone() {
            if i == k {
                // d[k][j] cannot improve through k itself
                continue;
            }
            let dik = dist[i * p + k];
            if dik == UNREACHABLE {
                continue;
            }
            let (row_i, row_k) = if i < k {
                let (lo, hi) = dist.split_at_mut(k * p);
                (&mut lo[i * p..i * p + p], &hi[..p])
            } else {
                let (lo, hi) = dist.split_at_mut(i * p);
                (&mut hi[..p], &lo[k * p..k * p + p])
            };
            for (dij, &dkj) in row_i[js.clone()].iter_mut().zip(&row_k[js.clone()]) {
                *dij = (*dij).min(dik.saturating_add(dkj));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let h = hop_distances(&[(0, 1), (1, 2), (2, 3)], 4, 2).unwrap();
        assert_eq!(h[3], 3);
        assert_eq!(h[3 * 4], 3);
    }

    #[test]
    fn star_graph() {
        let h = hop_distances(&[(0, 1), (0, 2), (0, 3), (0, 4)], 5, 3).unwrap();
        assert_eq!(h[5 + 2], 2);
        assert_eq!(h[1], 1);
    }

    #[test]
    fn disconnected_is_error() {
        assert!(matches!(
            hop_distances(&[(0, 1)], 3, 2),
            Err(SomError::Disconnected(2))
        ));
    }

    #[test]
    fn single_node() {
        assert_eq!(hop_distances(&[], 1, 4).unwrap(), vec![0]);
    }
}
