//! Proximity graphs over node weights: pairwise distances, MST and RNG.

pub type Edge = (u32, u32);

/// Squared Euclidean distances between the rows of a `P × d` weight matrix via the
/// Gram identity `|a|² + |b|² - 2a·b`, clamped at zero.
///
/// Rows are processed in tiles of at most `chunk_size`; every entry is evaluated by
/// the same expression, so the result does not depend on the tile size.
pub fn pairwise_sq_dists(weights: &[f32], d: usize, chunk_size: usize) -> Vec<f64> {
    assert!(d > 0 && weights.len() % d == 0);
    let p = weights.len() / d;
    let chunk = chunk_size.clamp(1, p.max(1));
    let norms: Vec<f64> = weights
        .chunks_exact(d)
        .map(|w| w.iter().map(|&v| (v as f64) * (v as f64)).sum())
        .collect();

    let mut out = vec![0.0f64; p * p];
    for tile_start in (0..p).step_by(chunk) {
        let tile_end = (tile_start + chunk).min(p);
        for i in tile_start..tile_end {
            let wi = &weights[i * d..(i + 1) * d];
            let row = &mut out[i * p..(i + 1) * p];
            for (j, wj) in weights.chunks_exact(d).enumerate() {
                if i == j {
                    continue;
                }
                let dot: f64 = wi.iter().zip(wj).map(|(&a, &b)| a as f64 * b as f64).sum();
                row[j] = (norms[i] + norms[j] - 2.0 * dot).max(0.0);
            }
        }
    }
    out
}

/// Disjoint-set forest with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if self.rank[ra as usize] < self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[lo as usize] == self.rank[hi as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

/// Kruskal's minimum spanning tree over the complete graph with weights `sq_dists`.
///
/// Candidate edges are ordered by (weight, i, j), which makes the tree deterministic
/// under ties. Returns `P - 1` edges with `i < j`, sorted lexicographically.
pub fn build_mst(sq_dists: &[f64], p: usize) -> Vec<Edge> {
    debug_assert_eq!(sq_dists.len(), p * p);
    if p < 2 {
        return Vec::new();
    }
    let mut candidates: Vec<(f64, u32, u32)> = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            candidates.push((sq_dists[i * p + j], i as u32, j as u32));
        }
    }
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = UnionFind::new(p);
    let mut edges = Vec::with_capacity(p - 1);
    for (_, i, j) in candidates {
        if uf.union(i, j) {
            edges.push((i, j));
            if edges.len() == p - 1 {
                break;
            }
        }
    }
    edges.sort_unstable();
    edges
}

/// Relative neighbourhood graph: `(p, q)` survives unless some third node `r` has
/// `max(d(p,r), d(q,r)) < d(p,q)`.
///
/// Candidate pairs are enumerated in lexicographic order and tested in tiles of
/// `chunk_size` pairs. Returns edges with `i < j`, sorted lexicographically.
pub fn build_rng(sq_dists: &[f64], p: usize, chunk_size: usize) -> Vec<Edge> {
    debug_assert_eq!(sq_dists.len(), p * p);
    let chunk = chunk_size.max(1);
    let mut edges = Vec::new();
    let mut tile: Vec<(u32, u32)> = Vec::with_capacity(chunk);

    let flush = |tile: &mut Vec<(u32, u32)>, edges: &mut Vec<Edge>| {
        for &(a, b) in tile.iter() {
            let (a, b) = (a as usize, b as usize);
            let dab = sq_dists[a * p + b];
            let row_a = &sq_dists[a * p..(a + 1) * p];
            let row_b = &sq_dists[b * p..(b + 1) * p];
            let blocked = row_a
                .iter()
                .zip(row_b)
                .enumerate()
                .any(|(r, (&dar, &dbr))| r != a && r != b && dar.max(dbr) < dab);
            if !blocked {
                edges.push((a as u32, b as u32));
            }
        }
        tile.clear();
    };

    for i in 0..p {
        for j in (i + 1)..p {
            tile.push((i as u32, j as u32));
            if tile.len() == chunk {
                flush(&mut tile, &mut edges);
            }
        }
    }
    flush(&mut tile, &mut edges);
    edges
}

/// Total squared-distance weight of an edge set.
pub fn edge_weight(edges: &[Edge], sq_dists: &[f64], p: usize) -> f64 {
    edges.iter().map(|&(i, j)| sq_dists[i as usize * p + j as usize]).sum()
}
