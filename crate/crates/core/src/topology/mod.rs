//! Neighbourhood structure between map nodes.
//!
//! Lattice topologies measure neighbourhood distance on fixed grid coordinates.
//! Graph topologies (minimum spanning tree, relative neighbourhood graph) are rebuilt
//! from the current node weights on a refresh schedule and measure distance in hops.

mod graph;
mod hops;
mod influence;
mod lattice;
mod refresh;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use self::graph::{build_mst, build_rng, edge_weight, pairwise_sq_dists, Edge, UnionFind};
pub use self::hops::{hop_distances, UNREACHABLE};
pub use self::influence::{
    influence_matrix, quantize_radius, radius_key, InfluenceCache, INFLUENCE_FLUSH, RADIUS_QUANTUM,
};
pub use self::lattice::{lattice_coords, lattice_dist};
pub use self::refresh::{should_refresh, RefreshClock, RefreshPolicy};

use crate::error::{Result, SomError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Rectangular,
    Hexagonal,
    Mst,
    Rng,
}

impl TopologyKind {
    pub fn is_lattice(self) -> bool {
        matches!(self, TopologyKind::Rectangular | TopologyKind::Hexagonal)
    }

    pub fn code(self) -> u8 {
        match self {
            TopologyKind::Rectangular => 0,
            TopologyKind::Hexagonal => 1,
            TopologyKind::Mst => 2,
            TopologyKind::Rng => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => TopologyKind::Rectangular,
            1 => TopologyKind::Hexagonal,
            2 => TopologyKind::Mst,
            3 => TopologyKind::Rng,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Rectangular => "rect",
            TopologyKind::Hexagonal => "hex",
            TopologyKind::Mst => "mst",
            TopologyKind::Rng => "rng",
        }
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = SomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangular" | "grid" => Ok(TopologyKind::Rectangular),
            "hex" | "hexagonal" => Ok(TopologyKind::Hexagonal),
            "mst" => Ok(TopologyKind::Mst),
            "rng" => Ok(TopologyKind::Rng),
            _ => Err(SomError::Config(format!("unknown topology {s:?}"))),
        }
    }
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Node-to-node neighbourhood distances, `P × P` row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum NeighborDistances {
    Lattice(Arc<Vec<f64>>),
    Hops(Arc<Vec<u16>>),
}

impl NeighborDistances {
    pub fn get(&self, i: usize, j: usize, p: usize) -> f64 {
        match self {
            NeighborDistances::Lattice(d) => d[i * p + j],
            NeighborDistances::Hops(h) => h[i * p + j] as f64,
        }
    }

    pub fn influence(&self, sigma: f64) -> Result<Vec<f64>> {
        match self {
            NeighborDistances::Lattice(d) => influence_matrix(d.iter().copied(), sigma),
            NeighborDistances::Hops(h) => influence_matrix(h.iter().map(|&v| v as f64), sigma),
        }
    }
}

/// Current neighbourhood structure of one map.
#[derive(Debug, Clone)]
pub struct TopologyState {
    kind: TopologyKind,
    n_nodes: usize,
    edges: Vec<Edge>,
    dist: Option<NeighborDistances>,
    cache: InfluenceCache,
    clock: RefreshClock,
}

impl TopologyState {
    /// Lattices are built immediately; graph kinds start empty and are built by the
    /// first [`refresh_topology`] call.
    pub fn initial(kind: TopologyKind, width: usize, height: usize) -> Self {
        let n_nodes = width * height;
        let dist = kind
            .is_lattice()
            .then(|| NeighborDistances::Lattice(Arc::new(lattice_dist(&lattice_coords(kind, width, height)))));
        TopologyState {
            kind,
            n_nodes,
            edges: Vec::new(),
            dist,
            cache: InfluenceCache::default(),
            clock: RefreshClock::default(),
        }
    }

    /// A graph state with fixed edges, e.g. restored from a model file.
    pub fn from_edges(kind: TopologyKind, n_nodes: usize, edges: Vec<Edge>, chunk_size: usize) -> Result<Self> {
        let hops = hop_distances(&edges, n_nodes, chunk_size)?;
        Ok(TopologyState {
            kind,
            n_nodes,
            edges,
            dist: Some(NeighborDistances::Hops(Arc::new(hops))),
            cache: InfluenceCache::default(),
            clock: RefreshClock::default(),
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn distances(&self) -> Option<&NeighborDistances> {
        self.dist.as_ref()
    }

    pub fn hops(&self) -> Option<&[u16]> {
        match &self.dist {
            Some(NeighborDistances::Hops(h)) => Some(h),
            _ => None,
        }
    }

    pub fn cache(&self) -> &InfluenceCache {
        &self.cache
    }

    pub fn clock(&self) -> &RefreshClock {
        &self.clock
    }

    pub fn last_refresh_iter(&self) -> Option<usize> {
        self.clock.last_refresh_iter
    }

    pub fn refresh_count(&self) -> usize {
        self.clock.refresh_count
    }

    pub fn needs_refresh(&self, policy: &RefreshPolicy, iter: usize) -> bool {
        if self.kind.is_lattice() {
            return false;
        }
        should_refresh(policy, iter, &self.clock)
    }

    /// Influence matrix for radius `sigma`, served from the cache when the quantized
    /// radius has been seen since the last refresh.
    pub fn cached_influence(&mut self, sigma: f64) -> Result<Arc<Vec<f64>>> {
        let dist = self
            .dist
            .as_ref()
            .ok_or_else(|| SomError::InvalidArgument("topology has not been built".into()))?;
        self.cache.get_or_insert_with(sigma, |s| dist.influence(s))
    }

    /// Influence matrix computed directly, bypassing the cache.
    pub fn uncached_influence(&self, sigma: f64) -> Result<Vec<f64>> {
        self.dist
            .as_ref()
            .ok_or_else(|| SomError::InvalidArgument("topology has not been built".into()))?
            .influence(quantize_radius(sigma))
    }
}

/// Rebuilds a graph topology from `weights` (`P × d`) if the refresh policy asks for
/// it at `iter`; otherwise hands the state back untouched. Returns whether a rebuild
/// happened.
pub fn refresh_topology(
    state: TopologyState,
    weights: &[f32],
    d: usize,
    policy: &RefreshPolicy,
    iter: usize,
    chunk_size: usize,
) -> Result<(TopologyState, bool)> {
    if !state.needs_refresh(policy, iter) {
        return Ok((state, false));
    }
    let p = state.n_nodes;
    if weights.len() != p * d {
        return Err(SomError::DimensionMismatch {
            expected: p * d,
            actual: weights.len(),
        });
    }
    let sq = pairwise_sq_dists(weights, d, chunk_size);
    let edges = match state.kind {
        TopologyKind::Mst => build_mst(&sq, p),
        TopologyKind::Rng => build_rng(&sq, p, chunk_size),
        _ => unreachable!("lattices never refresh"),
    };
    let hops = hop_distances(&edges, p, chunk_size)?;
    let mut clock = state.clock;
    clock.record(policy, iter);
    let next = TopologyState {
        kind: state.kind,
        n_nodes: p,
        edges,
        dist: Some(NeighborDistances::Hops(Arc::new(hops))),
        cache: InfluenceCache::default(),
        clock,
    };
    Ok((next, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> RefreshPolicy {
        RefreshPolicy {
            warmup_iters: 3,
            growth: 1.5,
            max_interval: 25,
        }
    }

    #[test]
    fn lattice_never_refreshes() {
        let state = TopologyState::initial(TopologyKind::Hexagonal, 3, 3);
        let w = vec![0.0f32; 18];
        let (state, refreshed) = refresh_topology(state, &w, 2, &policy(), 5, 4).unwrap();
        assert!(!refreshed);
        assert!(state.edges().is_empty());
        assert!(matches!(state.distances(), Some(NeighborDistances::Lattice(_))));
    }

    #[test]
    fn graph_refreshes_during_warmup_and_clears_cache() {
        let w: Vec<f32> = vec![0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 3.0, 2.0];
        let mut state = TopologyState::initial(TopologyKind::Mst, 2, 2);
        for t in 0..3 {
            let (next, refreshed) = refresh_topology(state, &w, 2, &policy(), t, 2).unwrap();
            assert!(refreshed);
            state = next;
            assert_eq!(state.edges(), &[(0, 1), (1, 2), (2, 3)]);
            assert!(state.cache().is_empty());
            state.cached_influence(1.0).unwrap();
            state.cached_influence(1.0).unwrap();
            assert_eq!(state.cache().len(), 1);
        }
        assert_eq!(state.refresh_count(), 3);
        assert_eq!(state.last_refresh_iter(), Some(2));
    }

    #[test]
    fn cached_equals_direct() {
        let w: Vec<f32> = vec![0.0, 0.0, 1.0, 0.5, -2.0, 0.25, 3.0, 2.0];
        let state = TopologyState::initial(TopologyKind::Rng, 2, 2);
        let (mut state, _) = refresh_topology(state, &w, 2, &policy(), 0, 3).unwrap();
        let direct = state.uncached_influence(0.7321).unwrap();
        let cached = state.cached_influence(0.7321).unwrap();
        assert_eq!(*cached, direct);
        let hops = state.hops().unwrap();
        let manual = influence_matrix(hops.iter().map(|&h| h as f64), quantize_radius(0.7321)).unwrap();
        assert_eq!(direct, manual);
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in [
            TopologyKind::Rectangular,
            TopologyKind::Hexagonal,
            TopologyKind::Mst,
            TopologyKind::Rng,
        ] {
            assert_eq!(TopologyKind::from_code(k.code()), Some(k));
            assert_eq!(k.as_str().parse::<TopologyKind>().unwrap(), k);
        }
        assert!(TopologyKind::from_code(9).is_none());
    }
}
