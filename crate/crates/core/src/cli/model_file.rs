//! Binary model format, all integers and floats little-endian:
//!
//! ```text
//! "FSOMMODL"  version:u32=1  P:u32  d:u32  kind:u8
//! [width:u32 height:u32]              lattice kinds only
//! weights: P·d × f32                  row-major
//! n_edges:u32  n_edges × (u32, u32)   zero edges for lattices
//! ```

use std::path::Path;

use crate::error::{Result, SomError};
use crate::topology::{Edge, TopologyKind, TopologyState};
use crate::trainer::SomModel;

pub const MODEL_MAGIC: &[u8; 8] = b"FSOMMODL";
pub const MODEL_VERSION: u32 = 1;

/// Tile size used when recomputing hop distances of a loaded graph model.
const LOAD_TOPO_CHUNK: usize = 256;

pub fn encode_model(model: &SomModel) -> Result<Vec<u8>> {
    let p = model.n_nodes();
    let d = model.dim;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| SomError::InvalidArgument(format!("{what} {v} exceeds u32")))
    };
    let kind = model.kind();
    let edges: &[Edge] = if kind.is_lattice() { &[] } else { model.topology.edges() };
    let mut out = Vec::with_capacity(33 + p * d * 4 + edges.len() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(p, "node count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "dimension")?.to_le_bytes());
    out.push(kind.code());
    if kind.is_lattice() {
        out.extend_from_slice(&to_u32(model.width, "width")?.to_le_bytes());
        out.extend_from_slice(&to_u32(model.height, "height")?.to_le_bytes());
    }
    for w in &model.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&to_u32(edges.len(), "edge count")?.to_le_bytes());
    for &(a, b) in edges {
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SomError::CorruptModel(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a model. Graph models get `width = P`, `height = 1`, since the format
/// stores grid dimensions only for lattices.
pub fn decode_model(bytes: &[u8]) -> Result<SomModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MODEL_MAGIC {
        return Err(SomError::CorruptModel("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(SomError::CorruptModel(format!("unsupported version {version}")));
    }
    let p = r.u32("node count")? as usize;
    let d = r.u32("dimension")? as usize;
    if p == 0 || d == 0 {
        return Err(SomError::CorruptModel(format!("empty model (P={p}, d={d})")));
    }
    let code = r.take(1, "topology kind")?[0];
    let kind = TopologyKind::from_code(code)
        .ok_or_else(|| SomError::CorruptModel(format!("unknown topology code {code}")))?;
    let (width, height) = if kind.is_lattice() {
        let w = r.u32("width")? as usize;
        let h = r.u32("height")? as usize;
        if w * h != p {
            return Err(SomError::CorruptModel(format!("grid {w}x{h} does not hold {p} nodes")));
        }
        (w, h)
    } else {
        (p, 1)
    };
    let n_weights = p
        .checked_mul(d)
        .ok_or_else(|| SomError::CorruptModel("weight count overflows".into()))?;
    let raw = r.take(n_weights * 4, "weights")?;
    let weights: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if let Some(pos) = weights.iter().position(|v| !v.is_finite()) {
        return Err(SomError::CorruptModel(format!("non-finite weight at node {}", pos / d)));
    }
    let n_edges = r.u32("edge count")? as usize;
    let mut edges = Vec::with_capacity(n_edges.min(bytes.len() / 8));
    for _ in 0..n_edges {
        let a = r.u32("edge")?;
        let b = r.u32("edge")?;
        if a as usize >= p || b as usize >= p || a == b {
            return Err(SomError::CorruptModel(format!("invalid edge ({a}, {b}) for {p} nodes")));
        }
        edges.push((a, b));
    }
    if r.pos != bytes.len() {
        return Err(SomError::CorruptModel(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let topology = if kind.is_lattice() {
        if n_edges != 0 {
            return Err(SomError::CorruptModel("lattice model carries edges".into()));
        }
        TopologyState::initial(kind, width, height)
    } else {
        TopologyState::from_edges(kind, p, edges, LOAD_TOPO_CHUNK)
            .map_err(|e| SomError::CorruptModel(format!("graph edges unusable: {e}")))?
    };
    Ok(SomModel {
        width,
        height,
        dim: d,
        weights,
        topology,
        prev_update: vec![0.0; p * d],
        iter: 0,
    })
}

pub fn save_model(model: &SomModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_model(model)?;
    crate::io_util::write_atomic(path.as_ref(), &bytes)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SomModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| SomError::io(path, e))?;
    decode_model(&bytes)
}
