//! Run configuration files.
//!
//! The native format is one `key = value` pair per line. `#` starts a comment,
//! blank lines are ignored, and keys may repeat only if they agree. A file whose
//! first non-blank character is `{` is read as JSON instead: nested objects become
//! dotted keys and arrays become space-separated values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, SomError};
use crate::sampling::{SamplingBudget, SamplingConfig, SamplingMode};
use crate::topology::RefreshPolicy;
use crate::trainer::{DecayKind, InitMethod, SomConfig};
use crate::tune::{NumericRange, Scale, SearchSpace};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Csv { path: PathBuf, header: bool },
    /// Directory of shard files; a `holdout` subdirectory, if present, is used for QE_H.
    Shards { dir: PathBuf, chunk_rows: usize },
    SynthRings { rows: usize, noise: f64, seed: u64 },
    SynthUniform { rows: usize, cols: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub som: SomConfig,
    pub data: DataSpec,
    pub standardize: bool,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub sampling: SamplingConfig,
    pub workers: usize,
    pub barrier_timeout_s: f64,
    pub timeout_s: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_CHUNK_ROWS: usize = 65_536;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            som: SomConfig::default(),
            data: DataSpec::SynthRings {
                rows: 2_000,
                noise: 0.05,
                seed: 0,
            },
            standardize: true,
            train_fraction: 0.7,
            split_seed: 0,
            sampling: SamplingConfig::full(),
            workers: 1,
            barrier_timeout_s: 60.0,
            timeout_s: None,
            out_dir: None,
        }
    }
}

/// Reads `key = value` text (or JSON) into an ordered map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SomError::Config(format!("invalid JSON: {e}")))?;
        let mut out = BTreeMap::new();
        flatten_json("", &value, &mut out)?;
        return Ok(out);
    }
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SomError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(SomError::Config(format!("line {}: empty key", lineno + 1)));
        }
        if let Some(prev) = out.get(k) {
            if prev != v {
                return Err(SomError::Config(format!("line {}: {k} set twice", lineno + 1)));
            }
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn flatten_json(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    use serde_json::Value;
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            _ => Err(SomError::Config(format!("{prefix}: unsupported JSON value"))),
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_json(&key, child, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Result<Vec<String>> = items.iter().map(scalar).collect();
            out.insert(prefix.to_string(), parts?.join(" "));
        }
        Value::Null => {}
        other => {
            out.insert(prefix.to_string(), scalar(other)?);
        }
    }
    Ok(())
}

struct Pairs {
    map: BTreeMap<String, String>,
}

impl Pairs {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| SomError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn finish(self, what: &str) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(SomError::Config(format!("unknown {what} key {k:?}"))),
            None => Ok(()),
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SomError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn load_unchecked(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SomError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_unchecked(&text, base)
    }

    /// Parses configuration text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let c = Self::parse_unchecked(text, base_dir)?;
        c.check_paths()?;
        Ok(c)
    }

    /// Parses and validates values without touching the file system.
    pub fn parse_unchecked(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut p = Pairs { map: parse_pairs(text)? };
        let mut c = RunConfig::default();
        let s = &mut c.som;
        p.set("width", &mut s.width)?;
        p.set("height", &mut s.height)?;
        p.set("topology", &mut s.topology)?;
        p.set("n_iters", &mut s.n_iters)?;
        p.set("eta0", &mut s.eta0)?;
        p.set("lr_decay", &mut s.lr_decay)?;
        p.set("sigma0", &mut s.sigma0)?;
        p.set("radius_decay", &mut s.radius_decay)?;
        p.set("sigma_min", &mut s.sigma_min)?;
        p.set("init_method", &mut s.init_method)?;
        p.set("use_momentum", &mut s.use_momentum)?;
        p.set("momentum", &mut s.momentum)?;
        s.refresh = RefreshPolicy::for_iterations(s.n_iters);
        p.set("refresh.warmup", &mut s.refresh.warmup_iters)?;
        p.set("refresh.growth", &mut s.refresh.growth)?;
        p.set("refresh.max_interval", &mut s.refresh.max_interval)?;
        p.set("n_chunks", &mut s.n_chunks)?;
        p.set("topo_chunk", &mut s.topo_chunk)?;
        p.set("seed", &mut s.seed)?;

        let resolve = |v: String| {
            let path = PathBuf::from(v);
            if path.is_relative() {
                base_dir.join(path)
            } else {
                path
            }
        };
        let source = p.take("data.source").unwrap_or_else(|| "synth_rings".into());
        c.data = match source.as_str() {
            "csv" => DataSpec::Csv {
                path: resolve(p.take("data.path").ok_or_else(|| SomError::Config("csv source needs data.path".into()))?),
                header: p.parse("data.header")?.unwrap_or(false),
            },
            "shards" => DataSpec::Shards {
                dir: resolve(p.take("data.path").ok_or_else(|| SomError::Config("shards source needs data.path".into()))?),
                chunk_rows: p.parse("data.chunk_rows")?.unwrap_or(DEFAULT_CHUNK_ROWS),
            },
            "synth_rings" => DataSpec::SynthRings {
                rows: p.parse("data.rows")?.unwrap_or(2_000),
                noise: p.parse("data.noise")?.unwrap_or(0.05),
                seed: p.parse("data.seed")?.unwrap_or(0),
            },
            "synth_uniform" => DataSpec::SynthUniform {
                rows: p.parse("data.rows")?.unwrap_or(10_000),
                cols: p.parse("data.cols")?.unwrap_or(16),
                seed: p.parse("data.seed")?.unwrap_or(0),
            },
            other => return Err(SomError::Config(format!("unknown data.source {other:?}"))),
        };

        p.set("standardize", &mut c.standardize)?;
        p.set("split.train_fraction", &mut c.train_fraction)?;
        p.set("split.seed", &mut c.split_seed)?;

        if let Some(mode) = p.parse::<SamplingMode>("sampling")? {
            c.sampling.mode = mode;
        }
        match (p.parse::<usize>("sampling.budget")?, p.parse::<f64>("sampling.rho")?) {
            (Some(_), Some(_)) => {
                return Err(SomError::Config("set only one of sampling.budget and sampling.rho".into()))
            }
            (Some(m0), None) => c.sampling.budget = SamplingBudget::Fixed { m0 },
            (None, Some(rho)) => c.sampling.budget = SamplingBudget::Proportional { rho },
            (None, None) => {}
        }
        p.set("sampling.alpha", &mut c.sampling.alpha)?;
        p.set("sampling.beta", &mut c.sampling.beta)?;

        p.set("workers", &mut c.workers)?;
        p.set("barrier_timeout_s", &mut c.barrier_timeout_s)?;
        c.timeout_s = p.parse("timeout_s")?;
        c.out_dir = p.take("out").map(resolve);
        p.finish("config")?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.som.validate()?;
        if self.workers == 0 {
            return Err(SomError::Config("workers must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SomError::Config(format!("split.train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if !(self.barrier_timeout_s > 0.0) {
            return Err(SomError::Config("barrier_timeout_s must be > 0".into()));
        }
        match &self.data {
            DataSpec::Shards { chunk_rows: 0, .. } => Err(SomError::Config("data.chunk_rows must be >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Fails when the referenced dataset file or directory is missing.
    pub fn check_paths(&self) -> Result<()> {
        let missing = |path: &Path| {
            SomError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            )
        };
        match &self.data {
            DataSpec::Csv { path, .. } if !path.is_file() => Err(missing(path)),
            DataSpec::Shards { dir, .. } if !dir.is_dir() => Err(missing(dir)),
            _ => Ok(()),
        }
    }

    /// Native-format text that [`RunConfig::parse`] reads back to an equal value.
    pub fn to_config_text(&self) -> String {
        let s = &self.som;
        let mut t = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(t, "{k} = {v}");
        };
        match &self.data {
            DataSpec::Csv { path, header } => {
                kv("data.source", "csv".into());
                kv("data.path", path.display().to_string());
                kv("data.header", header.to_string());
            }
            DataSpec::Shards { dir, chunk_rows } => {
                kv("data.source", "shards".into());
                kv("data.path", dir.display().to_string());
                kv("data.chunk_rows", chunk_rows.to_string());
            }
            DataSpec::SynthRings { rows, noise, seed } => {
                kv("data.source", "synth_rings".into());
                kv("data.rows", rows.to_string());
                kv("data.noise", noise.to_string());
                kv("data.seed", seed.to_string());
            }
            DataSpec::SynthUniform { rows, cols, seed } => {
                kv("data.source", "synth_uniform".into());
                kv("data.rows", rows.to_string());
                kv("data.cols", cols.to_string());
                kv("data.seed", seed.to_string());
            }
        }
        kv("standardize", self.standardize.to_string());
        kv("split.train_fraction", self.train_fraction.to_string());
        kv("split.seed", self.split_seed.to_string());
        kv("width", s.width.to_string());
        kv("height", s.height.to_string());
        kv("topology", s.topology.as_str().into());
        kv("n_iters", s.n_iters.to_string());
        kv("eta0", s.eta0.to_string());
        kv("lr_decay", s.lr_decay.as_str().into());
        kv("sigma0", s.sigma0.to_string());
        kv("radius_decay", s.radius_decay.as_str().into());
        kv("sigma_min", s.sigma_min.to_string());
        kv("init_method", s.init_method.as_str().into());
        kv("use_momentum", s.use_momentum.to_string());
        kv("momentum", s.momentum.to_string());
        kv("refresh.warmup", s.refresh.warmup_iters.to_string());
        kv("refresh.growth", s.refresh.growth.to_string());
        kv("refresh.max_interval", s.refresh.max_interval.to_string());
        kv("n_chunks", s.n_chunks.to_string());
        kv("topo_chunk", s.topo_chunk.to_string());
        kv("seed", s.seed.to_string());
        kv("sampling", self.sampling.mode.as_str().into());
        match self.sampling.budget {
            SamplingBudget::Fixed { m0 } => kv("sampling.budget", m0.to_string()),
            SamplingBudget::Proportional { rho } => kv("sampling.rho", rho.to_string()),
        }
        kv("sampling.alpha", self.sampling.alpha.to_string());
        kv("sampling.beta", self.sampling.beta.to_string());
        kv("workers", self.workers.to_string());
        kv("barrier_timeout_s", self.barrier_timeout_s.to_string());
        if let Some(v) = self.timeout_s {
            kv("timeout_s", v.to_string());
        }
        if let Some(dir) = &self.out_dir {
            kv("out", dir.display().to_string());
        }
        t
    }
}

fn parse_range(key: &str, v: &str) -> Result<NumericRange> {
    let parts: Vec<&str> = split_list(v).collect();
    let bad = || SomError::Config(format!("{key} = {v:?}: expected `linear|log LO HI`"));
    let [scale, lo, hi] = parts[..] else {
        return Err(bad());
    };
    let scale = match scale {
        "linear" => Scale::Linear,
        "log" => Scale::Log,
        _ => return Err(bad()),
    };
    Ok(NumericRange {
        lo: lo.parse().map_err(|_| bad())?,
        hi: hi.parse().map_err(|_| bad())?,
        scale,
    })
}

fn parse_set<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    split_list(v)
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| SomError::Config(format!("{key}: {e}")))
        })
        .collect()
}

/// Reads a search space. Unlisted dimensions keep their defaults; `base` supplies
/// every non-searched field.
pub fn parse_search_space(text: &str, base: SomConfig) -> Result<SearchSpace> {
    let mut p = Pairs { map: parse_pairs(text)? };
    let mut space = SearchSpace {
        base,
        ..SearchSpace::default()
    };
    for (key, slot) in [
        ("eta0", &mut space.eta0),
        ("sigma0", &mut space.sigma0),
        ("momentum", &mut space.momentum),
        ("n_iters", &mut space.n_iters),
        ("refresh_warmup", &mut space.refresh_warmup),
        ("refresh_growth", &mut space.refresh_growth),
    ] {
        if let Some(v) = p.take(key) {
            *slot = parse_range(key, &v)?;
        }
    }
    if let Some(v) = p.take("lr_decay") {
        space.lr_decay = parse_set::<DecayKind>("lr_decay", &v)?;
    }
    if let Some(v) = p.take("radius_decay") {
        space.radius_decay = parse_set::<DecayKind>("radius_decay", &v)?;
    }
    if let Some(v) = p.take("init_method") {
        space.init_method = parse_set::<InitMethod>("init_method", &v)?;
    }
    if let Some(v) = p.take("use_momentum") {
        space.use_momentum = parse_set::<bool>("use_momentum", &v)?;
    }
    p.finish("search space")?;
    space.validate()?;
    Ok(space)
}
