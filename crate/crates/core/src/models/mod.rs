//! The built-in model registry. Each reference model lives behind the
//! [`ModelSpec`] trait and is selected by its one-letter name at runtime
//! (CLI, study configs): H, F, S fit hierarchical data; P, Z, I fit
//! stochastic volatility series.

pub mod hier;
pub mod sv;

use rand::Rng;

pub use hier::{generate_hier, HierDataset, HierParams};
pub use sv::{generate_sv, SvDataset, SvParams};

use crate::error::{Error, Result};
use crate::graph::{ModelGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFamily {
    Hierarchical,
    StochasticVolatility,
}

impl std::fmt::Display for DataFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataFamily::Hierarchical => write!(f, "hierarchical"),
            DataFamily::StochasticVolatility => write!(f, "stochastic-volatility"),
        }
    }
}

/// An observed dataset of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Hier(HierDataset),
    Sv(SvDataset),
}

impl Dataset {
    pub fn family(&self) -> DataFamily {
        match self {
            Dataset::Hier(_) => DataFamily::Hierarchical,
            Dataset::Sv(_) => DataFamily::StochasticVolatility,
        }
    }

    pub fn as_hier(&self) -> Option<&HierDataset> {
        match self {
            Dataset::Hier(d) => Some(d),
            Dataset::Sv(_) => None,
        }
    }

    pub fn as_sv(&self) -> Option<&SvDataset> {
        match self {
            Dataset::Sv(d) => Some(d),
            Dataset::Hier(_) => None,
        }
    }

    /// Serialize as the dataset file format: a header line with family and
    /// dimensions, optional `#` metadata lines, then the values (one group
    /// per line for hierarchical data, one value per line for series).
    pub fn to_text(&self, meta: &str) -> String {
        let mut out = String::new();
        match self {
            Dataset::Hier(d) => {
                out.push_str(&format!("waic-dataset v1 family=hier J={}\n", d.group_count()));
                if !meta.is_empty() {
                    out.push_str(&format!("# {meta}\n"));
                }
                for group in d.groups() {
                    let line: Vec<String> = group.iter().map(|v| format!("{v}")).collect();
                    out.push_str(&line.join(" "));
                    out.push('\n');
                }
            }
            Dataset::Sv(d) => {
                out.push_str(&format!("waic-dataset v1 family=sv T={}\n", d.len()));
                if !meta.is_empty() {
                    out.push_str(&format!("# {meta}\n"));
                }
                for v in d.values() {
                    out.push_str(&format!("{v}\n"));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let bad = |msg: String| Error::Format { what: "dataset file", msg };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("waic-dataset") || toks.next() != Some("v1") {
            return Err(bad("header must start with `waic-dataset v1`".into()));
        }
        let mut family: Option<&str> = None;
        let mut dim: Option<usize> = None;
        for tok in toks {
            if let Some(v) = tok.strip_prefix("family=") {
                family = Some(v);
            } else if let Some(v) = tok.strip_prefix("J=").or_else(|| tok.strip_prefix("T=")) {
                dim = Some(v.parse().map_err(|_| bad(format!("bad dimension `{v}`")))?);
            }
        }
        let body: Vec<&str> = lines
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let parse_vals = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad value `{t}`"))))
                .collect()
        };
        match family {
            Some("hier") => {
                let j = dim.ok_or_else(|| bad("missing J=".into()))?;
                if body.len() != j {
                    return Err(bad(format!("expected {j} group lines, found {}", body.len())));
                }
                let mut groups = Vec::with_capacity(j);
                for line in body {
                    groups.push(parse_vals(line)?);
                }
                Ok(Dataset::Hier(HierDataset::new(groups)?))
            }
            Some("sv") => {
                let t = dim.ok_or_else(|| bad("missing T=".into()))?;
                let mut values = Vec::with_capacity(t);
                for line in body {
                    values.extend(parse_vals(line)?);
                }
                if values.len() != t {
                    return Err(bad(format!("expected {t} values, found {}", values.len())));
                }
                Ok(Dataset::Sv(SvDataset::new(values)?))
            }
            Some(other) => Err(bad(format!("unknown family `{other}`"))),
            None => Err(bad("missing family=".into())),
        }
    }
}

/// Generate a dataset from a family's true generating process.
pub fn generate_dataset<R: Rng>(
    family: DataFamily,
    hier_params: &HierParams,
    sv_params: &SvParams,
    group_sizes: &[usize],
    series_len: usize,
    rng: &mut R,
) -> Result<Dataset> {
    match family {
        DataFamily::Hierarchical => Ok(Dataset::Hier(generate_hier(hier_params, group_sizes, rng)?)),
        DataFamily::StochasticVolatility => {
            Ok(Dataset::Sv(generate_sv(sv_params, series_len, rng)?))
        }
    }
}

/// Data-informed starting values and random-walk proposal scales for one
/// model on one dataset. The adaptive sampler refines the scales during
/// burn-in; the hints just avoid starting in a tail.
#[derive(Debug, Clone, Default)]
pub struct SamplerHints {
    pub init: Vec<(NodeId, f64)>,
    pub scales: Vec<(NodeId, f64)>,
}

/// One fit-able model: builds a [`ModelGraph`] against a dataset and supplies
/// sampler hints. Implementations are registered in [`registry`] and looked
/// up by name.
pub trait ModelSpec: Sync {
    /// Registry key ("H", "F", "S", "P", "Z", "I").
    fn name(&self) -> &'static str;
    /// Human-readable description for `model list`.
    fn title(&self) -> &'static str;
    fn family(&self) -> DataFamily;
    /// Whether the model declares latent nodes (and so has a distinct
    /// marginal WAIC).
    fn has_latents(&self) -> bool;
    fn build(&self, data: &Dataset) -> Result<ModelGraph>;
    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints;
}

/// All built-in models, in registry order.
pub fn registry() -> &'static [&'static dyn ModelSpec] {
    static REGISTRY: [&dyn ModelSpec; 6] = [
        &hier::RandomIntercept,
        &hier::ShrunkIntercept,
        &hier::PooledNormal,
        &sv::SvAr1,
        &sv::SvWhiteNoise,
        &sv::IidNormal,
    ];
    &REGISTRY
}

/// Look a model up by its registry name (case-insensitive).
pub fn lookup(name: &str) -> Result<&'static dyn ModelSpec> {
    let want = name.trim().to_ascii_uppercase();
    registry()
        .iter()
        .copied()
        .find(|m| m.name() == want)
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}
