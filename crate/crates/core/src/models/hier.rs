//! Hierarchical random-intercept data and the three models fit to it.
//!
//! Generating process: `b_j ~ N(mu, tau)`, `y_{j,i} ~ N(b_j, sigma)` (second
//! arguments are standard deviations throughout).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, KernelSpec, ModelGraph};
use crate::models::{DataFamily, Dataset, ModelSpec, SamplerHints};

/// True parameters of the hierarchical generating process.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HierParams {
    pub mu: f64,
    pub tau: f64,
    pub sigma: f64,
}

/// Grouped observations `y[j][i]`, ragged group sizes allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct HierDataset {
    y: Vec<Vec<f64>>,
}

impl HierDataset {
    pub fn new(y: Vec<Vec<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Domain("hierarchical dataset needs at least one group".into()));
        }
        for (j, group) in y.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Domain(format!("group {} is empty", j + 1)));
            }
            if let Some(v) = group.iter().find(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite observation {v} in group {}", j + 1)));
            }
        }
        Ok(HierDataset { y })
    }

    pub fn group_count(&self) -> usize {
        self.y.len()
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn total_len(&self) -> usize {
        self.y.iter().map(Vec::len).sum()
    }

    /// Data node names in graph declaration order: `y[j,i]`, group-major,
    /// 1-based like the model notation.
    pub fn data_node_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.total_len());
        for (j, group) in self.y.iter().enumerate() {
            for i in 0..group.len() {
                names.push(format!("y[{},{}]", j + 1, i + 1));
            }
        }
        names
    }

    /// The natural grouping: one partition element per group `C_m`.
    pub fn grouped_partition(&self) -> Vec<Vec<String>> {
        self.y
            .iter()
            .enumerate()
            .map(|(j, group)| {
                (0..group.len()).map(|i| format!("y[{},{}]", j + 1, i + 1)).collect()
            })
            .collect()
    }

    fn grand_mean(&self) -> f64 {
        let n = self.total_len() as f64;
        self.y.iter().flatten().sum::<f64>() / n
    }

    fn group_means(&self) -> Vec<f64> {
        self.y.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect()
    }

    /// Pooled within-group standard deviation (floored away from zero).
    fn within_sd(&self) -> f64 {
        let mut ss = 0.0;
        let mut dof = 0usize;
        for group in &self.y {
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            ss += group.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            dof += group.len().saturating_sub(1);
        }
        if dof == 0 {
            return 1.0;
        }
        (ss / dof as f64).sqrt().max(1e-3)
    }
}

/// Draw a dataset from the true generating process.
pub fn generate_hier<R: Rng>(
    params: &HierParams,
    group_sizes: &[usize],
    rng: &mut R,
) -> Result<HierDataset> {
    if params.tau <= 0.0 || params.sigma <= 0.0 {
        return Err(Error::Domain(format!(
            "scales must be positive: tau={}, sigma={}",
            params.tau, params.sigma
        )));
    }
    if group_sizes.is_empty() || group_sizes.contains(&0) {
        return Err(Error::Domain("group sizes must be nonempty and positive".into()));
    }
    let mut y = Vec::with_capacity(group_sizes.len());
    for &n_j in group_sizes {
        let z: f64 = StandardNormal.sample(rng);
        let b_j = params.mu + params.tau * z;
        let group: Vec<f64> = (0..n_j)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                b_j + params.sigma * z
            })
            .collect();
        y.push(group);
    }
    HierDataset::new(y)
}

fn hier_data(data: &Dataset, model: &'static str) -> Result<&'static str> {
    match data {
        Dataset::Hier(_) => Ok(model),
        Dataset::Sv(_) => Err(Error::DatasetMismatch { model, expected: "hierarchical" }),
    }
}

// Priors shared by the hierarchical models: weakly informative, wide.
const MU_PRIOR_SD: f64 = 100.0;
const SCALE_PRIOR_SD: f64 = 10.0;
// Model F pins the group-mean sd to this constant instead of sampling tau.
const SHRUNK_TAU: f64 = 0.01;

/// Model H: the true random-intercept structure, `b_j ~ N(mu, tau)`.
pub struct RandomIntercept;

/// Model F: intercepts nearly pinned to the grand mean, `b_j ~ N(mu, 0.01)`.
pub struct ShrunkIntercept;

/// Model S: no hierarchy, all observations pooled around one mean.
pub struct PooledNormal;

fn build_hier_graph(data: &HierDataset, tau: Option<()>, pooled: bool) -> Result<ModelGraph> {
    let mut g = GraphBuilder::new();
    let mu = g.param("mu", KernelSpec::normal(0.0, MU_PRIOR_SD))?;
    let sigma = g.param("sigma", KernelSpec::half_normal(SCALE_PRIOR_SD))?;
    if pooled {
        for (j, group) in data.groups().iter().enumerate() {
            for (i, &v) in group.iter().enumerate() {
                g.data(&format!("y[{},{}]", j + 1, i + 1), v, KernelSpec::normal(mu, sigma))?;
            }
        }
        return g.build();
    }
    let tau_node = match tau {
        Some(()) => Some(g.param("tau", KernelSpec::half_normal(SCALE_PRIOR_SD))?),
        None => None,
    };
    let mut intercepts = Vec::with_capacity(data.group_count());
    for j in 0..data.group_count() {
        let kernel = match tau_node {
            Some(tau) => KernelSpec::normal(mu, tau),
            None => KernelSpec::normal(mu, SHRUNK_TAU),
        };
        intercepts.push(g.latent(&format!("b[{}]", j + 1), kernel)?);
    }
    for (j, group) in data.groups().iter().enumerate() {
        for (i, &v) in group.iter().enumerate() {
            g.data(
                &format!("y[{},{}]", j + 1, i + 1),
                v,
                KernelSpec::normal(intercepts[j], sigma),
            )?;
        }
    }
    g.build()
}

impl ModelSpec for RandomIntercept {
    fn name(&self) -> &'static str {
        "H"
    }

    fn title(&self) -> &'static str {
        "random-intercept hierarchical model (true structure)"
    }

    fn family(&self) -> DataFamily {
        DataFamily::Hierarchical
    }

    fn has_latents(&self) -> bool {
        true
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        hier_data(data, self.name())?;
        build_hier_graph(data.as_hier().unwrap(), Some(()), false)
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_hier().unwrap();
        let gm = d.grand_mean();
        let means = d.group_means();
        let within = d.within_sd();
        let j = d.group_count() as f64;
        let between = {
            let var = means.iter().map(|m| (m - gm) * (m - gm)).sum::<f64>() / (j - 1.0).max(1.0);
            var.sqrt().max(1e-2)
        };
        let n = d.total_len() as f64;
        let mut hints = SamplerHints::default();
        let mut put = |name: &str, init: f64, scale: f64| {
            if let Some(id) = graph.lookup(name) {
                hints.init.push((id, init));
                hints.scales.push((id, scale));
            }
        };
        put("mu", gm, between / j.sqrt() + within / n.sqrt());
        put("sigma", within, 1.0 / (2.0 * n).sqrt());
        put("tau", between, 1.0 / (2.0 * j).sqrt().max(1.0));
        for (jj, (mean, group)) in means.iter().zip(d.groups()).enumerate() {
            put(&format!("b[{}]", jj + 1), *mean, within / (group.len() as f64).sqrt());
        }
        hints
    }
}

impl ModelSpec for ShrunkIntercept {
    fn name(&self) -> &'static str {
        "F"
    }

    fn title(&self) -> &'static str {
        "hierarchical model with group means forced toward the grand mean (sd 0.01)"
    }

    fn family(&self) -> DataFamily {
        DataFamily::Hierarchical
    }

    fn has_latents(&self) -> bool {
        true
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        hier_data(data, self.name())?;
        build_hier_graph(data.as_hier().unwrap(), None, false)
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_hier().unwrap();
        let gm = d.grand_mean();
        let n = d.total_len() as f64;
        // Under F the intercepts sit within ~0.01 of mu, so the residual sd
        // absorbs the between-group spread.
        let total_sd = {
            let var = d
                .groups()
                .iter()
                .flatten()
                .map(|v| (v - gm) * (v - gm))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            var.sqrt().max(1e-3)
        };
        let j = d.group_count() as f64;
        let mut hints = SamplerHints::default();
        let mut put = |name: &str, init: f64, scale: f64| {
            if let Some(id) = graph.lookup(name) {
                hints.init.push((id, init));
                hints.scales.push((id, scale));
            }
        };
        put("mu", gm, SHRUNK_TAU / j.sqrt());
        put("sigma", total_sd, 1.0 / (2.0 * n).sqrt());
        for jj in 0..d.group_count() {
            put(&format!("b[{}]", jj + 1), gm, SHRUNK_TAU);
        }
        hints
    }
}

impl ModelSpec for PooledNormal {
    fn name(&self) -> &'static str {
        "S"
    }

    fn title(&self) -> &'static str {
        "pooled normal model, one mean for all observations"
    }

    fn family(&self) -> DataFamily {
        DataFamily::Hierarchical
    }

    fn has_latents(&self) -> bool {
        false
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        hier_data(data, self.name())?;
        build_hier_graph(data.as_hier().unwrap(), None, true)
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_hier().unwrap();
        let gm = d.grand_mean();
        let n = d.total_len() as f64;
        let total_sd = {
            let var = d
                .groups()
                .iter()
                .flatten()
                .map(|v| (v - gm) * (v - gm))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            var.sqrt().max(1e-3)
        };
        let mut hints = SamplerHints::default();
        let mut put = |name: &str, init: f64, scale: f64| {
            if let Some(id) = graph.lookup(name) {
                hints.init.push((id, init));
                hints.scales.push((id, scale));
            }
        };
        put("mu", gm, total_sd / n.sqrt());
        put("sigma", total_sd, 1.0 / (2.0 * n).sqrt());
        hints
    }
}
