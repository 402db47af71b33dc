//! Adaptive random-walk Metropolis-within-Gibbs over a [`ModelGraph`], plus
//! the glue that feeds each kept iteration straight into the WAIC engine.
//! One full-vector iteration updates every parameter and latent site once;
//! proposal scales adapt during burn-in only, so the kept chain is a plain
//! Markov chain. Positive-support sites walk on the log scale with the
//! Jacobian folded into the acceptance ratio.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::accum::LogSumExpState;
use crate::engine::{HVector, WaicResult, WaicState};
use crate::error::{Error, Result};
use crate::graph::{Assignment, ModelGraph, NodeId, ResolvedPartition, Support};
use crate::models::{Dataset, SamplerHints};
use crate::partition::PartitionSpec;
use crate::predictive::{snapshot_indices, Mode, PredictiveConfig};
use crate::stream;

/// Chain length and proposal settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Iterations discarded before any WAIC update.
    pub burn_in: u32,
    /// Kept iterations; each one produces exactly one WAIC update.
    pub keep: u32,
    pub seed: u64,
    /// Adapt proposal scales during burn-in (frozen afterwards either way).
    pub adapt: bool,
    /// Per-node proposal scale overrides, by node name. Anything not listed
    /// falls back to the model's hints, then to a generic default.
    pub scale_overrides: Vec<(String, f64)>,
    /// Parameters whose effective sample size falls below this are flagged.
    pub ess_threshold: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 500,
            keep: 5000,
            seed: 0,
            adapt: true,
            scale_overrides: Vec::new(),
            ess_threshold: 100.0,
        }
    }
}

const ADAPT_BATCH: u32 = 25;
const TARGET_ACCEPTANCE: f64 = 0.44;

#[derive(Debug, Clone)]
struct Site {
    id: NodeId,
    support: Support,
    log_scale: f64,
    accepted: u64,
    proposed: u64,
    batch_accepted: u32,
    batch_proposed: u32,
    batches: u32,
}

impl Site {
    fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn adapt(&mut self) {
        self.batches += 1;
        let rate = self.batch_accepted as f64 / self.batch_proposed.max(1) as f64;
        let step = (1.0 / (self.batches as f64).sqrt()).min(0.25);
        if rate > TARGET_ACCEPTANCE {
            self.log_scale += step;
        } else {
            self.log_scale -= step;
        }
        self.batch_accepted = 0;
        self.batch_proposed = 0;
    }
}

/// Whole-latent-block proposal. Single-site moves explore a long latent
/// vector's level and amplitude extremely slowly (the classic stiff modes of
/// volatility paths); these two cheap joint moves fix that while leaving the
/// stationary distribution untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockMove {
    /// All latents shifted by one shared normal draw.
    Translate,
    /// All latents contracted/expanded about their current mean; the
    /// log-Jacobian `T ln c` joins the acceptance ratio.
    Rescale,
}

#[derive(Debug, Clone)]
struct BlockSite {
    kind: BlockMove,
    log_scale: f64,
    accepted: u64,
    proposed: u64,
    batch_accepted: u32,
    batch_proposed: u32,
    batches: u32,
}

impl BlockSite {
    fn adapt(&mut self) {
        self.batches += 1;
        let rate = self.batch_accepted as f64 / self.batch_proposed.max(1) as f64;
        let step = (1.0 / (self.batches as f64).sqrt()).min(0.25);
        if rate > TARGET_ACCEPTANCE {
            self.log_scale += step;
        } else {
            self.log_scale -= step;
        }
        self.batch_accepted = 0;
        self.batch_proposed = 0;
    }
}

struct Chain<'a> {
    graph: &'a ModelGraph,
    sites: Vec<Site>,
    n_params: usize,
    block_moves: Vec<BlockSite>,
    latent_buf: Vec<f64>,
    asg: Assignment,
    rng: Xoshiro256PlusPlus,
    adapting: bool,
}

impl<'a> Chain<'a> {
    fn new(
        graph: &'a ModelGraph,
        hints: &SamplerHints,
        cfg: &McmcConfig,
    ) -> Result<Chain<'a>> {
        let mut asg = graph.assignment();
        let mut sites = Vec::with_capacity(graph.params().len() + graph.latents().len());
        for &id in graph.params().iter().chain(graph.latents()) {
            let support = graph.support_of(id);
            let init = hints
                .init
                .iter()
                .find(|(hid, _)| *hid == id)
                .map(|(_, v)| *v)
                .unwrap_or(match support {
                    Support::Real => 0.0,
                    Support::Positive => 1.0,
                    Support::Interval(lo, hi) => 0.5 * (lo + hi),
                });
            let init = match support {
                Support::Positive => init.max(1e-6),
                Support::Interval(lo, hi) => init.clamp(lo + 1e-9, hi - 1e-9),
                Support::Real => init,
            };
            asg.set(id, init);
            let name = graph.name(id);
            let hinted = hints.scales.iter().find(|(hid, _)| *hid == id).map(|(_, v)| *v);
            let overridden = cfg
                .scale_overrides
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v);
            let scale = overridden.or(hinted).unwrap_or(0.5).max(1e-8);
            sites.push(Site {
                id,
                support,
                log_scale: scale.ln(),
                accepted: 0,
                proposed: 0,
                batch_accepted: 0,
                batch_proposed: 0,
                batches: 0,
            });
        }
        let block_moves = if graph.latents().len() >= 2 {
            [BlockMove::Translate, BlockMove::Rescale]
                .into_iter()
                .map(|kind| BlockSite {
                    kind,
                    log_scale: 0.1f64.ln(),
                    accepted: 0,
                    proposed: 0,
                    batch_accepted: 0,
                    batch_proposed: 0,
                    batches: 0,
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Chain {
            graph,
            sites,
            n_params: graph.params().len(),
            block_moves,
            latent_buf: vec![0.0; graph.latents().len()],
            asg,
            rng: Xoshiro256PlusPlus::seed_from_u64(cfg.seed),
            adapting: cfg.adapt,
        })
    }

    /// Conditional log density of the site's own kernel plus its stochastic
    /// children, at the current assignment.
    fn site_logp(&self, id: NodeId) -> Result<f64> {
        let own = self.graph.log_density_value(id, &self.asg, self.asg.value(id))?;
        if own == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = own;
        for &child in self.graph.children_of(id) {
            total += match self.graph.role(child) {
                crate::graph::NodeRole::Data => self.graph.log_density_at(child, &self.asg)?,
                _ => self.graph.log_density_value(child, &self.asg, self.asg.value(child))?,
            };
        }
        Ok(total)
    }

    fn update_site(&mut self, s: usize) -> Result<()> {
        let id = self.sites[s].id;
        let scale = self.sites[s].scale();
        let current = self.asg.value(id);
        let z: f64 = StandardNormal.sample(&mut self.rng);
        // Proposal and the log Jacobian correction of its transform: positive
        // sites walk on the log scale, interval sites on the atanh scale.
        let (proposal, log_jacobian) = match self.sites[s].support {
            Support::Real => (current + scale * z, 0.0),
            Support::Positive => {
                let u = current.ln() + scale * z;
                (u.exp(), u - current.ln())
            }
            Support::Interval(lo, hi) => {
                let half_width = 0.5 * (hi - lo);
                let t = ((current - lo) / half_width - 1.0).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                let u2 = t.atanh() + scale * z;
                let t2 = u2.tanh();
                let proposal = lo + half_width * (t2 + 1.0);
                // d x / d u = half_width * (1 - tanh(u)^2)
                let jac = (1.0 - t2 * t2).ln() - (1.0 - t * t).ln();
                (proposal, jac)
            }
        };
        self.sites[s].proposed += 1;
        self.sites[s].batch_proposed += 1;
        let mut accept = false;
        if proposal.is_finite() {
            let before = self.site_logp(id)?;
            self.asg.set(id, proposal);
            // The site's own prior gates first: a -inf prior (outside an
            // interval support, say) rejects before children ever see an
            // invalid value.
            let own_after = self.graph.log_density_value(id, &self.asg, proposal)?;
            if own_after > f64::NEG_INFINITY {
                let after = self.site_logp(id)?;
                let delta = after - before + log_jacobian;
                accept = delta >= 0.0 || self.rng.random::<f64>() < delta.exp();
            }
            if !accept {
                self.asg.set(id, current);
            }
        }
        if accept {
            self.sites[s].accepted += 1;
            self.sites[s].batch_accepted += 1;
        }
        Ok(())
    }

    /// Joint log density of everything a whole-latent-block move touches:
    /// every latent's own kernel plus every data node.
    fn latent_block_logp(&self) -> Result<f64> {
        let mut total = 0.0;
        for &id in self.graph.latents() {
            total += self.graph.log_density_value(id, &self.asg, self.asg.value(id))?;
            if total == f64::NEG_INFINITY {
                return Ok(total);
            }
        }
        for &id in self.graph.data_nodes() {
            total += self.graph.log_density_at(id, &self.asg)?;
        }
        Ok(total)
    }

    fn update_block(&mut self, m: usize, adapt_now: bool) -> Result<()> {
        let scale = self.block_moves[m].log_scale.exp();
        let kind = self.block_moves[m].kind;
        self.block_moves[m].proposed += 1;
        self.block_moves[m].batch_proposed += 1;
        let before = self.latent_block_logp()?;
        for (slot, &id) in self.latent_buf.iter_mut().zip(self.graph.latents()) {
            *slot = self.asg.value(id);
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let t = self.graph.latents().len() as f64;
        let log_jacobian = match kind {
            BlockMove::Translate => {
                let delta = scale * z;
                for (i, &id) in self.graph.latents().iter().enumerate() {
                    self.asg.set(id, self.latent_buf[i] + delta);
                }
                0.0
            }
            BlockMove::Rescale => {
                let anchor = self.latent_buf.iter().sum::<f64>() / t;
                let ln_c = scale * z;
                let c = ln_c.exp();
                for (i, &id) in self.graph.latents().iter().enumerate() {
                    self.asg.set(id, anchor + c * (self.latent_buf[i] - anchor));
                }
                t * ln_c
            }
        };
        let after = self.latent_block_logp()?;
        let delta = after - before + log_jacobian;
        let accept = delta >= 0.0 || self.rng.random::<f64>() < delta.exp();
        if accept {
            self.block_moves[m].accepted += 1;
            self.block_moves[m].batch_accepted += 1;
        } else {
            for (i, &id) in self.graph.latents().iter().enumerate() {
                self.asg.set(id, self.latent_buf[i]);
            }
        }
        if adapt_now && self.block_moves[m].batch_proposed >= ADAPT_BATCH {
            self.block_moves[m].adapt();
        }
        Ok(())
    }

    fn data_loglik(&self) -> Result<f64> {
        let mut total = 0.0;
        for &id in self.graph.data_nodes() {
            total += self.graph.log_density_at(id, &self.asg)?;
        }
        Ok(total)
    }

    /// Elliptical slice sample of the whole latent block against the data
    /// likelihood. Valid because the latents are jointly Gaussian given the
    /// parameters; tuning-free and always exact, so it runs during and after
    /// burn-in alike. No-op for graphs with non-Gaussian latent kernels.
    fn update_elliptical(&mut self) -> Result<()> {
        let Some(means) = self.graph.latent_prior_means(&self.asg) else {
            return Ok(());
        };
        for (slot, &id) in self.latent_buf.iter_mut().zip(self.graph.latents()) {
            *slot = self.asg.value(id);
        }
        let threshold = self.data_loglik()? + (1.0 - self.rng.random::<f64>()).ln();
        let mut nu = self.asg.clone();
        self.graph.simulate_latent(&mut nu, &mut self.rng)?;
        let tau = std::f64::consts::TAU;
        let mut theta = self.rng.random::<f64>() * tau;
        let (mut lo, mut hi) = (theta - tau, theta);
        for _ in 0..64 {
            let (sin, cos) = theta.sin_cos();
            for (i, &id) in self.graph.latents().iter().enumerate() {
                let m = means[i];
                let f = self.latent_buf[i] - m;
                let v = nu.value(id) - m;
                self.asg.set(id, m + f * cos + v * sin);
            }
            if self.data_loglik()? > threshold {
                return Ok(());
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            theta = lo + self.rng.random::<f64>() * (hi - lo);
        }
        // Shrunk to nothing (numerically); keep the original point.
        for (i, &id) in self.graph.latents().iter().enumerate() {
            self.asg.set(id, self.latent_buf[i]);
        }
        Ok(())
    }

    /// One full-vector iteration: a parameter pass, the latent sweep in
    /// topological order, the whole-block latent moves (translate, rescale,
    /// elliptical slice), then another parameter pass. Top-level parameters
    /// are cheap to move relative to a latent sweep and couple tightly to the
    /// whole path, so the extra pass buys mixing nearly for free.
    fn step(&mut self, adapt_now: bool) -> Result<()> {
        let params = self.n_params;
        for s in 0..params {
            self.update_site(s)?;
            self.maybe_adapt(s, adapt_now);
        }
        for s in params..self.sites.len() {
            self.update_site(s)?;
            self.maybe_adapt(s, adapt_now);
        }
        if !self.block_moves.is_empty() {
            for m in 0..self.block_moves.len() {
                self.update_block(m, adapt_now)?;
            }
            self.update_elliptical()?;
        }
        for s in 0..params {
            self.update_site(s)?;
            self.maybe_adapt(s, adapt_now);
        }
        Ok(())
    }

    fn maybe_adapt(&mut self, s: usize, adapt_now: bool) {
        if adapt_now && self.sites[s].batch_proposed >= ADAPT_BATCH {
            self.sites[s].adapt();
        }
    }

    fn run_burn_in(&mut self, burn_in: u32) -> Result<()> {
        for _ in 0..burn_in {
            let adapt = self.adapting;
            self.step(adapt)?;
        }
        // Adaptation freezes here; the kept chain is a fixed-kernel Markov chain.
        for site in &mut self.sites {
            site.accepted = 0;
            site.proposed = 0;
        }
        Ok(())
    }
}

/// One WAIC request evaluated against a chain: a partition plus a predictive
/// mode.
#[derive(Debug, Clone)]
pub struct WaicVariant {
    pub label: String,
    pub partition: PartitionSpec,
    pub config: PredictiveConfig,
}

impl WaicVariant {
    pub fn new(label: impl Into<String>, partition: PartitionSpec, config: PredictiveConfig) -> Self {
        WaicVariant { label: label.into(), partition, config }
    }
}

/// Posterior summary for one top-level parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunDiagnostics {
    /// Parameters whose ESS fell below the configured threshold.
    pub low_ess: Vec<String>,
    pub ess_threshold: f64,
    /// Count of partition elements whose marginal average was -inf, summed
    /// over samples and variants.
    pub neg_inf_warnings: u64,
}

/// Output of a chain run: one result per requested variant plus diagnostics.
#[derive(Debug, Clone)]
pub struct MultiRun {
    pub results: Vec<WaicResult>,
    pub summaries: Vec<ParamSummary>,
    pub diagnostics: RunDiagnostics,
}

/// Output of a single-variant run.
#[derive(Debug, Clone)]
pub struct McmcWaicRun {
    pub waic: WaicResult,
    pub summaries: Vec<ParamSummary>,
    pub diagnostics: RunDiagnostics,
}

struct VariantState {
    resolved: ResolvedPartition,
    mode: Mode,
    engine: WaicState,
    /// Positions (into the data-node order) of each group's members.
    group_positions: Vec<Vec<u32>>,
    /// Marginal mode only: one inner logSumExp state per element, reused
    /// across samples.
    inner: Vec<LogSumExpState>,
    snapshots: [Vec<f64>; 4],
}

impl VariantState {
    fn new(graph: &ModelGraph, variant: &WaicVariant) -> Result<VariantState> {
        let resolved = graph.resolve_partition(&variant.partition)?;
        let mut pos_of_node = vec![u32::MAX; graph.node_count()];
        for (pos, &id) in graph.data_nodes().iter().enumerate() {
            pos_of_node[id.0 as usize] = pos as u32;
        }
        let group_positions: Vec<Vec<u32>> = resolved
            .groups()
            .iter()
            .map(|g| g.iter().map(|id| pos_of_node[id.0 as usize]).collect())
            .collect();
        let m = resolved.len();
        let engine = WaicState::init(&variant.partition, &variant.config);
        Ok(VariantState {
            resolved,
            mode: variant.config.mode,
            engine,
            group_positions,
            inner: match variant.config.mode {
                Mode::Marginal => vec![LogSumExpState::new(); m],
                Mode::Conditional => Vec::new(),
            },
            snapshots: std::array::from_fn(|_| vec![0.0; m]),
        })
    }

    /// Group sums from per-point values, exactly matching the addition order
    /// of `log_joint_density` over the group.
    fn group_h(&self, point_h: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.group_positions.iter().map(|group| {
            let mut total = 0.0;
            for &p in group {
                total += point_h[p as usize];
            }
            total
        }));
    }
}

/// Run one chain and evaluate every requested WAIC variant against it.
///
/// All variants share the posterior draws, and marginal variants additionally
/// share each sample's latent draw stream; every variant's accumulators see
/// exactly the values the single-variant algorithm would produce for that
/// draw stream. Marginal variants must agree on K.
pub fn run_mcmc_waic_multi(
    model_name: &str,
    data: &Dataset,
    variants: &[WaicVariant],
    mcmc: &McmcConfig,
) -> Result<MultiRun> {
    run_multi_impl(model_name, data, variants, mcmc, &mut |_, _| Ok(()))
}

/// Run the sampler and WAIC variants over a hand-built graph (no registry
/// model involved).
pub fn run_graph_waic_multi(
    graph: &ModelGraph,
    hints: &SamplerHints,
    variants: &[WaicVariant],
    mcmc: &McmcConfig,
) -> Result<MultiRun> {
    run_graph_multi_impl(graph, hints, "custom graph", variants, mcmc, &mut |_, _| Ok(()))
}

/// Single-variant convenience wrapper around [`run_mcmc_waic_multi`].
pub fn run_mcmc_waic(
    model_name: &str,
    data: &Dataset,
    partition: &PartitionSpec,
    predictive: &PredictiveConfig,
    mcmc: &McmcConfig,
) -> Result<McmcWaicRun> {
    run_mcmc_waic_with_sink(model_name, data, partition, predictive, mcmc, None)
}

/// Like [`run_mcmc_waic`], optionally dumping every h-vector to `sink` in the
/// stream format so the run can be replayed or ingested elsewhere.
pub fn run_mcmc_waic_with_sink(
    model_name: &str,
    data: &Dataset,
    partition: &PartitionSpec,
    predictive: &PredictiveConfig,
    mcmc: &McmcConfig,
    mut sink: Option<&mut dyn Write>,
) -> Result<McmcWaicRun> {
    let variants =
        [WaicVariant::new("run", partition.clone(), *predictive)];
    if let Some(w) = sink.as_deref_mut() {
        stream::write_header(w, partition.len(), predictive.mode)?;
    }
    let mut multi = run_multi_impl(model_name, data, &variants, mcmc, &mut |_, h| {
        if let Some(w) = sink.as_deref_mut() {
            stream::write_sample(w, h)?;
        }
        Ok(())
    })?;
    Ok(McmcWaicRun {
        waic: multi.results.pop().expect("one variant"),
        summaries: multi.summaries,
        diagnostics: multi.diagnostics,
    })
}

fn run_multi_impl(
    model_name: &str,
    data: &Dataset,
    variants: &[WaicVariant],
    mcmc: &McmcConfig,
    on_sample: &mut dyn FnMut(usize, &HVector) -> Result<()>,
) -> Result<MultiRun> {
    let model = crate::models::lookup(model_name)?;
    let graph = model.build(data)?;
    let hints = model.sampler_hints(data, &graph);
    run_graph_multi_impl(&graph, &hints, model.name(), variants, mcmc, on_sample)
}

fn run_graph_multi_impl(
    graph: &ModelGraph,
    hints: &SamplerHints,
    model_name: &str,
    variants: &[WaicVariant],
    mcmc: &McmcConfig,
    on_sample: &mut dyn FnMut(usize, &HVector) -> Result<()>,
) -> Result<MultiRun> {
    if variants.is_empty() {
        return Err(Error::Config("no WAIC variants requested".into()));
    }
    let mut inner_k: Option<u32> = None;
    for v in variants {
        if v.config.mode == Mode::Marginal {
            if graph.latents().is_empty() {
                return Err(Error::NoLatentNodes(model_name.to_string()));
            }
            match inner_k {
                None => inner_k = Some(v.config.k),
                Some(k) if k == v.config.k => {}
                Some(k) => {
                    return Err(Error::Config(format!(
                        "marginal variants must share one K (saw {k} and {})",
                        v.config.k
                    )))
                }
            }
        }
    }

    let mut states = variants
        .iter()
        .map(|v| VariantState::new(graph, v))
        .collect::<Result<Vec<_>>>()?;
    let any_conditional = states.iter().any(|s| s.mode == Mode::Conditional);
    let need_marginal = inner_k.is_some();

    let mut chain = Chain::new(graph, hints, mcmc)?;
    chain.run_burn_in(mcmc.burn_in)?;

    let n_points = graph.data_nodes().len();
    let mut point_h = vec![0.0f64; n_points];
    let mut group_buf: Vec<f64> = Vec::new();
    let mut traces: Vec<Vec<f64>> =
        vec![Vec::with_capacity(mcmc.keep as usize); graph.params().len()];
    let mut neg_inf_warnings = 0u64;
    let snaps = snapshot_indices(inner_k.unwrap_or(1));

    for _ in 0..mcmc.keep {
        chain.step(false)?;
        for (trace, &id) in traces.iter_mut().zip(graph.params()) {
            trace.push(chain.asg.value(id));
        }

        if any_conditional {
            for (slot, &id) in point_h.iter_mut().zip(graph.data_nodes()) {
                *slot = graph.log_density_at(id, &chain.asg)?;
            }
            for (idx, state) in states.iter_mut().enumerate() {
                if state.mode != Mode::Conditional {
                    continue;
                }
                state.group_h(&point_h, &mut group_buf);
                let h = HVector::conditional(group_buf.clone());
                state.engine.update(&h)?;
                on_sample(idx, &h)?;
            }
        }

        if need_marginal {
            let k_max = inner_k.unwrap();
            let mut work = chain.asg.clone();
            for state in states.iter_mut().filter(|s| s.mode == Mode::Marginal) {
                state.inner.iter_mut().for_each(|s| *s = LogSumExpState::new());
            }
            for k in 1..=k_max {
                graph.simulate_latent(&mut work, &mut chain.rng)?;
                for (slot, &id) in point_h.iter_mut().zip(graph.data_nodes()) {
                    *slot = graph.log_density_at(id, &work)?;
                }
                for state in states.iter_mut().filter(|s| s.mode == Mode::Marginal) {
                    state.group_h(&point_h, &mut group_buf);
                    for (inner, &h) in state.inner.iter_mut().zip(group_buf.iter()) {
                        inner.update(h)?;
                    }
                    for (slot, &snap) in snaps.iter().enumerate() {
                        if k == snap {
                            for (out, inner) in
                                state.snapshots[slot].iter_mut().zip(&state.inner)
                            {
                                *out = inner.log_mean_exp();
                            }
                        }
                    }
                }
            }
            for (idx, state) in states.iter_mut().enumerate() {
                if state.mode != Mode::Marginal {
                    continue;
                }
                neg_inf_warnings +=
                    state.snapshots[3].iter().filter(|h| **h == f64::NEG_INFINITY).count() as u64;
                let mut values = Vec::with_capacity(4 * state.resolved.len());
                for frac in &state.snapshots {
                    values.extend_from_slice(frac);
                }
                let h = HVector::from_flat(4, state.resolved.len(), values)?;
                state.engine.update(&h)?;
                on_sample(idx, &h)?;
            }
        }
    }

    let mut summaries = Vec::with_capacity(graph.params().len());
    let mut low_ess = Vec::new();
    for ((trace, &id), site) in traces.iter().zip(graph.params()).zip(&chain.sites) {
        debug_assert_eq!(site.id, id);
        let n = trace.len() as f64;
        let mean = trace.iter().sum::<f64>() / n.max(1.0);
        let var = if trace.len() > 1 {
            trace.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let ess = effective_sample_size(trace);
        let name = graph.name(id).to_string();
        if ess < mcmc.ess_threshold {
            low_ess.push(name.clone());
        }
        summaries.push(ParamSummary {
            name,
            mean,
            sd: var.sqrt(),
            ess,
            acceptance_rate: site.accepted as f64 / site.proposed.max(1) as f64,
        });
    }

    let results = states
        .iter()
        .map(|s| s.engine.finalize())
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRun {
        results,
        summaries,
        diagnostics: RunDiagnostics {
            low_ess,
            ess_threshold: mcmc.ess_threshold,
            neg_inf_warnings,
        },
    })
}

/// Effective sample size via Geyer's initial positive sequence estimator.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = chain.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        chain[..n - lag]
            .iter()
            .zip(&chain[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let gamma0 = autocov(0);
    if gamma0 <= 0.0 || !gamma0.is_finite() {
        return nf;
    }
    let mut sigma2 = -gamma0;
    let mut m = 0usize;
    while 2 * m + 1 < n {
        let pair = autocov(2 * m) + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        sigma2 += 2.0 * pair;
        m += 1;
    }
    if sigma2 <= 0.0 {
        return nf;
    }
    (nf * gamma0 / sigma2).min(nf)
}
