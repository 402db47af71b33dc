//! Per-sample log predictive density vectors `h_m(theta^s)`: evaluated
//! directly for conditional WAIC, or through an online inner Monte Carlo
//! average over simulated latent draws for marginal WAIC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accum::LogSumExpState;
use crate::error::{Error, Result};
use crate::graph::{Assignment, ModelGraph, ResolvedPartition};

/// Which predictive density the engine is accumulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Condition on the full parameter vector, latents included.
    Conditional,
    /// Integrate the declared latent nodes out by Monte Carlo.
    Marginal,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Conditional => write!(f, "conditional"),
            Mode::Marginal => write!(f, "marginal"),
        }
    }
}

/// Fractions of the inner Monte Carlo budget at which marginal WAIC is
/// snapshot for stability diagnostics.
pub const CHECKPOINT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveConfig {
    pub mode: Mode,
    /// Inner Monte Carlo draw count K. Forced to 1 in conditional mode.
    pub k: u32,
}

impl PredictiveConfig {
    pub fn conditional() -> Self {
        PredictiveConfig { mode: Mode::Conditional, k: 1 }
    }

    pub fn marginal(k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::BadInnerCount(k));
        }
        Ok(PredictiveConfig { mode: Mode::Marginal, k })
    }

    /// Number of checkpoint fractions carried through the engine.
    pub fn fraction_count(&self) -> usize {
        match self.mode {
            Mode::Conditional => 1,
            Mode::Marginal => CHECKPOINT_FRACTIONS.len(),
        }
    }
}

/// Inner-loop draw indices at which snapshots are taken: `floor(q * K)`,
/// clamped up to 1 so tiny K still produces a defined value.
pub fn snapshot_indices(k: u32) -> [u32; 4] {
    let mut out = [0u32; 4];
    for (slot, q) in CHECKPOINT_FRACTIONS.iter().enumerate() {
        out[slot] = (((*q) * k as f64).floor() as u32).max(1);
    }
    out[3] = k;
    out
}

/// Marginal h-vectors for one posterior sample: one length-M vector per
/// checkpoint fraction, all prefixes of a single latent-draw stream.
#[derive(Debug, Clone)]
pub struct MarginalH {
    pub by_fraction: [Vec<f64>; 4],
    /// Elements whose full-K average was still `-inf` (every inner draw had
    /// zero predictive density there).
    pub neg_inf_elements: u32,
}

/// Conditional log predictive density vector: `h_m = log p(y_m | theta)` for
/// each partition element, with `theta` the full assignment (parameters and
/// latents).
pub fn conditional_h(
    graph: &ModelGraph,
    partition: &ResolvedPartition,
    sample: &Assignment,
) -> Result<Vec<f64>> {
    partition
        .groups()
        .iter()
        .map(|group| graph.log_joint_density(group, sample))
        .collect()
}

/// Marginal log predictive density vectors for one posterior draw of the
/// parameters.
///
/// Runs K ancestral simulations of the latent nodes (exactly K, independent
/// of the number of partition elements) and accumulates one online logSumExp
/// state per element. Snapshots are taken at `floor(0.25K)`, `floor(0.5K)`,
/// `floor(0.75K)` and `K` draws of the same stream.
pub fn marginal_h<R: Rng>(
    graph: &ModelGraph,
    partition: &ResolvedPartition,
    sample: &Assignment,
    config: &PredictiveConfig,
    rng: &mut R,
) -> Result<MarginalH> {
    if config.k < 1 {
        return Err(Error::BadInnerCount(config.k));
    }
    let m = partition.len();
    let mut states = vec![LogSumExpState::new(); m];
    let mut work = sample.clone();
    let snaps = snapshot_indices(config.k);
    let mut by_fraction: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; m]);
    for k in 1..=config.k {
        graph.simulate_latent(&mut work, rng)?;
        for (state, group) in states.iter_mut().zip(partition.groups()) {
            let h = graph.log_joint_density(group, &work)?;
            state.update(h)?;
        }
        for (slot, &snap) in snaps.iter().enumerate() {
            if k == snap {
                for (out, state) in by_fraction[slot].iter_mut().zip(&states) {
                    *out = state.log_mean_exp();
                }
            }
        }
    }
    let neg_inf_elements =
        by_fraction[3].iter().filter(|h| **h == f64::NEG_INFINITY).count() as u32;
    Ok(MarginalH { by_fraction, neg_inf_elements })
}
