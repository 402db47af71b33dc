//! Simulation-study harness: generates replicate datasets, fits each model,
//! evaluates every requested WAIC variant against one shared chain per
//! (replicate, model), and aggregates means, Monte Carlo standard errors and
//! model-selection proportions. Replicates run in parallel; aggregation is an
//! ordered fold, so identical configs produce byte-identical reports.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{WaicResult, WaicState};
use crate::error::{Error, Result};
use crate::mcmc::{run_mcmc_waic_multi, McmcConfig, WaicVariant};
use crate::models::{
    generate_dataset, DataFamily, Dataset, HierParams, SvParams,
};
use crate::partition::{build_partition, consecutive_blocks, PartitionSpec};
use crate::predictive::{Mode, PredictiveConfig};
use crate::stream::StreamReader;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyFamily {
    /// Hierarchical study 1: J=20 groups of 100.
    Hier1,
    /// Hierarchical study 2: J=40 groups of 60.
    Hier2,
    /// Stochastic volatility series, T=200.
    Sv,
}

impl StudyFamily {
    pub fn data_family(self) -> DataFamily {
        match self {
            StudyFamily::Hier1 | StudyFamily::Hier2 => DataFamily::Hierarchical,
            StudyFamily::Sv => DataFamily::StochasticVolatility,
        }
    }

    /// The model matching the generating process, the one "correct selection"
    /// means.
    pub fn true_model(self) -> &'static str {
        match self {
            StudyFamily::Hier1 | StudyFamily::Hier2 => "H",
            StudyFamily::Sv => "P",
        }
    }
}

impl std::fmt::Display for StudyFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyFamily::Hier1 => write!(f, "hier1"),
            StudyFamily::Hier2 => write!(f, "hier2"),
            StudyFamily::Sv => write!(f, "sv"),
        }
    }
}

/// How a variant partitions the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionChoice {
    /// Singleton per data node.
    Ungrouped,
    /// The hierarchical grouping (all observations sharing a group mean).
    Groups,
    /// Consecutive blocks of this many points (series data).
    Blocks(usize),
}

/// One WAIC flavor to evaluate: predictive mode plus partition choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub mode: Mode,
    pub partition: PartitionChoice,
}

impl VariantSpec {
    pub fn new(mode: Mode, partition: PartitionChoice) -> Self {
        VariantSpec { mode, partition }
    }

    /// Table label, e.g. "grouped (20 data points) marginal".
    pub fn label(&self, n_total: usize) -> String {
        let part = match self.partition {
            PartitionChoice::Ungrouped => "ungrouped".to_string(),
            PartitionChoice::Groups => "grouped".to_string(),
            PartitionChoice::Blocks(b) if b >= n_total => {
                format!("grouped (all {n_total} data points)")
            }
            PartitionChoice::Blocks(b) => format!("grouped ({b} data points)"),
        };
        format!("{part} {}", self.mode)
    }

    fn build_partition(&self, data: &Dataset) -> Result<PartitionSpec> {
        match (self.partition, data) {
            (PartitionChoice::Ungrouped, Dataset::Hier(d)) => {
                build_partition(&d.data_node_names(), None)
            }
            (PartitionChoice::Ungrouped, Dataset::Sv(d)) => {
                build_partition(&d.data_node_names(), None)
            }
            (PartitionChoice::Groups, Dataset::Hier(d)) => {
                build_partition(&d.data_node_names(), Some(&d.grouped_partition()))
            }
            (PartitionChoice::Groups, Dataset::Sv(_)) => Err(Error::Config(
                "`groups` partitioning needs hierarchical data; use `blocks` for series".into(),
            )),
            (PartitionChoice::Blocks(b), Dataset::Hier(d)) => {
                consecutive_blocks(&d.data_node_names(), b)
            }
            (PartitionChoice::Blocks(b), Dataset::Sv(d)) => {
                consecutive_blocks(&d.data_node_names(), b)
            }
        }
    }
}

/// Study configuration as read from a config file. Every field except
/// `family` is optional and falls back to the family's desk-scale preset (or
/// the paper-scale preset under `--full-scale`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub family: StudyFamily,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub models: Option<Vec<String>>,
    #[serde(default)]
    pub variants: Option<Vec<VariantSpec>>,
    /// Inner Monte Carlo draws per posterior sample (marginal variants).
    #[serde(default)]
    pub k_inner: Option<u32>,
    #[serde(default)]
    pub burn_in: Option<u32>,
    #[serde(default)]
    pub keep: Option<u32>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub hier_params: Option<HierParams>,
    #[serde(default)]
    pub sv_params: Option<SvParams>,
    #[serde(default)]
    pub group_count: Option<usize>,
    #[serde(default)]
    pub group_size: Option<usize>,
    #[serde(default)]
    pub series_len: Option<usize>,
    /// Write each replicate's generated dataset next to the report.
    #[serde(default)]
    pub dump_datasets: bool,
}

impl StudyConfig {
    pub fn desk(family: StudyFamily) -> Self {
        StudyConfig {
            family,
            replicates: None,
            models: None,
            variants: None,
            k_inner: None,
            burn_in: None,
            keep: None,
            master_seed: None,
            hier_params: None,
            sv_params: None,
            group_count: None,
            group_size: None,
            series_len: None,
            dump_datasets: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Format { what: "study config", msg: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fill the gaps with the family preset at the requested scale.
    pub fn resolve(&self, full_scale: bool) -> Result<ResolvedStudy> {
        let family = self.family;
        // Desk scale trades replicates and inner draws for runtime. The SV
        // chains keep the full 5000 samples either way: the latent-path
        // models need the length for honest p_WAIC estimates, and their
        // per-iteration cost is small.
        let (replicates, keep, k_inner, burn_in) = match (family, full_scale) {
            (StudyFamily::Hier1 | StudyFamily::Hier2, false) => (30, 2000, 500, 500),
            (StudyFamily::Hier1 | StudyFamily::Hier2, true) => (500, 5000, 1000, 500),
            (StudyFamily::Sv, false) => (30, 5000, 1000, 2500),
            (StudyFamily::Sv, true) => (300, 5000, 3000, 2500),
        };
        let models = self.models.clone().unwrap_or_else(|| match family.data_family() {
            DataFamily::Hierarchical => vec!["H".into(), "F".into(), "S".into()],
            DataFamily::StochasticVolatility => vec!["P".into(), "Z".into(), "I".into()],
        });
        for name in &models {
            crate::models::lookup(name)?;
        }
        let series_len = self.series_len.unwrap_or(200);
        let variants = self.variants.clone().unwrap_or_else(|| match family.data_family() {
            DataFamily::Hierarchical => vec![
                VariantSpec::new(Mode::Conditional, PartitionChoice::Groups),
                VariantSpec::new(Mode::Conditional, PartitionChoice::Ungrouped),
                VariantSpec::new(Mode::Marginal, PartitionChoice::Groups),
                VariantSpec::new(Mode::Marginal, PartitionChoice::Ungrouped),
            ],
            DataFamily::StochasticVolatility => {
                let mut v = Vec::new();
                for mode in [Mode::Conditional, Mode::Marginal] {
                    v.push(VariantSpec::new(mode, PartitionChoice::Ungrouped));
                    for b in [2usize, 10, 20] {
                        v.push(VariantSpec::new(mode, PartitionChoice::Blocks(b)));
                    }
                    v.push(VariantSpec::new(mode, PartitionChoice::Blocks(series_len)));
                }
                v
            }
        });
        if variants.is_empty() {
            return Err(Error::Config("study needs at least one WAIC variant".into()));
        }
        let replicates = self.replicates.unwrap_or(replicates);
        if replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        let (group_count, group_size) = match family {
            StudyFamily::Hier1 => (20, 100),
            StudyFamily::Hier2 => (40, 60),
            StudyFamily::Sv => (0, 0),
        };
        Ok(ResolvedStudy {
            family,
            full_scale,
            replicates,
            models,
            variants,
            k_inner: self.k_inner.unwrap_or(k_inner),
            burn_in: self.burn_in.unwrap_or(burn_in),
            keep: self.keep.unwrap_or(keep),
            master_seed: self.master_seed.unwrap_or(101),
            hier_params: self
                .hier_params
                .unwrap_or(HierParams { mu: 2.0, tau: 0.5, sigma: 1.0 }),
            sv_params: self
                .sv_params
                .unwrap_or(SvParams { phi: 0.95, sigma: 0.25, mu: -1.02 }),
            group_count: self.group_count.unwrap_or(group_count),
            group_size: self.group_size.unwrap_or(group_size),
            series_len,
            dump_datasets: self.dump_datasets,
        })
    }
}

/// Fully concrete study settings after preset resolution.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedStudy {
    pub family: StudyFamily,
    pub full_scale: bool,
    pub replicates: usize,
    pub models: Vec<String>,
    pub variants: Vec<VariantSpec>,
    pub k_inner: u32,
    pub burn_in: u32,
    pub keep: u32,
    pub master_seed: u64,
    pub hier_params: HierParams,
    pub sv_params: SvParams,
    pub group_count: usize,
    pub group_size: usize,
    pub series_len: usize,
    pub dump_datasets: bool,
}

impl ResolvedStudy {
    fn n_total(&self) -> usize {
        match self.family.data_family() {
            DataFamily::Hierarchical => self.group_count * self.group_size,
            DataFamily::StochasticVolatility => self.series_len,
        }
    }

    pub fn variant_labels(&self) -> Vec<String> {
        self.variants.iter().map(|v| v.label(self.n_total())).collect()
    }

    fn generate(&self, seed: u64) -> Result<Dataset> {
        let mut rng = rand::SeedableRng::seed_from_u64(seed);
        let rng: &mut rand_xoshiro::Xoshiro256PlusPlus = &mut rng;
        generate_dataset(
            self.family.data_family(),
            &self.hier_params,
            &self.sv_params,
            &vec![self.group_size; self.group_count],
            self.series_len,
            rng,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanRow {
    pub variant: String,
    pub model: String,
    pub mean_waic: f64,
    pub se_waic: f64,
    pub mean_lppd: f64,
    pub se_lppd: f64,
    pub mean_pwaic: f64,
    pub se_pwaic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub variant: String,
    /// Share of replicates where the true model attains the minimum WAIC.
    pub proportion: f64,
    /// Binomial standard error sqrt(p(1-p)/R); NaN when R < 2.
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub variant: String,
    pub model: String,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StudyDiagnostics {
    /// Chains with at least one parameter below the ESS threshold.
    pub low_ess_chains: usize,
    /// Total chains run.
    pub chains: usize,
    pub neg_inf_warnings: u64,
    /// Set when more than 2% of replicates failed.
    pub failure_rate_flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub family: StudyFamily,
    pub true_model: String,
    pub full_scale: bool,
    pub master_seed: u64,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub keep: u32,
    pub burn_in: u32,
    pub k_inner: u32,
    pub rows: Vec<MeanRow>,
    pub selection: Vec<SelectionRow>,
    pub replicate_rows: Vec<ReplicateRow>,
    pub failures: Vec<FailureRow>,
    pub diagnostics: StudyDiagnostics,
}

struct ReplicateOutcome {
    /// waic/lppd/pwaic per (variant, model), variant-major.
    cells: Vec<(f64, f64, f64)>,
    low_ess_chains: usize,
    chains: usize,
    neg_inf: u64,
    dataset_text: Option<String>,
}

fn run_replicate(study: &ResolvedStudy, rep: usize, seeds: &[u64]) -> Result<ReplicateOutcome> {
    let dataset = study.generate(seeds[rep])?;
    let nv = study.variants.len();
    let mut cells = vec![(f64::NAN, f64::NAN, f64::NAN); nv * study.models.len()];
    let mut low_ess_chains = 0usize;
    let mut neg_inf = 0u64;
    for (mi, name) in study.models.iter().enumerate() {
        let model = crate::models::lookup(name)?;
        let variants: Vec<WaicVariant> = study
            .variants
            .iter()
            .map(|spec| {
                let partition = spec.build_partition(&dataset)?;
                // A model with no latent nodes has marginal WAIC identical to
                // conditional WAIC, so evaluate it conditionally under the
                // marginal label rather than erroring the whole study.
                let config = match spec.mode {
                    Mode::Marginal if model.has_latents() => {
                        PredictiveConfig::marginal(study.k_inner)?
                    }
                    Mode::Marginal => PredictiveConfig::conditional(),
                    Mode::Conditional => PredictiveConfig::conditional(),
                };
                Ok(WaicVariant::new(spec.label(study.n_total()), partition, config))
            })
            .collect::<Result<Vec<_>>>()?;
        // Chain seeds derive from the replicate's dataset seed, not its
        // index, so a replicate is a pure function of its seed.
        let mcmc = McmcConfig {
            burn_in: study.burn_in,
            keep: study.keep,
            seed: derive_seed(seeds[rep], &[2, mi as u64]),
            ..Default::default()
        };
        let run = run_mcmc_waic_multi(name, &dataset, &variants, &mcmc)?;
        for (vi, result) in run.results.iter().enumerate() {
            let primary = result.primary();
            cells[vi * study.models.len() + mi] = (primary.waic, primary.lppd, primary.p_waic);
        }
        if !run.diagnostics.low_ess.is_empty() {
            low_ess_chains += 1;
        }
        neg_inf += run.diagnostics.neg_inf_warnings;
    }
    Ok(ReplicateOutcome {
        cells,
        low_ess_chains,
        chains: study.models.len(),
        neg_inf,
        dataset_text: study.dump_datasets.then(|| {
            dataset.to_text(&format!("family={} replicate={rep} seed={}", study.family, seeds[rep]))
        }),
    })
}

/// Derived per-replicate dataset seeds, one per replicate.
pub fn replicate_seeds(master_seed: u64, replicates: usize) -> Vec<u64> {
    (0..replicates).map(|r| derive_seed(master_seed, &[1, r as u64])).collect()
}

/// Run the full study described by `config` (desk scale unless `full_scale`),
/// optionally writing each generated dataset into `dataset_dir`.
pub fn run_study_to(
    config: &StudyConfig,
    full_scale: bool,
    dataset_dir: Option<&Path>,
) -> Result<StudyReport> {
    let study = config.resolve(full_scale)?;
    let seeds = replicate_seeds(study.master_seed, study.replicates);
    let outcomes: Vec<(usize, Result<ReplicateOutcome>)> = (0..study.replicates)
        .into_par_iter()
        .map(|rep| (rep, run_replicate(&study, rep, &seeds)))
        .collect();
    aggregate(&study, outcomes, dataset_dir)
}

pub fn run_study(config: &StudyConfig, full_scale: bool) -> Result<StudyReport> {
    run_study_to(config, full_scale, None)
}

fn aggregate(
    study: &ResolvedStudy,
    outcomes: Vec<(usize, Result<ReplicateOutcome>)>,
    dataset_dir: Option<&Path>,
) -> Result<StudyReport> {
    let labels = study.variant_labels();
    let nv = study.variants.len();
    let nm = study.models.len();
    let mut ok: Vec<(usize, ReplicateOutcome)> = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes {
        match outcome {
            Ok(o) => ok.push((rep, o)),
            Err(e) => failures.push(FailureRow { replicate: rep, error: e.to_string() }),
        }
    }
    if ok.is_empty() {
        return Err(Error::Config(format!(
            "every replicate failed; first error: {}",
            failures.first().map(|f| f.error.as_str()).unwrap_or("none")
        )));
    }
    if let Some(dir) = dataset_dir {
        std::fs::create_dir_all(dir)?;
        for (rep, o) in &ok {
            if let Some(text) = &o.dataset_text {
                std::fs::write(dir.join(format!("replicate_{rep:04}.txt")), text)?;
            }
        }
    }
    let used = ok.len();
    let mut replicate_rows = Vec::with_capacity(used * nv * nm);
    for (rep, o) in &ok {
        for vi in 0..nv {
            for mi in 0..nm {
                let (waic, lppd, p_waic) = o.cells[vi * nm + mi];
                replicate_rows.push(ReplicateRow {
                    replicate: *rep,
                    variant: labels[vi].clone(),
                    model: study.models[mi].clone(),
                    waic,
                    lppd,
                    p_waic,
                });
            }
        }
    }

    let mean_se = |values: &[f64]| -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return (mean, f64::NAN);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };

    let mut rows = Vec::with_capacity(nv * nm);
    for vi in 0..nv {
        for mi in 0..nm {
            let waics: Vec<f64> = ok.iter().map(|(_, o)| o.cells[vi * nm + mi].0).collect();
            let lppds: Vec<f64> = ok.iter().map(|(_, o)| o.cells[vi * nm + mi].1).collect();
            let pwaics: Vec<f64> = ok.iter().map(|(_, o)| o.cells[vi * nm + mi].2).collect();
            let (mean_waic, se_waic) = mean_se(&waics);
            let (mean_lppd, se_lppd) = mean_se(&lppds);
            let (mean_pwaic, se_pwaic) = mean_se(&pwaics);
            rows.push(MeanRow {
                variant: labels[vi].clone(),
                model: study.models[mi].clone(),
                mean_waic,
                se_waic,
                mean_lppd,
                se_lppd,
                mean_pwaic,
                se_pwaic,
            });
        }
    }

    let true_model = study.family.true_model();
    let true_idx = study.models.iter().position(|m| m == true_model);
    let mut selection = Vec::with_capacity(nv);
    for vi in 0..nv {
        let (proportion, se) = match true_idx {
            None => (f64::NAN, f64::NAN),
            Some(ti) => {
                let mut correct = 0usize;
                for (_, o) in &ok {
                    // argmin over models; ties keep the first listed model.
                    let mut best = 0usize;
                    for mi in 1..nm {
                        if o.cells[vi * nm + mi].0 < o.cells[vi * nm + best].0 {
                            best = mi;
                        }
                    }
                    if best == ti {
                        correct += 1;
                    }
                }
                let p = correct as f64 / used as f64;
                let se = if used >= 2 { (p * (1.0 - p) / used as f64).sqrt() } else { f64::NAN };
                (p, se)
            }
        };
        selection.push(SelectionRow { variant: labels[vi].clone(), proportion, se });
    }

    let low_ess_chains: usize = ok.iter().map(|(_, o)| o.low_ess_chains).sum();
    let chains: usize = ok.iter().map(|(_, o)| o.chains).sum();
    let neg_inf_warnings: u64 = ok.iter().map(|(_, o)| o.neg_inf).sum();
    let failure_rate_flagged =
        failures.len() as f64 > 0.02 * study.replicates as f64 && !failures.is_empty();
    Ok(StudyReport {
        family: study.family,
        true_model: true_model.to_string(),
        full_scale: study.full_scale,
        master_seed: study.master_seed,
        replicates_requested: study.replicates,
        replicates_used: used,
        keep: study.keep,
        burn_in: study.burn_in,
        k_inner: study.k_inner,
        rows,
        selection,
        replicate_rows,
        failures,
        diagnostics: StudyDiagnostics {
            low_ess_chains,
            chains,
            neg_inf_warnings,
            failure_rate_flagged,
        },
    })
}

/// Feed a dumped h-vector stream through a fresh engine and finalize.
/// The stream's M must match the partition.
pub fn ingest_stream<R: BufRead>(
    reader: R,
    partition: &PartitionSpec,
) -> Result<(WaicState, WaicResult)> {
    let mut stream = StreamReader::new(reader)?;
    if stream.m() != partition.len() {
        return Err(Error::LengthMismatch { expected: partition.len(), got: stream.m() });
    }
    let mut state = WaicState::init_for_stream(partition, stream.mode());
    while let Some(sample) = stream.next_sample() {
        state.update(&sample?)?;
    }
    let result = state.finalize()?;
    Ok((state, result))
}

/// Resume a checkpointed state against a stream that still contains the
/// already-consumed samples: skips them, ingests the rest, finalizes.
pub fn resume_stream<R: BufRead>(
    mut state: WaicState,
    reader: R,
) -> Result<(WaicState, WaicResult)> {
    let mut stream = StreamReader::new(reader)?;
    if stream.m() != state.m() {
        return Err(Error::LengthMismatch { expected: state.m(), got: stream.m() });
    }
    if stream.mode() != state.mode() {
        return Err(Error::Format {
            what: "stream",
            msg: format!("stream mode {} does not match checkpoint {}", stream.mode(), state.mode()),
        });
    }
    stream.skip_samples(state.samples())?;
    while let Some(sample) = stream.next_sample() {
        state.update(&sample?)?;
    }
    let result = state.finalize()?;
    Ok((state, result))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    StructuredText,
    Pretty,
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Render the paper-style tables: means per (variant, model), then selection
/// proportions, then diagnostics.
pub fn render_pretty(report: &StudyReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "study {} ({} scale): {} of {} replicates, keep={}, burn-in={}, K={}, seed={}",
        report.family,
        if report.full_scale { "full" } else { "desk" },
        report.replicates_used,
        report.replicates_requested,
        report.keep,
        report.burn_in,
        report.k_inner,
        report.master_seed,
    );
    let wv = report.rows.iter().map(|r| r.variant.len()).max().unwrap_or(8).max(9);
    let _ = writeln!(
        out,
        "\n{:<wv$}  {:<5} {:>12} {:>12} {:>12}  {:>10} {:>10} {:>10}",
        "WAIC type", "model", "mean(WAIC)", "mean(lppd)", "mean(pWAIC)", "se(WAIC)", "se(lppd)", "se(pWAIC)",
    );
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:<wv$}  {:<5} {:>12.2} {:>12.2} {:>12.2}  {:>10.2} {:>10.2} {:>10.2}",
            row.variant, row.model, row.mean_waic, row.mean_lppd, row.mean_pwaic,
            row.se_waic, row.se_lppd, row.se_pwaic,
        );
    }
    let _ = writeln!(
        out,
        "\n{:<wv$}  {:>22} {:>14}",
        "WAIC type", "proportion correct", "se(proportion)"
    );
    for row in &report.selection {
        let _ = writeln!(
            out,
            "{:<wv$}  {:>22.3} {:>14.3}",
            row.variant, row.proportion, row.se
        );
    }
    let d = &report.diagnostics;
    let _ = writeln!(
        out,
        "\ndiagnostics: {}/{} chains below ESS threshold, {} -inf warnings, {} failed replicates{}",
        d.low_ess_chains,
        d.chains,
        d.neg_inf_warnings,
        report.failures.len(),
        if d.failure_rate_flagged { " [FAILURE RATE > 2%]" } else { "" },
    );
    out
}

/// Write the report in the requested format; returns the files created.
pub fn emit_report(
    report: &StudyReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let mut means = String::from(
                "variant,model,mean_waic,se_waic,mean_lppd,se_lppd,mean_pwaic,se_pwaic\n",
            );
            for r in &report.rows {
                means.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.variant,
                    r.model,
                    fmt_num(r.mean_waic),
                    fmt_num(r.se_waic),
                    fmt_num(r.mean_lppd),
                    fmt_num(r.se_lppd),
                    fmt_num(r.mean_pwaic),
                    fmt_num(r.se_pwaic),
                ));
            }
            let path = dir.join("means.csv");
            std::fs::write(&path, means)?;
            written.push(path);

            let mut sel = String::from("variant,proportion_correct,se\n");
            for r in &report.selection {
                sel.push_str(&format!(
                    "{},{},{}\n",
                    r.variant,
                    fmt_num(r.proportion),
                    fmt_num(r.se)
                ));
            }
            let path = dir.join("selection.csv");
            std::fs::write(&path, sel)?;
            written.push(path);

            let mut reps = String::from("replicate,variant,model,waic,lppd,p_waic\n");
            for r in &report.replicate_rows {
                reps.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.replicate,
                    r.variant,
                    r.model,
                    fmt_num(r.waic),
                    fmt_num(r.lppd),
                    fmt_num(r.p_waic),
                ));
            }
            let path = dir.join("replicates.csv");
            std::fs::write(&path, reps)?;
            written.push(path);
        }
        ReportFormat::StructuredText => {
            let path = dir.join("report.json");
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Format { what: "report", msg: e.to_string() })?;
            text.push('\n');
            std::fs::write(&path, text)?;
            written.push(path);
        }
        ReportFormat::Pretty => {
            let path = dir.join("report.txt");
            std::fs::write(&path, render_pretty(report))?;
            written.push(path);
        }
    }
    Ok(written)
}
