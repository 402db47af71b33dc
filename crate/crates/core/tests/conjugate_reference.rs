//! End-to-end pipeline check against an exactly solvable posterior.
//!
//! With fixed hyperparameters the group means have normal posteriors, so the
//! per-group lppd and p_WAIC reduce to one-dimensional integrals evaluated by
//! quadrature. Both the engine fed with exact iid posterior draws and the
//! full adaptive chain must land on those values.

use owaic::engine::{HVector, WaicState};
use owaic::graph::{GraphBuilder, KernelSpec, ModelGraph, NodeId};
use owaic::mcmc::{run_graph_waic_multi, McmcConfig, WaicVariant};
use owaic::models::{generate_hier, HierParams, SamplerHints};
use owaic::partition::{build_partition, PartitionSpec};
use owaic::predictive::{conditional_h, PredictiveConfig};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

const MU0: f64 = 2.0;
const TAU0: f64 = 0.5;
const SIGMA0: f64 = 1.0;

struct Setup {
    graph: ModelGraph,
    part: PartitionSpec,
    latents: Vec<NodeId>,
    groups: Vec<Vec<f64>>,
    post_means: Vec<f64>,
    post_sd: f64,
}

fn setup() -> Setup {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let data = generate_hier(
        &HierParams { mu: MU0, tau: TAU0, sigma: SIGMA0 },
        &[50, 50, 50],
        &mut rng,
    )
    .unwrap();
    let mut g = GraphBuilder::new();
    let mut latents = Vec::new();
    for j in 0..data.group_count() {
        latents.push(g.latent(&format!("b[{}]", j + 1), KernelSpec::normal(MU0, TAU0)).unwrap());
    }
    for (j, group) in data.groups().iter().enumerate() {
        for (i, &v) in group.iter().enumerate() {
            g.data(&format!("y[{},{}]", j + 1, i + 1), v, KernelSpec::normal(latents[j], SIGMA0))
                .unwrap();
        }
    }
    let graph = g.build().unwrap();
    let part =
        build_partition(&graph.data_node_names(), Some(&data.grouped_partition())).unwrap();
    let n = 50.0;
    let prec = n / (SIGMA0 * SIGMA0) + 1.0 / (TAU0 * TAU0);
    let post_means = data
        .groups()
        .iter()
        .map(|grp| (grp.iter().sum::<f64>() / (SIGMA0 * SIGMA0) + MU0 / (TAU0 * TAU0)) / prec)
        .collect();
    Setup {
        graph,
        part,
        latents,
        groups: data.groups().to_vec(),
        post_means,
        post_sd: prec.sqrt().recip(),
    }
}

fn group_log_density(group: &[f64], b: f64) -> f64 {
    group
        .iter()
        .map(|y| {
            let z = (y - b) / SIGMA0;
            -0.5 * (2.0 * std::f64::consts::PI).ln() - SIGMA0.ln() - 0.5 * z * z
        })
        .sum()
}

/// Trapezoid quadrature of `f` against the exact posterior of one group mean.
fn posterior_quad(f: &dyn Fn(f64) -> f64, mean: f64, sd: f64) -> f64 {
    let steps = 24_000;
    let lo = mean - 10.0 * sd;
    let dx = 20.0 * sd / steps as f64;
    let mut total = 0.0;
    for i in 0..=steps {
        let x = lo + i as f64 * dx;
        let z = (x - mean) / sd;
        let w = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let edge = if i == 0 || i == steps { 0.5 } else { 1.0 };
        total += edge * w * f(x) * dx;
    }
    total
}

fn quadrature_truth(s: &Setup) -> (f64, f64) {
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for (j, group) in s.groups.iter().enumerate() {
        let m = s.post_means[j];
        let e_exp = posterior_quad(&|b| group_log_density(group, b).exp(), m, s.post_sd);
        let e_h = posterior_quad(&|b| group_log_density(group, b), m, s.post_sd);
        let e_h2 = posterior_quad(&|b| group_log_density(group, b).powi(2), m, s.post_sd);
        lppd += e_exp.ln();
        p_waic += e_h2 - e_h * e_h;
    }
    (lppd, p_waic)
}

#[test]
fn engine_matches_quadrature_on_exact_posterior_draws() {
    let s = setup();
    let (lppd_exact, p_waic_exact) = quadrature_truth(&s);
    let resolved = s.graph.resolve_partition(&s.part).unwrap();
    let mut engine = WaicState::init(&s.part, &PredictiveConfig::conditional());
    let mut asg = s.graph.assignment();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(31);
    let keep = 150_000;
    for _ in 0..keep {
        for (j, &b) in s.latents.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            asg.set(b, s.post_means[j] + s.post_sd * z);
        }
        let h = conditional_h(&s.graph, &resolved, &asg).unwrap();
        engine.update(&HVector::conditional(h)).unwrap();
    }
    let got = engine.finalize().unwrap();
    assert!(
        (got.primary().lppd - lppd_exact).abs() < 0.02,
        "lppd {} vs quadrature {lppd_exact}",
        got.primary().lppd
    );
    assert!(
        (got.primary().p_waic - p_waic_exact).abs() < 0.03,
        "p_waic {} vs quadrature {p_waic_exact}",
        got.primary().p_waic
    );
}

#[test]
fn adaptive_chain_matches_quadrature() {
    let s = setup();
    let (lppd_exact, p_waic_exact) = quadrature_truth(&s);
    let mcmc = McmcConfig { burn_in: 2000, keep: 120_000, seed: 5, ..Default::default() };
    let run = run_graph_waic_multi(
        &s.graph,
        &SamplerHints::default(),
        &[WaicVariant::new("grouped", s.part.clone(), PredictiveConfig::conditional())],
        &mcmc,
    )
    .unwrap();
    let got = run.results[0].primary();
    assert!(
        (got.lppd - lppd_exact).abs() < 0.05,
        "lppd {} vs quadrature {lppd_exact}",
        got.lppd
    );
    assert!(
        (got.p_waic - p_waic_exact).abs() < 0.08,
        "p_waic {} vs quadrature {p_waic_exact}",
        got.p_waic
    );
}
