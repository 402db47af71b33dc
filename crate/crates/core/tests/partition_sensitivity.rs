//! Partition sensitivity of the marginal predictive density.
//!
//! Two models that are indistinguishable under ungrouped marginal evaluation
//! — a shared random effect per group versus a fresh random effect per
//! observation — separate cleanly once the partition groups observations
//! jointly. Closed forms for both sides make the comparison exact up to
//! Monte Carlo error.

use owaic::graph::{Assignment, GraphBuilder, KernelSpec, ModelGraph, NodeId, LN_2PI};
use owaic::partition::build_partition;
use owaic::predictive::{marginal_h, PredictiveConfig};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

const MU: f64 = 2.0;
const TAU: f64 = 0.5;
const SIGMA: f64 = 1.0;
const GROUP: [f64; 4] = [1.4, 2.9, 2.2, 0.7];

/// Shared random effect: one b for the whole group.
fn shared_effect_graph() -> (ModelGraph, [NodeId; 3]) {
    let mut g = GraphBuilder::new();
    let mu = g.param("mu", KernelSpec::normal(0.0, 100.0)).unwrap();
    let sigma = g.param("sigma", KernelSpec::half_normal(10.0)).unwrap();
    let tau = g.param("tau", KernelSpec::half_normal(10.0)).unwrap();
    let b = g.latent("b[1]", KernelSpec::normal(mu, tau)).unwrap();
    for (i, &y) in GROUP.iter().enumerate() {
        g.data(&format!("y[1,{}]", i + 1), y, KernelSpec::normal(b, sigma)).unwrap();
    }
    (g.build().unwrap(), [mu, sigma, tau])
}

/// Fresh random effect per observation.
fn per_point_effect_graph() -> (ModelGraph, [NodeId; 3]) {
    let mut g = GraphBuilder::new();
    let mu = g.param("mu", KernelSpec::normal(0.0, 100.0)).unwrap();
    let sigma = g.param("sigma", KernelSpec::half_normal(10.0)).unwrap();
    let tau = g.param("tau", KernelSpec::half_normal(10.0)).unwrap();
    for (i, &y) in GROUP.iter().enumerate() {
        let b = g.latent(&format!("b[1,{}]", i + 1), KernelSpec::normal(mu, tau)).unwrap();
        g.data(&format!("y[1,{}]", i + 1), y, KernelSpec::normal(b, sigma)).unwrap();
    }
    (g.build().unwrap(), [mu, sigma, tau])
}

fn assign(graph: &ModelGraph, ids: [NodeId; 3]) -> Assignment {
    let mut asg = graph.assignment();
    asg.set(ids[0], MU);
    asg.set(ids[1], SIGMA);
    asg.set(ids[2], TAU);
    asg
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Integrating the shared effect out of a point leaves N(mu, sqrt(s^2+t^2)).
fn pointwise_closed_form(y: f64) -> f64 {
    log_normal_pdf(y, MU, (SIGMA * SIGMA + TAU * TAU).sqrt())
}

/// Joint density of the group under the shared effect: an equicorrelated
/// multivariate normal, evaluated via Sherman-Morrison.
fn shared_group_closed_form() -> f64 {
    let n = GROUP.len() as f64;
    let s2 = SIGMA * SIGMA;
    let t2 = TAU * TAU;
    let d: Vec<f64> = GROUP.iter().map(|y| y - MU).collect();
    let sum: f64 = d.iter().sum();
    let sq: f64 = d.iter().map(|v| v * v).sum();
    let quad = (sq - t2 / (s2 + n * t2) * sum * sum) / s2;
    let logdet = (n - 1.0) * s2.ln() + (s2 + n * t2).ln();
    -0.5 * n * LN_2PI - 0.5 * logdet - 0.5 * quad
}

/// Delta-method Monte Carlo standard error for log-mean-exp of the shared
/// group density: var(w)/ (K mean(w)^2) estimated by simulation.
fn group_se(k: u32, reps: u32, seed: u64) -> f64 {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (graph, ids) = shared_effect_graph();
    let asg = assign(&graph, ids);
    let names = graph.data_node_names();
    let part = graph
        .resolve_partition(&build_partition(&names, Some(&[names.clone()])).unwrap())
        .unwrap();
    let cfg = PredictiveConfig::marginal(k).unwrap();
    let draws: Vec<f64> = (0..reps)
        .map(|_| marginal_h(&graph, &part, &asg, &cfg, &mut rng).unwrap().by_fraction[3][0])
        .collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    (draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (reps as f64 - 1.0)).sqrt()
}

#[test]
fn ungrouped_marginals_coincide_across_latent_structures() {
    let k = 40_000u32;
    let cfg = PredictiveConfig::marginal(k).unwrap();

    let (shared, ids) = shared_effect_graph();
    let names = shared.data_node_names();
    let singles = shared.resolve_partition(&build_partition(&names, None).unwrap()).unwrap();
    let asg = assign(&shared, ids);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let h_shared = marginal_h(&shared, &singles, &asg, &cfg, &mut rng).unwrap();

    let (perpt, ids) = per_point_effect_graph();
    let names = perpt.data_node_names();
    let singles = perpt.resolve_partition(&build_partition(&names, None).unwrap()).unwrap();
    let asg = assign(&perpt, ids);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
    let h_perpt = marginal_h(&perpt, &singles, &asg, &cfg, &mut rng).unwrap();

    // Both reduce to the same single-point mixture density.
    for (i, &y) in GROUP.iter().enumerate() {
        let closed = pointwise_closed_form(y);
        for got in [h_shared.by_fraction[3][i], h_perpt.by_fraction[3][i]] {
            assert!(
                (got - closed).abs() < 0.02,
                "point {i}: {got} vs closed form {closed}"
            );
        }
    }
}

#[test]
fn grouped_marginals_separate_the_latent_structures() {
    let k = 40_000u32;
    let cfg = PredictiveConfig::marginal(k).unwrap();

    // Shared effect, whole group as one element: equicorrelated MVN.
    let (shared, ids) = shared_effect_graph();
    let names = shared.data_node_names();
    let one_group = shared
        .resolve_partition(&build_partition(&names, Some(&[names.clone()])).unwrap())
        .unwrap();
    let asg = assign(&shared, ids);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
    let h_shared = marginal_h(&shared, &one_group, &asg, &cfg, &mut rng).unwrap().by_fraction[3][0];
    let shared_closed = shared_group_closed_form();
    let se = group_se(k, 24, 77);
    assert!(
        (h_shared - shared_closed).abs() < 4.0 * se + 1e-6,
        "shared-effect group: {h_shared} vs {shared_closed} (se {se})"
    );

    // Per-point effects, same grouping: the joint density factorizes into
    // independent mixtures.
    let (perpt, ids) = per_point_effect_graph();
    let names = perpt.data_node_names();
    let one_group = perpt
        .resolve_partition(&build_partition(&names, Some(&[names.clone()])).unwrap())
        .unwrap();
    let asg = assign(&perpt, ids);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(22);
    let h_perpt = marginal_h(&perpt, &one_group, &asg, &cfg, &mut rng).unwrap().by_fraction[3][0];
    let perpt_closed: f64 = GROUP.iter().map(|&y| pointwise_closed_form(y)).sum();
    assert!(
        (h_perpt - perpt_closed).abs() < 0.05,
        "per-point group: {h_perpt} vs {perpt_closed}"
    );

    // The partition now tells the structures apart by far more than the
    // Monte Carlo noise.
    let gap = (shared_closed - perpt_closed).abs();
    assert!(
        gap > 20.0 * se,
        "closed forms too close to discriminate: gap {gap}, se {se}"
    );
}
