//! Stochastic volatility series and the three models fit to them.
//!
//! Generating process: a stationary AR(1) log-variance path
//! `h_1 ~ N(mu, sigma / sqrt(1 - phi^2))`,
//! `h_t ~ N(mu + phi (h_{t-1} - mu), sigma)`, with observations
//! `y_t ~ N(0, exp(h_t / 2))`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, KernelSpec, ModelGraph};
use crate::models::{DataFamily, Dataset, ModelSpec, SamplerHints};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvParams {
    pub phi: f64,
    pub sigma: f64,
    pub mu: f64,
}

/// An observed series `y[t]`, t = 1..T.
#[derive(Debug, Clone, PartialEq)]
pub struct SvDataset {
    y: Vec<f64>,
}

impl SvDataset {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::Domain("series needs at least two observations".into()));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {v}")));
        }
        Ok(SvDataset { y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn data_node_names(&self) -> Vec<String> {
        (1..=self.y.len()).map(|t| format!("y[{t}]")).collect()
    }

    /// Crude per-point log-variance proxy: `log(y_t^2)` corrected for the
    /// mean of a log chi-square(1), floored to dodge log(0) at y near zero.
    fn log_var_proxy(&self) -> Vec<f64> {
        // E[log chi^2_1] = -1.2704.
        self.y.iter().map(|y| (y * y).max(1e-6).ln() + 1.2704).collect()
    }

    /// Proxy smoothed with two-sided geometric weights. The raw proxy has
    /// log-chi-square noise with sd near 2.2, far rougher than any plausible
    /// volatility path; starting chains from the smooth version keeps early
    /// iterations out of deep likelihood valleys.
    fn smoothed_log_var_proxy(&self) -> Vec<f64> {
        let raw = self.log_var_proxy();
        let t = raw.len() as isize;
        let rho: f64 = 0.85;
        let window = 12isize;
        (0..t)
            .map(|i| {
                let mut num = 0.0;
                let mut den = 0.0;
                for k in -window..=window {
                    let j = i + k;
                    if j < 0 || j >= t {
                        continue;
                    }
                    let w = rho.powi(k.unsigned_abs() as i32);
                    num += w * raw[j as usize];
                    den += w;
                }
                num / den
            })
            .collect()
    }
}

/// Draw a series from the stationary AR(1) stochastic volatility process.
pub fn generate_sv<R: Rng>(params: &SvParams, t: usize, rng: &mut R) -> Result<SvDataset> {
    if params.phi.abs() >= 1.0 {
        return Err(Error::Domain(format!("|phi| must be below 1, got {}", params.phi)));
    }
    if params.sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be positive, got {}", params.sigma)));
    }
    if t < 2 {
        return Err(Error::Domain("series length must be at least 2".into()));
    }
    let mut y = Vec::with_capacity(t);
    let z: f64 = StandardNormal.sample(rng);
    let mut h = params.mu + params.sigma / (1.0 - params.phi * params.phi).sqrt() * z;
    for step in 0..t {
        if step > 0 {
            let z: f64 = StandardNormal.sample(rng);
            h = params.mu + params.phi * (h - params.mu) + params.sigma * z;
        }
        let z: f64 = StandardNormal.sample(rng);
        y.push((0.5 * h).exp() * z);
    }
    SvDataset::new(y)
}

fn sv_data(data: &Dataset, model: &'static str) -> Result<&'static str> {
    match data {
        Dataset::Sv(_) => Ok(model),
        Dataset::Hier(_) => Err(Error::DatasetMismatch { model, expected: "stochastic-volatility" }),
    }
}

const SIGMA_PRIOR_SD: f64 = 5.0;
const MU_PRIOR_SD: f64 = 10.0;

/// Model P: latent AR(1) log-variance path (the true structure).
pub struct SvAr1;

/// Model Z: independent log variances, `h_t ~ N(mu, sigma)` with no AR link.
pub struct SvWhiteNoise;

/// Model I: plain `y_t ~ N(0, sigma)`, no latent structure at all.
pub struct IidNormal;

impl ModelSpec for SvAr1 {
    fn name(&self) -> &'static str {
        "P"
    }

    fn title(&self) -> &'static str {
        "stochastic volatility with AR(1) latent log variance (true structure)"
    }

    fn family(&self) -> DataFamily {
        DataFamily::StochasticVolatility
    }

    fn has_latents(&self) -> bool {
        true
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        sv_data(data, self.name())?;
        let d = data.as_sv().unwrap();
        let mut g = GraphBuilder::new();
        let sigma = g.param("sigma", KernelSpec::half_normal(SIGMA_PRIOR_SD))?;
        let mu = g.param("mu", KernelSpec::normal(0.0, MU_PRIOR_SD))?;
        let phi = g.param("phi", KernelSpec::uniform(-1.0, 1.0))?;
        let mut prev = g.latent("h[1]", KernelSpec::ar_stationary(phi, mu, sigma))?;
        let mut latents = vec![prev];
        for t in 2..=d.len() {
            prev = g.latent(&format!("h[{t}]"), KernelSpec::ar_step(prev, phi, mu, sigma))?;
            latents.push(prev);
        }
        for (t, &v) in d.values().iter().enumerate() {
            g.data(&format!("y[{}]", t + 1), v, KernelSpec::normal_log_var(0.0, latents[t]))?;
        }
        g.build()
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_sv().unwrap();
        let smooth = d.smoothed_log_var_proxy();
        let mu0 = smooth.iter().sum::<f64>() / smooth.len() as f64;
        let mut hints = SamplerHints::default();
        let mut put = |name: &str, init: f64, scale: f64| {
            if let Some(id) = graph.lookup(name) {
                hints.init.push((id, init));
                hints.scales.push((id, scale));
            }
        };
        put("sigma", 0.25, 0.2);
        put("mu", mu0, 0.1);
        // phi proposals run on the atanh scale.
        put("phi", 0.9, 0.15);
        for (t, &lv) in smooth.iter().enumerate() {
            put(&format!("h[{}]", t + 1), lv, 0.4);
        }
        hints
    }
}

impl ModelSpec for SvWhiteNoise {
    fn name(&self) -> &'static str {
        "Z"
    }

    fn title(&self) -> &'static str {
        "stochastic volatility with independent latent log variances"
    }

    fn family(&self) -> DataFamily {
        DataFamily::StochasticVolatility
    }

    fn has_latents(&self) -> bool {
        true
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        sv_data(data, self.name())?;
        let d = data.as_sv().unwrap();
        let mut g = GraphBuilder::new();
        let sigma = g.param("sigma", KernelSpec::half_normal(SIGMA_PRIOR_SD))?;
        let mu = g.param("mu", KernelSpec::normal(0.0, MU_PRIOR_SD))?;
        let mut latents = Vec::with_capacity(d.len());
        for t in 1..=d.len() {
            latents.push(g.latent(&format!("h[{t}]"), KernelSpec::normal(mu, sigma))?);
        }
        for (t, &v) in d.values().iter().enumerate() {
            g.data(&format!("y[{}]", t + 1), v, KernelSpec::normal_log_var(0.0, latents[t]))?;
        }
        g.build()
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_sv().unwrap();
        let smooth = d.smoothed_log_var_proxy();
        let mu0 = smooth.iter().sum::<f64>() / smooth.len() as f64;
        let spread = {
            let var = smooth.iter().map(|v| (v - mu0) * (v - mu0)).sum::<f64>()
                / (smooth.len() as f64 - 1.0);
            var.sqrt().max(0.2)
        };
        let mut hints = SamplerHints::default();
        let mut put = |name: &str, init: f64, scale: f64| {
            if let Some(id) = graph.lookup(name) {
                hints.init.push((id, init));
                hints.scales.push((id, scale));
            }
        };
        put("sigma", spread.min(2.0), 0.15);
        put("mu", mu0, 0.1);
        for (t, &lv) in smooth.iter().enumerate() {
            put(&format!("h[{}]", t + 1), lv, 0.4);
        }
        hints
    }
}

impl ModelSpec for IidNormal {
    fn name(&self) -> &'static str {
        "I"
    }

    fn title(&self) -> &'static str {
        "independent zero-mean normal observations, constant variance"
    }

    fn family(&self) -> DataFamily {
        DataFamily::StochasticVolatility
    }

    fn has_latents(&self) -> bool {
        false
    }

    fn build(&self, data: &Dataset) -> Result<ModelGraph> {
        sv_data(data, self.name())?;
        let d = data.as_sv().unwrap();
        let mut g = GraphBuilder::new();
        let sigma = g.param("sigma", KernelSpec::half_normal(SIGMA_PRIOR_SD))?;
        for (t, &v) in d.values().iter().enumerate() {
            g.data(&format!("y[{}]", t + 1), v, KernelSpec::normal(0.0, sigma))?;
        }
        g.build()
    }

    fn sampler_hints(&self, data: &Dataset, graph: &ModelGraph) -> SamplerHints {
        let d = data.as_sv().unwrap();
        let t = d.len() as f64;
        let sd = (d.values().iter().map(|v| v * v).sum::<f64>() / t).sqrt().max(1e-3);
        let mut hints = SamplerHints::default();
        if let Some(id) = graph.lookup("sigma") {
            hints.init.push((id, sd));
            hints.scales.push((id, 1.0 / (2.0 * t).sqrt()));
        }
        hints
    }
}
