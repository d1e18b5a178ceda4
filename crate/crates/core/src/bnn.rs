//! Single-hidden-layer sigmoid network mapping normalized conditions to
//! Gompertz parameters, and the posterior density over its weights.
//!
//! Weight layout (layer-major): for each hidden unit `j`, the three input
//! weights followed by its bias; then for each output `k` (D, mu, lambda),
//! the `n_hidden` hidden weights followed by its bias. The state vector the
//! sampler moves is the weights with `log_noise_sd` appended.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Features, GrowthDataset};
use crate::error::{invalid, Result};
use crate::growth::GompertzParams;
use crate::mcmc::{self, PosteriorChain, SamplerConfig};

pub const N_INPUTS: usize = 3;
pub const N_OUTPUTS: usize = 3;

/// Default prior on the log observation-noise sd: `N(ln 0.05, 1)`.
pub const DEFAULT_NOISE_LOG_SD_MEAN: f64 = -2.995732273553991;
pub const DEFAULT_NOISE_LOG_SD_SD: f64 = 1.0;

/// Standard deviation of the non-informative weight prior `N(0, 100)`.
pub const NONINFORMATIVE_WEIGHT_SD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkTopology {
    pub n_hidden: usize,
}

impl Default for NetworkTopology {
    fn default() -> Self {
        Self { n_hidden: 3 }
    }
}

impl NetworkTopology {
    pub fn new(n_hidden: usize) -> Result<Self> {
        if n_hidden == 0 {
            return Err(invalid("hidden layer needs at least one unit"));
        }
        Ok(Self { n_hidden })
    }

    pub fn n_weights(&self) -> usize {
        (N_INPUTS + 1) * self.n_hidden + (self.n_hidden + 1) * N_OUTPUTS
    }

    /// Length of the sampled vector: weights plus `log_noise_sd`.
    pub fn n_params(&self) -> usize {
        self.n_weights() + 1
    }

    /// Inverse of [`n_params`](Self::n_params).
    pub fn from_n_params(n: usize) -> Result<Self> {
        let k = N_INPUTS + 1 + N_OUTPUTS;
        if n < N_OUTPUTS + 1 + k || (n - N_OUTPUTS - 1) % k != 0 {
            return Err(invalid(format!("{n} parameters do not match any topology")));
        }
        Self::new((n - N_OUTPUTS - 1) / k)
    }
}

/// One network: a point in weight space plus the noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub weights: Vec<f64>,
    pub log_noise_sd: f64,
}

impl NetworkState {
    pub fn new(topology: NetworkTopology, weights: Vec<f64>, log_noise_sd: f64) -> Result<Self> {
        if weights.len() != topology.n_weights() {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                topology.n_weights(),
                weights.len()
            )));
        }
        if !log_noise_sd.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("network state has non-finite entries"));
        }
        Ok(Self { weights, log_noise_sd })
    }

    pub fn zeros(topology: NetworkTopology) -> Self {
        Self { weights: vec![0.0; topology.n_weights()], log_noise_sd: 0.0 }
    }

    pub fn from_vector(topology: NetworkTopology, v: &[f64]) -> Result<Self> {
        if v.len() != topology.n_params() {
            return Err(invalid(format!("expected {} parameters, got {}", topology.n_params(), v.len())));
        }
        Self::new(topology, v[..v.len() - 1].to_vec(), v[v.len() - 1])
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.log_noise_sd);
        v
    }

    pub fn noise_sd(&self) -> f64 {
        self.log_noise_sd.exp()
    }
}

/// Biological ranges each network output is squashed into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputRanges {
    pub d: (f64, f64),
    pub mu: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for OutputRanges {
    fn default() -> Self {
        Self { d: (0.01, 4.0), mu: (0.01, 2.0), lambda: (0.0, 48.0) }
    }
}

impl OutputRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("d", self.d), ("mu", self.mu), ("lambda", self.lambda)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("{name} range ({lo}, {hi}) must satisfy min < max")));
            }
        }
        if self.d.0 <= crate::growth::MIN_AMPLITUDE || self.mu.0 <= 0.0 || self.lambda.0 < 0.0 {
            return Err(invalid("output ranges must have d.min > 0, mu.min > 0 and lambda.min >= 0"));
        }
        Ok(())
    }

    fn as_array(&self) -> [(f64, f64); 3] {
        [self.d, self.mu, self.lambda]
    }
}

/// Independent Gaussian prior on every weight and on `log_noise_sd`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub weight_means: Vec<f64>,
    pub weight_sds: Vec<f64>,
    pub noise_log_sd_mean: f64,
    pub noise_log_sd_sd: f64,
}

impl PriorSpec {
    /// `N(0, 100)` on every weight.
    pub fn non_informative(topology: NetworkTopology) -> Self {
        let n = topology.n_weights();
        Self {
            weight_means: vec![0.0; n],
            weight_sds: vec![NONINFORMATIVE_WEIGHT_SD; n],
            noise_log_sd_mean: DEFAULT_NOISE_LOG_SD_MEAN,
            noise_log_sd_sd: DEFAULT_NOISE_LOG_SD_SD,
        }
    }

    /// Per-weight means and sds supplied by the user.
    pub fn informative(topology: NetworkTopology, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let prior = Self {
            weight_means: means,
            weight_sds: sds,
            noise_log_sd_mean: DEFAULT_NOISE_LOG_SD_MEAN,
            noise_log_sd_sd: DEFAULT_NOISE_LOG_SD_SD,
        };
        prior.validate(topology)?;
        Ok(prior)
    }

    pub fn validate(&self, topology: NetworkTopology) -> Result<()> {
        let n = topology.n_weights();
        if self.weight_means.len() != n || self.weight_sds.len() != n {
            return Err(invalid(format!(
                "prior has {} means and {} sds but the network has {n} weights",
                self.weight_means.len(),
                self.weight_sds.len()
            )));
        }
        if self.weight_means.iter().any(|m| !m.is_finite()) || !self.noise_log_sd_mean.is_finite() {
            return Err(invalid("prior means must be finite"));
        }
        let positive = |s: &f64| s.is_finite() && *s > 0.0;
        if !self.weight_sds.iter().all(positive) || !positive(&self.noise_log_sd_sd) {
            return Err(invalid("prior sds must be positive and finite"));
        }
        Ok(())
    }

    /// Draws a full parameter vector (weights then `log_noise_sd`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .weight_means
            .iter()
            .zip(&self.weight_sds)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        v.push(self.noise_log_sd_mean + self.noise_log_sd_sd * rng.sample::<f64, _>(StandardNormal));
        v
    }

    fn log_density(&self, v: &[f64]) -> f64 {
        let n = self.weight_means.len();
        let mut acc = 0.0;
        for i in 0..n {
            acc += log_normal_pdf(v[i], self.weight_means[i], self.weight_sds[i]);
        }
        acc + log_normal_pdf(v[n], self.noise_log_sd_mean, self.noise_log_sd_sd)
    }
}

#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Forward pass over a raw weight slice. Inputs are assumed in range.
pub(crate) fn forward_weights(
    topology: NetworkTopology,
    weights: &[f64],
    x: &Features,
    ranges: &OutputRanges,
) -> GompertzParams {
    let h = topology.n_hidden;
    let out_base = (N_INPUTS + 1) * h;
    let mut raw = [0.0; N_OUTPUTS];
    for (k, r) in raw.iter_mut().enumerate() {
        *r = weights[out_base + k * (h + 1) + h];
    }
    for j in 0..h {
        let w = &weights[j * (N_INPUTS + 1)..(j + 1) * (N_INPUTS + 1)];
        let a = w[N_INPUTS] + w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
        let act = sigmoid(a);
        for (k, r) in raw.iter_mut().enumerate() {
            *r += weights[out_base + k * (h + 1) + j] * act;
        }
    }
    let [d, mu, lambda] = {
        let mut p = [0.0; N_OUTPUTS];
        for ((p, r), (lo, hi)) in p.iter_mut().zip(raw).zip(ranges.as_array()) {
            *p = lo + (hi - lo) * sigmoid(r);
        }
        p
    };
    GompertzParams::new_unchecked(d, mu, lambda)
}

fn check_features(x: &Features) -> Result<()> {
    if x.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(invalid(format!("features {x:?} outside the unit cube")))
    }
}

/// Maps normalized conditions to Gompertz parameters.
pub fn forward(
    topology: NetworkTopology,
    state: &NetworkState,
    features: &Features,
    ranges: &OutputRanges,
) -> Result<GompertzParams> {
    check_features(features)?;
    if state.weights.len() != topology.n_weights() {
        return Err(invalid("state does not match topology"));
    }
    Ok(forward_weights(topology, &state.weights, features, ranges))
}

pub fn log_prior(state: &NetworkState, prior: &PriorSpec) -> Result<f64> {
    if state.weights.len() != prior.weight_means.len() || state.weights.len() != prior.weight_sds.len() {
        return Err(invalid(format!(
            "state has {} weights, prior has {}",
            state.weights.len(),
            prior.weight_means.len()
        )));
    }
    Ok(prior.log_density(&state.to_vector()))
}

fn log_likelihood_vec(topology: NetworkTopology, v: &[f64], dataset: &GrowthDataset, ranges: &OutputRanges) -> f64 {
    let n_w = topology.n_weights();
    let log_sd = v[n_w];
    let inv_var = (-2.0 * log_sd).exp();
    let per_point = -0.5 * (2.0 * PI).ln() - log_sd;
    let mut acc = 0.0;
    for g in dataset.groups() {
        let params = forward_weights(topology, &v[..n_w], &g.features, ranges);
        for p in &g.observations {
            let r = p.od - params.eval(p.t, g.n0);
            acc += per_point - 0.5 * r * r * inv_var;
        }
    }
    acc
}

/// Gaussian log-likelihood of every observation under the network's curves.
pub fn log_likelihood(
    topology: NetworkTopology,
    state: &NetworkState,
    dataset: &GrowthDataset,
    ranges: &OutputRanges,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid("log-likelihood needs at least one observation"));
    }
    if state.weights.len() != topology.n_weights() {
        return Err(invalid("state does not match topology"));
    }
    Ok(log_likelihood_vec(topology, &state.to_vector(), dataset, ranges))
}

pub fn log_posterior(
    topology: NetworkTopology,
    state: &NetworkState,
    dataset: &GrowthDataset,
    prior: &PriorSpec,
    ranges: &OutputRanges,
) -> Result<f64> {
    Ok(log_prior(state, prior)? + log_likelihood(topology, state, dataset, ranges)?)
}

/// Validated posterior target over flat parameter vectors.
#[derive(Debug, Clone, Copy)]
pub struct Posterior<'a> {
    topology: NetworkTopology,
    dataset: &'a GrowthDataset,
    prior: &'a PriorSpec,
    ranges: &'a OutputRanges,
}

impl<'a> Posterior<'a> {
    pub fn new(
        topology: NetworkTopology,
        dataset: &'a GrowthDataset,
        prior: &'a PriorSpec,
        ranges: &'a OutputRanges,
    ) -> Result<Self> {
        if dataset.is_empty() {
            return Err(invalid("posterior needs at least one observation"));
        }
        prior.validate(topology)?;
        ranges.validate()?;
        Ok(Self { topology, dataset, prior, ranges })
    }

    /// Unnormalized log posterior of `[weights.., log_noise_sd]`.
    pub fn log_density(&self, v: &[f64]) -> f64 {
        self.prior.log_density(v) + log_likelihood_vec(self.topology, v, self.dataset, self.ranges)
    }

    pub fn topology(&self) -> NetworkTopology {
        self.topology
    }
}

/// Default per-dimension proposal scales: 0.1 per weight, 0.05 for the noise.
pub fn default_proposal_scales(topology: NetworkTopology) -> Vec<f64> {
    let mut s = vec![0.1; topology.n_weights()];
    s.push(0.05);
    s
}

/// Samples the posterior with a single chain started from a prior draw.
///
/// The start is drawn on stream 1 of the chain seed; the chain itself uses
/// stream 0.
pub fn fit_posterior(
    topology: NetworkTopology,
    dataset: &GrowthDataset,
    prior: &PriorSpec,
    ranges: &OutputRanges,
    config: &SamplerConfig,
) -> Result<PosteriorChain> {
    let posterior = Posterior::new(topology, dataset, prior, ranges)?;
    if config.proposal_scales.len() != topology.n_params() {
        return Err(invalid(format!(
            "{} proposal scales for {} parameters",
            config.proposal_scales.len(),
            topology.n_params()
        )));
    }
    let mut init_rng = mcmc::chain_rng(config.seed);
    init_rng.set_stream(1);
    let init = prior.sample(&mut init_rng);
    mcmc::run_chain(&init, |v| posterior.log_density(v), config)
}
