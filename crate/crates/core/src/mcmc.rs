//! Random Walk Metropolis over real vectors.
//!
//! Proposals are independent Gaussian steps per dimension. During burn-in
//! the step sizes may be rescaled every [`ADAPT_WINDOW`] iterations toward an
//! acceptance rate in [`TARGET_ACCEPTANCE`]; they are frozen once sampling
//! starts, so the retained phase is a plain Metropolis chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Acceptance band the burn-in adaptation steers toward.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.2, 0.5);

/// Burn-in iterations between scale updates.
pub const ADAPT_WINDOW: usize = 100;

/// The generator used for every chain.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    pub proposal_scales: Vec<f64>,
    pub seed: u64,
    pub adapt_during_burn_in: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        if self.iterations < self.thin {
            return Err(invalid(format!(
                "iterations ({}) must be at least thin ({})",
                self.iterations, self.thin
            )));
        }
        if self.iterations % self.thin != 0 {
            return Err(invalid(format!(
                "iterations ({}) must be a multiple of thin ({})",
                self.iterations, self.thin
            )));
        }
        if self.proposal_scales.is_empty() {
            return Err(invalid("proposal scales are empty"));
        }
        if let Some(s) = self.proposal_scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!("proposal scale {s} must be positive and finite")));
        }
        Ok(())
    }

    /// Number of samples a chain with this schedule retains.
    pub fn retained(&self) -> usize {
        self.iterations / self.thin
    }
}

/// Thinned post-burn-in samples of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub samples: Vec<Vec<f64>>,
    pub log_densities: Vec<f64>,
    /// Fraction of accepted proposals over the sampling phase.
    pub acceptance_rate: f64,
    pub config: SamplerConfig,
    /// Proposal scales in force during sampling (after any burn-in adaptation).
    pub final_scales: Vec<f64>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }
}

/// Outcome of one Metropolis step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub log_density: f64,
    pub accepted: bool,
}

/// One Random Walk Metropolis step.
///
/// Draw order: one standard normal per dimension, then one uniform.
pub fn rwm_step<F, R>(
    current: &[f64],
    current_logp: f64,
    target: F,
    scales: &[f64],
    rng: &mut R,
) -> Result<Step>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut state = current.to_vec();
    let mut logp = current_logp;
    let mut buf = vec![0.0; current.len()];
    let accepted = step_in_place(&mut state, &mut logp, &mut buf, &target, scales, rng)?;
    Ok(Step { state, log_density: logp, accepted })
}

fn step_in_place<F, R>(
    state: &mut [f64],
    logp: &mut f64,
    proposal: &mut [f64],
    target: &F,
    scales: &[f64],
    rng: &mut R,
) -> Result<bool>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    debug_assert_eq!(state.len(), scales.len());
    for ((p, &x), &s) in proposal.iter_mut().zip(state.iter()).zip(scales) {
        let z: f64 = rng.sample(StandardNormal);
        *p = x + s * z;
    }
    let proposed = target(proposal);
    if proposed.is_nan() {
        return Err(Error::Sampler {
            message: "target density returned NaN".into(),
            state: proposal.to_vec(),
        });
    }
    let u: f64 = rng.random();
    let log_ratio = proposed - *logp;
    if u < log_ratio.exp() {
        state.copy_from_slice(proposal);
        *logp = proposed;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Accept/propose counts over an adaptation window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceWindow {
    pub accepted: usize,
    pub proposed: usize,
}

impl AcceptanceWindow {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Multiplicative step-size update.
///
/// Below the band the factor falls linearly from 1 to 0.5 at zero
/// acceptance; above it, it rises linearly to 2 at full acceptance.
pub fn adapt_scales(window: AcceptanceWindow, scales: &[f64]) -> Vec<f64> {
    let rate = window.rate();
    let (lo, hi) = TARGET_ACCEPTANCE;
    let factor = if rate < lo {
        0.5 + 0.5 * rate / lo
    } else if rate > hi {
        1.0 + (rate - hi) / (1.0 - hi)
    } else {
        1.0
    };
    scales.iter().map(|s| s * factor).collect()
}

/// Runs a single chain: `burn_in` discarded steps, then `iterations` steps
/// keeping iterations `thin, 2*thin, ..., iterations`.
pub fn run_chain<F>(init: &[f64], target: F, config: &SamplerConfig) -> Result<PosteriorChain>
where
    F: Fn(&[f64]) -> f64,
{
    config.validate()?;
    if init.len() != config.proposal_scales.len() {
        return Err(invalid(format!(
            "initial state has {} dimensions but {} proposal scales were given",
            init.len(),
            config.proposal_scales.len()
        )));
    }
    let mut logp = target(init);
    if !logp.is_finite() {
        return Err(invalid(format!("target is not finite ({logp}) at the initial state")));
    }

    let mut rng = chain_rng(config.seed);
    let mut state = init.to_vec();
    let mut proposal = vec![0.0; init.len()];
    let mut scales = config.proposal_scales.clone();

    let mut window = AcceptanceWindow::default();
    for _ in 0..config.burn_in {
        let accepted = step_in_place(&mut state, &mut logp, &mut proposal, &target, &scales, &mut rng)?;
        if config.adapt_during_burn_in {
            window.proposed += 1;
            window.accepted += accepted as usize;
            if window.proposed == ADAPT_WINDOW {
                scales = adapt_scales(window, &scales);
                window = AcceptanceWindow::default();
            }
        }
    }

    let n = config.retained();
    let mut samples = Vec::with_capacity(n);
    let mut log_densities = Vec::with_capacity(n);
    let mut accepted_total = 0usize;
    for i in 1..=config.iterations {
        if step_in_place(&mut state, &mut logp, &mut proposal, &target, &scales, &mut rng)? {
            accepted_total += 1;
        }
        if i % config.thin == 0 {
            samples.push(state.clone());
            log_densities.push(logp);
        }
    }

    Ok(PosteriorChain {
        samples,
        log_densities,
        acceptance_rate: accepted_total as f64 / config.iterations as f64,
        config: config.clone(),
        final_scales: scales,
    })
}
