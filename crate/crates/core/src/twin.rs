//! Closed sense/model/predict/act loop against a synthetic plant.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error as ThisError;

use crate::bnn::{fit_posterior, forward_weights, NetworkState, NetworkTopology, OutputRanges, PriorSpec};
use crate::dataset::{normalize_with, Conditions, GroupKeyMode, GrowthDataset, NormalizationBounds, RawRecord};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{posterior_params, predictive_curve};
use crate::fmt17;
use crate::growth::GompertzParams;
use crate::mcmc::{PosteriorChain, SamplerConfig};

/// Temperature probe resolution (12-bit conversion).
pub const SENSOR_RESOLUTION_C: f64 = 0.0625;
pub const SENSOR_RANGE_C: (f64, f64) = (-10.0, 85.0);
pub const DEFAULT_BURST_MODULATION_HZ: f64 = 150.0;

/// Admissible carrier frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    pub min_hz: f64,
    pub max_hz: f64,
}

impl Default for FrequencyBand {
    fn default() -> Self {
        Self { min_hz: 20_000.0, max_hz: 50_000.0 }
    }
}

/// Ultrasonic drive settings. Admissibility is checked at construction.
///
/// The burst modulation rate is carried as metadata; the plant response
/// does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorSetting {
    frequency_hz: f64,
    duty_cycle: f64,
    burst_modulation_hz: f64,
}

impl ActuatorSetting {
    pub fn new(frequency_hz: f64, duty_cycle: f64, burst_modulation_hz: f64, band: FrequencyBand) -> Result<Self> {
        if !(frequency_hz >= band.min_hz && frequency_hz <= band.max_hz) {
            return Err(invalid(format!(
                "frequency {frequency_hz} Hz outside admissible band [{}, {}]",
                band.min_hz, band.max_hz
            )));
        }
        if !(0.0..=1.0).contains(&duty_cycle) {
            return Err(invalid(format!("duty cycle {duty_cycle} outside [0, 1]")));
        }
        if !(burst_modulation_hz > 0.0 && burst_modulation_hz < frequency_hz) {
            return Err(invalid(format!(
                "burst modulation {burst_modulation_hz} Hz must be positive and below the carrier {frequency_hz} Hz"
            )));
        }
        Ok(Self { frequency_hz, duty_cycle, burst_modulation_hz })
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn duty_cycle(&self) -> f64 {
        self.duty_cycle
    }

    pub fn burst_modulation_hz(&self) -> f64 {
        self.burst_modulation_hz
    }

    pub fn conditions(&self, temperature_c: f64) -> Conditions {
        Conditions { temperature_c, frequency_hz: self.frequency_hz, duty_cycle: self.duty_cycle }
    }
}

/// Full frequency x duty grid, frequency-major.
pub fn candidate_grid(frequencies_hz: &[f64], duty_cycles: &[f64], burst_hz: f64, band: FrequencyBand) -> Result<Vec<ActuatorSetting>> {
    let mut out = Vec::with_capacity(frequencies_hz.len() * duty_cycles.len());
    for &f in frequencies_hz {
        for &d in duty_cycles {
            out.push(ActuatorSetting::new(f, d, burst_hz, band)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub temperature_c: f64,
    pub timestamp_h: f64,
}

/// Quantizes to the nearest multiple of 0.0625 degC, ties to even multiples.
pub fn sense_temperature(true_temp_c: f64, timestamp_h: f64) -> Result<SensorReading> {
    let (lo, hi) = SENSOR_RANGE_C;
    if !(true_temp_c >= lo && true_temp_c <= hi) {
        return Err(Error::Sensor(format!("temperature {true_temp_c} degC outside probe range [{lo}, {hi}]")));
    }
    let steps = (true_temp_c / SENSOR_RESOLUTION_C).round_ties_even();
    Ok(SensorReading { temperature_c: steps * SENSOR_RESOLUTION_C, timestamp_h })
}

/// Hidden ground truth of the simulated fermenter.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub topology: NetworkTopology,
    pub true_network: NetworkState,
    pub ranges: OutputRanges,
    /// Bounds the true network normalizes conditions with.
    pub bounds: NormalizationBounds,
    pub observation_noise_sd: f64,
    /// Temperature rise per unit of relative growth, degC.
    pub temperature_drift: f64,
    pub ambient_temperature_c: f64,
    pub n0: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PlantState {
    config: PlantConfig,
}

impl PlantState {
    pub fn new(config: PlantConfig) -> Result<Self> {
        if !(config.observation_noise_sd >= 0.0) || !(config.temperature_drift >= 0.0) {
            return Err(invalid("plant noise sd and temperature drift must be non-negative"));
        }
        if config.true_network.weights.len() != config.topology.n_weights() {
            return Err(invalid("plant network does not match its topology"));
        }
        if !(config.n0 >= 0.0) {
            return Err(invalid("plant n0 must be non-negative"));
        }
        config.ranges.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn true_params(&self, setting: &ActuatorSetting, temperature_c: f64) -> GompertzParams {
        let (x, _) = self.config.bounds.apply(&setting.conditions(temperature_c));
        forward_weights(self.config.topology, &self.config.true_network.weights, &x, &self.config.ranges)
    }

    /// Ambient plus `drift * (od - n0) / D` on the noiseless curve.
    pub fn temperature_at(&self, setting: &ActuatorSetting, t: f64) -> f64 {
        let c = &self.config;
        if c.temperature_drift == 0.0 {
            return c.ambient_temperature_c;
        }
        let p = self.true_params(setting, c.ambient_temperature_c);
        c.ambient_temperature_c + c.temperature_drift * (p.eval(t, c.n0) - c.n0) / p.d()
    }

    /// Noiseless OD of the true curve under `setting` at time `t`.
    pub fn true_od(&self, setting: &ActuatorSetting, t: f64) -> f64 {
        let temp = self.temperature_at(setting, t);
        self.true_params(setting, temp).eval(t, self.config.n0)
    }

    /// Brute-force best candidate under the hidden network.
    pub fn oracle_select(
        &self,
        candidates: &[ActuatorSetting],
        temperature_c: f64,
        horizon_t: f64,
        objective: Objective,
    ) -> Result<usize> {
        if candidates.is_empty() {
            return Err(invalid("no candidate settings"));
        }
        let scores: Vec<f64> = candidates
            .iter()
            .map(|s| objective.score(&self.true_params(s, temperature_c), self.config.n0, horizon_t))
            .collect();
        Ok(select_best(&scores))
    }
}

/// Observed OD: true curve plus Gaussian noise, floored at zero.
///
/// The noise draw depends only on the plant seed and `t`.
pub fn plant_observe(plant: &PlantState, setting: &ActuatorSetting, t: f64) -> f64 {
    let c = &plant.config;
    let mean = plant.true_od(setting, t);
    if c.observation_noise_sd == 0.0 {
        return mean.max(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(t.to_bits());
    let z: f64 = rng.sample(StandardNormal);
    (mean + c.observation_noise_sd * z).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Maximize predicted OD at the horizon time.
    MaxDensityAtHorizon,
    /// Minimize the predicted time to reach `target_od`.
    MinTimeToTarget { target_od: f64 },
}

impl Objective {
    /// Larger is better.
    pub fn score(&self, params: &GompertzParams, n0: f64, horizon_t: f64) -> f64 {
        match *self {
            Objective::MaxDensityAtHorizon => params.eval(horizon_t, n0),
            Objective::MinTimeToTarget { target_od } => match params.time_to_reach(n0, target_od) {
                Some(t) => -t,
                None => f64::NEG_INFINITY,
            },
        }
    }
}

/// Index of the largest score; the earliest candidate wins ties.
pub fn select_best(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// A chain together with what is needed to query it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub topology: NetworkTopology,
    pub ranges: OutputRanges,
    pub normalization: NormalizationBounds,
    pub chain: PosteriorChain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub setting: ActuatorSetting,
    pub scores: Vec<f64>,
}

/// Scores every candidate with the posterior-averaged parameters and
/// returns the best one.
pub fn act_select(
    model: &FittedModel,
    candidates: &[ActuatorSetting],
    current_temp_c: f64,
    n0: f64,
    horizon_t: f64,
    objective: Objective,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(invalid("no candidate settings"));
    }
    let scores = candidates
        .iter()
        .map(|s| {
            let (x, _) = model.normalization.apply(&s.conditions(current_temp_c));
            let p = posterior_params(model.topology, &model.chain, &x, &model.ranges)?;
            Ok(objective.score(&p, n0, horizon_t))
        })
        .collect::<Result<Vec<f64>>>()?;
    let index = select_best(&scores);
    Ok(Selection { index, setting: candidates[index], scores })
}

/// Rolling training set plus the current posterior.
#[derive(Debug, Clone)]
pub struct TwinModel {
    pub topology: NetworkTopology,
    pub ranges: OutputRanges,
    pub prior: PriorSpec,
    pub sampler: SamplerConfig,
    pub key_mode: GroupKeyMode,
    pub records: Vec<RawRecord>,
    dataset: GrowthDataset,
    chain: PosteriorChain,
    generation: u64,
}

impl TwinModel {
    /// Fits the initial posterior on `records` with `sampler.seed`.
    pub fn fit(
        records: Vec<RawRecord>,
        topology: NetworkTopology,
        prior: PriorSpec,
        ranges: OutputRanges,
        sampler: SamplerConfig,
        key_mode: GroupKeyMode,
    ) -> Result<Self> {
        let dataset = normalize_with(&records, key_mode)?;
        let chain = fit_posterior(topology, &dataset, &prior, &ranges, &sampler)?;
        Ok(Self { topology, ranges, prior, sampler, key_mode, records, dataset, chain, generation: 0 })
    }

    /// Wraps an existing chain fitted on `records`.
    pub fn from_chain(
        records: Vec<RawRecord>,
        chain: PosteriorChain,
        topology: NetworkTopology,
        prior: PriorSpec,
        ranges: OutputRanges,
        sampler: SamplerConfig,
        key_mode: GroupKeyMode,
    ) -> Result<Self> {
        let dataset = normalize_with(&records, key_mode)?;
        if chain.dim() != topology.n_params() {
            return Err(invalid("chain does not match topology"));
        }
        Ok(Self { topology, ranges, prior, sampler, key_mode, records, dataset, chain, generation: 0 })
    }

    /// Re-normalizes the accumulated records and re-samples. Generation `g`
    /// uses seed `sampler.seed + g`.
    pub fn refit(&mut self) -> Result<()> {
        let generation = self.generation + 1;
        let dataset = normalize_with(&self.records, self.key_mode)?;
        let cfg = SamplerConfig { seed: self.sampler.seed.wrapping_add(generation), ..self.sampler.clone() };
        self.chain = fit_posterior(self.topology, &dataset, &self.prior, &self.ranges, &cfg)?;
        self.dataset = dataset;
        self.generation = generation;
        Ok(())
    }

    pub fn chain(&self) -> &PosteriorChain {
        &self.chain
    }

    pub fn dataset(&self) -> &GrowthDataset {
        &self.dataset
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn fitted(&self) -> FittedModel {
        FittedModel {
            topology: self.topology,
            ranges: self.ranges,
            normalization: *self.dataset.normalization(),
            chain: self.chain.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSchedule {
    pub step_h: f64,
    pub total_h: f64,
    /// Refit after every this many steps; `None` never refits.
    pub refit_every: Option<usize>,
    /// Look-ahead for the max-density objective, hours.
    pub horizon_h: f64,
    pub objective: Objective,
    /// Quantiles of the logged predictive band.
    pub band: (f64, f64),
}

impl LoopSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.total_h > 0.0 && self.step_h.is_finite() && self.total_h.is_finite()) {
            return Err(invalid("loop step and total duration must be positive"));
        }
        if self.step_h >= self.total_h {
            return Err(invalid(format!("step {} h must be shorter than total {} h", self.step_h, self.total_h)));
        }
        if self.refit_every == Some(0) {
            return Err(invalid("refit_every must be at least 1"));
        }
        if !(self.horizon_h >= 0.0) {
            return Err(invalid("horizon must be non-negative"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.total_h / self.step_h + 1e-9).floor() as usize
    }
}

/// One loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinEntry {
    pub t: f64,
    pub sensed: SensorReading,
    /// Setting in force while the culture grew up to `t`.
    pub applied: ActuatorSetting,
    pub od_observed: f64,
    /// Setting selected at `t` and applied until the next step.
    pub chosen: ActuatorSetting,
    pub chosen_index: usize,
    /// Brute-force best candidate under the hidden network at `t`.
    pub oracle_index: usize,
    /// Predictive mean and band at the next step under `chosen`.
    pub od_predicted_mean: f64,
    pub od_predicted_lo: f64,
    pub od_predicted_hi: f64,
    pub model_generation: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwinLog {
    pub entries: Vec<TwinEntry>,
}

pub const TWIN_LOG_HEADER: &str = "t_h,temp_c_sensed,freq_hz,duty,od_observed,od_predicted_mean,od_predicted_lo,od_predicted_hi";

impl TwinEntry {
    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.sensed.temperature_c,
            self.chosen.frequency_hz(),
            self.chosen.duty_cycle(),
            self.od_observed,
            self.od_predicted_mean,
            self.od_predicted_lo,
            self.od_predicted_hi,
        ]
        .iter()
        .map(|&v| fmt17(v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

impl TwinLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TWIN_LOG_HEADER}")?;
        for e in &self.entries {
            writeln!(w, "{}", e.csv_row())?;
        }
        Ok(())
    }
}

/// The loop stopped early; `partial` holds every completed step.
#[derive(Debug, ThisError)]
#[error("twin loop aborted after {} steps: {source}", partial.entries.len())]
pub struct LoopAborted {
    pub partial: TwinLog,
    #[source]
    pub source: Error,
}

/// Runs the loop for `schedule.n_steps()` steps.
///
/// Before the first step a setting is chosen at `t = 0`. At step `k`
/// (`t = k * step_h`) the loop senses the temperature, observes the plant
/// under the setting applied since the previous step, appends that
/// observation to the model's records, refits when due, selects the next
/// setting and logs the step. Rows are streamed to `sink` as they complete,
/// so an aborted run leaves its partial log there.
pub fn run_twin_loop<W: Write>(
    plant: &PlantState,
    model: &mut TwinModel,
    candidates: &[ActuatorSetting],
    schedule: &LoopSchedule,
    sink: &mut W,
) -> std::result::Result<TwinLog, LoopAborted> {
    let mut log = TwinLog::default();
    macro_rules! tri {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => return Err(LoopAborted { partial: log, source: e.into() }),
            }
        };
    }
    tri!(schedule.validate());
    if candidates.is_empty() {
        tri!(Err(invalid("no candidate settings")));
    }
    tri!(writeln!(sink, "{TWIN_LOG_HEADER}"));

    let n0 = plant.config().n0;
    let reading = tri!(sense_temperature(plant.temperature_at(&candidates[0], 0.0), 0.0));
    let mut fitted = model.fitted();
    let mut applied =
        tri!(act_select(&fitted, candidates, reading.temperature_c, n0, schedule.horizon_h, schedule.objective))
            .setting;

    for k in 1..=schedule.n_steps() {
        let t = k as f64 * schedule.step_h;
        let true_temp = plant.temperature_at(&applied, t);
        let sensed = tri!(sense_temperature(true_temp, t));
        let od = plant_observe(plant, &applied, t);
        model.records.push(RawRecord {
            duty_cycle: applied.duty_cycle(),
            frequency_hz: applied.frequency_hz(),
            duration_h: t,
            temperature_c: sensed.temperature_c,
            n0,
            t,
            od,
        });
        if schedule.refit_every.is_some_and(|r| k % r == 0) {
            tri!(model.refit());
            fitted = model.fitted();
        }

        let horizon_t = t + schedule.horizon_h;
        let sel = tri!(act_select(&fitted, candidates, sensed.temperature_c, n0, horizon_t, schedule.objective));
        let oracle_index = tri!(plant.oracle_select(candidates, true_temp, horizon_t, schedule.objective));
        let (x, _) = fitted.normalization.apply(&sel.setting.conditions(sensed.temperature_c));
        let band = tri!(predictive_curve(
            fitted.topology,
            &fitted.chain,
            &x,
            &fitted.ranges,
            n0,
            &[t + schedule.step_h],
            schedule.band
        ));

        let entry = TwinEntry {
            t,
            sensed,
            applied,
            od_observed: od,
            chosen: sel.setting,
            chosen_index: sel.index,
            oracle_index,
            od_predicted_mean: band.mean_od[0],
            od_predicted_lo: band.lower[0],
            od_predicted_hi: band.upper[0],
            model_generation: model.generation(),
        };
        tri!(writeln!(sink, "{}", entry.csv_row()));
        log.entries.push(entry);
        applied = sel.setting;
    }
    Ok(log)
}
