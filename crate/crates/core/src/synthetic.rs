//! Synthetic observations drawn from a known generating network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bnn::{forward_weights, NetworkState, NetworkTopology, OutputRanges, PriorSpec};
use crate::dataset::{Conditions, NormalizationBounds, RawRecord};
use crate::error::{invalid, Result};

/// One experimental set-point of a synthetic design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetPoint {
    pub conditions: Conditions,
    pub n0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub topology: NetworkTopology,
    pub true_state: NetworkState,
    pub ranges: OutputRanges,
    pub set_points: Vec<SetPoint>,
    pub times: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticDesign {
    /// Min-max bounds of the design's set-points, as `normalize` will compute them.
    pub fn bounds(&self) -> Result<NormalizationBounds> {
        NormalizationBounds::from_conditions(self.set_points.iter().map(|s| &s.conditions))
    }

    /// One record per set-point and time: the true curve plus Gaussian noise,
    /// floored at zero.
    pub fn generate(&self) -> Result<Vec<RawRecord>> {
        if self.noise_sd < 0.0 || !self.noise_sd.is_finite() {
            return Err(invalid("noise sd must be non-negative"));
        }
        let bounds = self.bounds()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.set_points.len() * self.times.len());
        for sp in &self.set_points {
            let (x, _) = bounds.apply(&sp.conditions);
            let params = forward_weights(self.topology, &self.true_state.weights, &x, &self.ranges);
            for &t in &self.times {
                let noise: f64 = rng.sample(StandardNormal);
                let od = (params.eval(t, sp.n0) + self.noise_sd * noise).max(0.0);
                out.push(RawRecord {
                    duty_cycle: sp.conditions.duty_cycle,
                    frequency_hz: sp.conditions.frequency_hz,
                    duration_h: t,
                    temperature_c: sp.conditions.temperature_c,
                    n0: sp.n0,
                    t,
                    od,
                });
            }
        }
        Ok(out)
    }

    /// Prior centered on the generator, each mean jittered by `N(0, jitter^2)`.
    pub fn informative_prior(&self, sd: f64, jitter: f64, seed: u64) -> Result<PriorSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = self
            .true_state
            .weights
            .iter()
            .map(|w| w + jitter * rng.sample::<f64, _>(StandardNormal))
            .collect();
        PriorSpec::informative(self.topology, means, vec![sd; self.topology.n_weights()])
    }
}

/// Generating weights of the reference 3-3-3 network.
///
/// Hidden unit 0 responds to temperature, 1 falls with frequency, 2 rises
/// with duty cycle. Across the benchmark design this gives D in roughly
/// 0.5-3.3 OD600, mu in 0.1-0.5 OD600/h and lambda in 1-10 h.
pub const BENCHMARK_WEIGHTS: [f64; 24] = [
    3.0, 0.0, 0.0, -1.5, //
    0.0, -3.0, 1.0, 1.0, //
    0.5, 1.0, 2.5, -2.0, //
    1.0, -1.0, 1.5, -1.0, // D
    0.8, 0.5, 0.6, -3.0, // mu
    -1.0, 0.6, -0.8, -2.0, // lambda
];

/// Twelve growths sampled every 3 h over 21 h (96 observations), noise sd 0.05.
pub fn benchmark(seed: u64) -> SyntheticDesign {
    let topology = NetworkTopology { n_hidden: 3 };
    let temps = [18.0, 22.0, 26.0];
    let freqs = [20_000.0, 30_000.0, 40_000.0, 50_000.0];
    let duties = [0.25, 0.5, 0.75];
    let n0s = [0.5, 0.8];
    let set_points = (0..12)
        .map(|i| SetPoint {
            conditions: Conditions {
                temperature_c: temps[i % 3],
                frequency_hz: freqs[i % 4],
                duty_cycle: duties[(i / 4) % 3],
            },
            n0: n0s[i % 2],
        })
        .collect();
    SyntheticDesign {
        topology,
        true_state: NetworkState { weights: BENCHMARK_WEIGHTS.to_vec(), log_noise_sd: 0.05f64.ln() },
        ranges: OutputRanges::default(),
        set_points,
        times: (0..8).map(|i| 3.0 * i as f64).collect(),
        noise_sd: 0.05,
        seed,
    }
}

/// Frequencies of the 5 x 5 twin candidate grid, Hz.
pub const GRID_FREQUENCIES_HZ: [f64; 5] = [20_000.0, 27_500.0, 35_000.0, 42_500.0, 50_000.0];
pub const GRID_DUTY_CYCLES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Generating weights of a 3-4-3 plant whose amplitude peaks at the centre
/// of the frequency and duty ranges.
///
/// Units 0 and 1 are offset sigmoids in frequency, 2 and 3 in duty cycle, so
/// each pair differences to a bump. Temperature has no effect. On the grid
/// the best setting is (35 kHz, 0.5) with D near 2.9 against 2.2 for its
/// nearest neighbours.
pub const PLANT_WEIGHTS: [f64; 31] = [
    0.0, 8.0, 0.0, -2.4, //
    0.0, 8.0, 0.0, -5.6, //
    0.0, 0.0, 8.0, -2.4, //
    0.0, 0.0, 8.0, -5.6, //
    3.0, -3.0, 3.0, -3.0, -3.0, // D
    0.3, -0.3, 0.3, -0.3, -1.6, // mu
    0.0, 0.0, 0.0, 0.0, -2.0, // lambda
];

/// One growth per grid setting, temperatures alternating 20 and 24 degC,
/// n0 0.1, sampled every 3 h over 21 h (200 observations), noise sd 0.05.
pub fn plant_design(seed: u64) -> SyntheticDesign {
    let mut set_points = Vec::with_capacity(25);
    for (i, &f) in GRID_FREQUENCIES_HZ.iter().enumerate() {
        for (j, &d) in GRID_DUTY_CYCLES.iter().enumerate() {
            set_points.push(SetPoint {
                conditions: Conditions {
                    temperature_c: [20.0, 24.0][(i + j) % 2],
                    frequency_hz: f,
                    duty_cycle: d,
                },
                n0: 0.1,
            });
        }
    }
    SyntheticDesign {
        topology: NetworkTopology { n_hidden: 4 },
        true_state: NetworkState { weights: PLANT_WEIGHTS.to_vec(), log_noise_sd: 0.05f64.ln() },
        ranges: OutputRanges::default(),
        set_points,
        times: (0..8).map(|i| 3.0 * i as f64).collect(),
        noise_sd: 0.05,
        seed,
    }
}
