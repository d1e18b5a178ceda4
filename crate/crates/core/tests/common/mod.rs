#![allow(dead_code)]

use fermtwin_core::bnn::{default_proposal_scales, NetworkTopology, PriorSpec};
use fermtwin_core::dataset::{normalize, GroupKeyMode, GrowthDataset};
use fermtwin_core::mcmc::SamplerConfig;
use fermtwin_core::synthetic::{self, SyntheticDesign, GRID_DUTY_CYCLES, GRID_FREQUENCIES_HZ};
use fermtwin_core::twin::{
    candidate_grid, ActuatorSetting, FrequencyBand, LoopSchedule, Objective, PlantConfig, PlantState, TwinModel,
    DEFAULT_BURST_MODULATION_HZ,
};

/// Burn-in 10k, 30k sampling iterations, thin 50.
pub fn reduced(topology: NetworkTopology, seed: u64) -> SamplerConfig {
    SamplerConfig {
        burn_in: 10_000,
        iterations: 30_000,
        thin: 50,
        proposal_scales: default_proposal_scales(topology),
        seed,
        adapt_during_burn_in: true,
    }
}

pub struct Benchmark {
    pub design: SyntheticDesign,
    pub dataset: GrowthDataset,
    pub informative: PriorSpec,
    pub non_informative: PriorSpec,
}

pub fn benchmark(seed: u64) -> Benchmark {
    let design = synthetic::benchmark(seed);
    let dataset = normalize(&design.generate().unwrap()).unwrap();
    let informative = design.informative_prior(0.5, 0.1, seed).unwrap();
    let non_informative = PriorSpec::non_informative(design.topology);
    Benchmark { design, dataset, informative, non_informative }
}

pub fn grid() -> Vec<ActuatorSetting> {
    candidate_grid(&GRID_FREQUENCIES_HZ, &GRID_DUTY_CYCLES, DEFAULT_BURST_MODULATION_HZ, FrequencyBand::default())
        .unwrap()
}

/// Plant, fitted model and candidate grid for the bump plant.
pub fn twin_setup(seed: u64, observation_noise_sd: f64) -> (PlantState, TwinModel, Vec<ActuatorSetting>) {
    let design = synthetic::plant_design(seed);
    let plant = PlantState::new(PlantConfig {
        topology: design.topology,
        true_network: design.true_state.clone(),
        ranges: design.ranges,
        bounds: design.bounds().unwrap(),
        observation_noise_sd,
        temperature_drift: 1.0,
        ambient_temperature_c: 22.0,
        n0: 0.1,
        seed,
    })
    .unwrap();
    let prior = design.informative_prior(0.5, 0.1, seed).unwrap();
    let model = TwinModel::fit(
        design.generate().unwrap(),
        design.topology,
        prior,
        design.ranges,
        reduced(design.topology, seed),
        GroupKeyMode::FourField,
    )
    .unwrap();
    (plant, model, grid())
}

pub fn schedule(refit_every: Option<usize>) -> LoopSchedule {
    LoopSchedule {
        step_h: 1.0,
        total_h: 24.0,
        refit_every,
        horizon_h: 24.0,
        objective: Objective::MaxDensityAtHorizon,
        band: (0.025, 0.975),
    }
}
