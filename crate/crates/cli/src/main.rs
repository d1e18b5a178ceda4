//! `fermtwin`: fit, cross-validate, predict and simulate from one config file.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};

use fermtwin_core::bnn::{fit_posterior, NetworkState, NetworkTopology, OutputRanges};
use fermtwin_core::chain_io::{read_chain, write_chain, ChainFile};
use fermtwin_core::dataset::{
    load_records, normalize_with, Conditions, GrowthDataset, NormalizationBounds, RawRecord, FEATURE_NAMES,
};
use fermtwin_core::evaluation::{cross_validate, predictive_curve, write_scatter_csv};
use fermtwin_core::fmt17;
use fermtwin_core::mcmc::PosteriorChain;
use fermtwin_core::twin::{candidate_grid, run_twin_loop, PlantConfig, PlantState, TwinModel};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "fermtwin", version, about = "Bayesian growth model and digital twin for ultrasound-assisted fermentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior on the full dataset; writes chain.txt and fit_summary.txt.
    Fit(Common),
    /// Grouped k-fold cross-validation; writes metrics.txt, scatter.csv and one chain per fold.
    Crossval(Common),
    /// Predictive curve for one set-point from a saved chain; writes prediction.csv.
    Predict(PredictArgs),
    /// Closed-loop run against the synthetic plant; writes twin_log.csv.
    Simulate(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    temperature: f64,
    #[arg(long)]
    frequency: f64,
    #[arg(long)]
    duty: f64,
    /// Initial OD600.
    #[arg(long)]
    n0: f64,
    /// Explicit comma-separated times in hours; overrides --t-max/--t-step.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long, default_value_t = 48.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1.0)]
    t_step: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit(c) => cmd_fit(&load(&c)?),
        Command::Crossval(c) => cmd_crossval(&load(&c)?),
        Command::Predict(p) => cmd_predict(&load(&p.common)?, &p),
        Command::Simulate(c) => cmd_simulate(&load(&c)?),
    }
}

fn load(c: &Common) -> Result<RunConfig> {
    RunConfig::load(&c.config, &c.overrides)
}

fn read_dataset(cfg: &RunConfig) -> Result<(Vec<RawRecord>, GrowthDataset)> {
    let path = &cfg.data.path;
    let file = File::open(path).with_context(|| format!("data.path: opening {}", path.display()))?;
    let records = load_records(file).with_context(|| format!("data.path: {}", path.display()))?;
    let dataset = normalize_with(&records, cfg.key_mode()).with_context(|| format!("data.path: {}", path.display()))?;
    Ok((records, dataset))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn pair(p: (f64, f64)) -> String {
    format!("{},{}", fmt17(p.0), fmt17(p.1))
}

/// Header entries `predict` needs to rebuild the model around a chain.
fn chain_extras(topology: NetworkTopology, bounds: &NormalizationBounds, ranges: &OutputRanges) -> Vec<(&'static str, String)> {
    let mut extra = vec![("n_hidden", topology.n_hidden.to_string())];
    for (name, b) in ["norm_temperature_c", "norm_frequency_hz", "norm_duty_cycle"].into_iter().zip(bounds.bounds) {
        extra.push((name, pair(b)));
    }
    extra.push(("range_d", pair(ranges.d)));
    extra.push(("range_mu", pair(ranges.mu)));
    extra.push(("range_lambda", pair(ranges.lambda)));
    extra
}

fn save_chain(dir: &Path, name: &str, chain: &PosteriorChain, extra: &[(&str, String)]) -> Result<()> {
    let mut w = create(dir, name)?;
    write_chain(&mut w, chain, extra)?;
    w.flush()?;
    Ok(())
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let topology = cfg.topology()?;
    let prior = cfg.prior_spec()?;
    let ranges = cfg.output_ranges();
    let sampler = cfg.sampler_config()?;
    let (_, dataset) = read_dataset(cfg)?;
    let chain = fit_posterior(topology, &dataset, &prior, &ranges, &sampler)?;
    save_chain(&cfg.out_dir, "chain.txt", &chain, &chain_extras(topology, dataset.normalization(), &ranges))?;

    let final_lp = *chain.log_densities.last().context("chain retained no samples")?;
    let max_lp = chain.log_densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w = create(&cfg.out_dir, "fit_summary.txt")?;
    writeln!(w, "n_groups={}", dataset.groups().len())?;
    writeln!(w, "n_observations={}", dataset.n_observations())?;
    writeln!(w, "n_params={}", topology.n_params())?;
    writeln!(w, "seed={}", sampler.seed)?;
    writeln!(w, "samples={}", chain.len())?;
    writeln!(w, "acceptance_rate={}", fmt17(chain.acceptance_rate))?;
    writeln!(w, "final_log_density={}", fmt17(final_lp))?;
    writeln!(w, "max_log_density={}", fmt17(max_lp))?;
    w.flush()?;
    println!(
        "fit: {} samples, acceptance {:.3}, final log-density {:.4} -> {}",
        chain.len(),
        chain.acceptance_rate,
        final_lp,
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_crossval(cfg: &RunConfig) -> Result<()> {
    let topology = cfg.topology()?;
    let prior = cfg.prior_spec()?;
    let ranges = cfg.output_ranges();
    let sampler = cfg.sampler_config()?;
    let (_, dataset) = read_dataset(cfg)?;
    let folds = dataset.fold_assignment(cfg.crossval.k).context("crossval.k")?;
    let cv = cross_validate(&dataset, &folds, topology, &prior, &ranges, &sampler)?;

    let mut w = create(&cfg.out_dir, "metrics.txt")?;
    w.write_all(cv.report.to_text().as_bytes())?;
    w.flush()?;
    let mut w = create(&cfg.out_dir, "scatter.csv")?;
    write_scatter_csv(&mut w, &cv.points)?;
    w.flush()?;
    let extra = chain_extras(topology, dataset.normalization(), &ranges);
    for (f, fold) in cv.folds.iter().enumerate() {
        save_chain(&cfg.out_dir, &format!("fold{f}_chain.txt"), &fold.chain, &extra)?;
    }
    let r = &cv.report;
    println!(
        "crossval: k={} MAPE {:.2}% median APE {:.2}% MSE {:.5} over {} points -> {}",
        folds.k,
        r.mape,
        r.median_ape,
        r.mse,
        r.n_test_points,
        cfg.out_dir.display()
    );
    Ok(())
}

fn parse_pair(file: &ChainFile, key: &str) -> Result<(f64, f64)> {
    let v = file.get(key)?;
    let parts: Vec<f64> = v
        .split(',')
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("chain header `{key}={v}`"))?;
    ensure!(parts.len() == 2, "chain header `{key}` needs two values");
    Ok((parts[0], parts[1]))
}

fn cmd_predict(cfg: &RunConfig, args: &PredictArgs) -> Result<()> {
    let path = cfg.chain_path();
    let file = File::open(&path).with_context(|| format!("chain file {}", path.display()))?;
    let chain_file = read_chain(file).with_context(|| format!("chain file {}", path.display()))?;
    let n_hidden: usize = chain_file.get("n_hidden")?.parse().context("chain header `n_hidden`")?;
    let topology = NetworkTopology::new(n_hidden)?;
    let mut bounds = [(0.0, 0.0); 3];
    for (b, key) in bounds.iter_mut().zip(["norm_temperature_c", "norm_frequency_hz", "norm_duty_cycle"]) {
        *b = parse_pair(&chain_file, key)?;
    }
    let bounds = NormalizationBounds { bounds };
    let ranges = OutputRanges {
        d: parse_pair(&chain_file, "range_d")?,
        mu: parse_pair(&chain_file, "range_mu")?,
        lambda: parse_pair(&chain_file, "range_lambda")?,
    };

    let times = match &args.times {
        Some(t) => t.clone(),
        None => {
            ensure!(args.t_step > 0.0 && args.t_max >= 0.0, "--t-step must be positive and --t-max non-negative");
            let n = (args.t_max / args.t_step + 1e-9).floor() as usize;
            (0..=n).map(|i| i as f64 * args.t_step).collect()
        }
    };
    if !(args.n0 >= 0.0 && args.n0.is_finite()) {
        bail!("--n0 must be a non-negative number");
    }
    let conditions = Conditions { temperature_c: args.temperature, frequency_hz: args.frequency, duty_cycle: args.duty };
    let (x, warnings) = bounds.apply(&conditions);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    debug_assert_eq!(FEATURE_NAMES.len(), x.len());
    let curve = predictive_curve(topology, &chain_file.chain, &x, &ranges, args.n0, &times, cfg.predict.quantiles)?;
    let mut w = create(&cfg.out_dir, "prediction.csv")?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    println!("predict: {} times -> {}", times.len(), cfg.out_dir.join("prediction.csv").display());
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let topology = cfg.topology()?;
    let prior = cfg.prior_spec()?;
    let ranges = cfg.output_ranges();
    let sampler = cfg.sampler_config()?;
    let schedule = cfg.loop_schedule()?;
    let (records, _) = read_dataset(cfg)?;
    let t = &cfg.twin;

    let candidates = candidate_grid(&t.frequencies_hz, &t.duty_cycles, t.burst_hz, cfg.band()).context("twin candidate grid")?;
    let mut model = TwinModel::fit(records, topology, prior, ranges, sampler, cfg.key_mode())?;
    let plant_topology = NetworkTopology::new(t.plant_n_hidden).context("twin.plant_n_hidden")?;
    let log_noise_sd = if t.plant_noise_sd > 0.0 { t.plant_noise_sd.ln() } else { 0.0 };
    let plant = PlantState::new(PlantConfig {
        topology: plant_topology,
        true_network: NetworkState::new(plant_topology, t.plant_weights.clone(), log_noise_sd)
            .context("twin.plant_weights")?,
        ranges,
        bounds: *model.dataset().normalization(),
        observation_noise_sd: t.plant_noise_sd,
        temperature_drift: t.temperature_drift,
        ambient_temperature_c: t.ambient_temperature_c,
        n0: t.n0,
        seed: cfg.seed,
    })
    .context("twin")?;

    let mut w = create(&cfg.out_dir, "twin_log.csv")?;
    let result = run_twin_loop(&plant, &mut model, &candidates, &schedule, &mut w);
    w.flush()?;
    let log = result.context("twin loop")?;
    let refit: Vec<_> = log.entries.iter().filter(|e| e.model_generation >= 1).collect();
    let hits = refit.iter().filter(|e| e.chosen_index == e.oracle_index).count();
    println!(
        "simulate: {} steps, {} refits, {hits}/{} post-refit selections match the plant optimum -> {}",
        log.entries.len(),
        model.generation(),
        refit.len(),
        cfg.out_dir.join("twin_log.csv").display()
    );
    Ok(())
}
