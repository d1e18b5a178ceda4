//! Run configuration: one TOML file, optionally overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use fermtwin_core::bnn::{
    NetworkTopology, OutputRanges, PriorSpec, DEFAULT_NOISE_LOG_SD_MEAN, DEFAULT_NOISE_LOG_SD_SD,
};
use fermtwin_core::dataset::GroupKeyMode;
use fermtwin_core::mcmc::SamplerConfig;
use fermtwin_core::twin::{FrequencyBand, LoopSchedule, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PriorPreset {
    Informative,
    Noninformative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    FourField,
    ThreeField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    MaxDensity,
    MinTime,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub ranges: RangesSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub crossval: CrossvalSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub twin: TwinSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "default_key_mode")]
    pub group_key: KeyMode,
}

fn default_key_mode() -> KeyMode {
    KeyMode::FourField
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { n_hidden: 3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub preset: PriorPreset,
    /// TOML file with `weight_means` and `weight_sds`.
    pub file: Option<PathBuf>,
    pub noise_log_sd_mean: f64,
    pub noise_log_sd_sd: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            preset: PriorPreset::Noninformative,
            file: None,
            noise_log_sd_mean: DEFAULT_NOISE_LOG_SD_MEAN,
            noise_log_sd_sd: DEFAULT_NOISE_LOG_SD_SD,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    weight_means: Vec<f64>,
    weight_sds: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangesSection {
    pub d: (f64, f64),
    pub mu: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for RangesSection {
    fn default() -> Self {
        let r = OutputRanges::default();
        Self { d: r.d, mu: r.mu, lambda: r.lambda }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    pub adapt: bool,
    pub weight_scale: f64,
    pub noise_scale: f64,
    /// Explicit per-parameter scales; overrides the two above.
    pub scales: Option<Vec<f64>>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            burn_in: 100_000,
            iterations: 300_000,
            thin: 500,
            adapt: true,
            weight_scale: 0.1,
            noise_scale: 0.05,
            scales: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalSection {
    pub k: usize,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictSection {
    /// Defaults to `<out_dir>/chain.txt`.
    pub chain: Option<PathBuf>,
    pub quantiles: (f64, f64),
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { chain: None, quantiles: (0.025, 0.975) }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinSection {
    pub step_h: f64,
    pub total_h: f64,
    /// 0 disables refitting.
    pub refit_every: usize,
    pub horizon_h: f64,
    pub objective: ObjectiveKind,
    pub target_od: f64,
    pub frequencies_hz: Vec<f64>,
    pub duty_cycles: Vec<f64>,
    pub burst_hz: f64,
    pub band_hz: (f64, f64),
    /// Hidden-layer width of the plant network.
    pub plant_n_hidden: usize,
    /// Plant network weights in the model's layout.
    pub plant_weights: Vec<f64>,
    pub plant_noise_sd: f64,
    pub temperature_drift: f64,
    pub ambient_temperature_c: f64,
    pub n0: f64,
}

impl Default for TwinSection {
    fn default() -> Self {
        Self {
            step_h: 1.0,
            total_h: 24.0,
            refit_every: 6,
            horizon_h: 24.0,
            objective: ObjectiveKind::MaxDensity,
            target_od: 1.0,
            frequencies_hz: fermtwin_core::synthetic::GRID_FREQUENCIES_HZ.to_vec(),
            duty_cycles: fermtwin_core::synthetic::GRID_DUTY_CYCLES.to_vec(),
            burst_hz: fermtwin_core::twin::DEFAULT_BURST_MODULATION_HZ,
            band_hz: (20_000.0, 50_000.0),
            plant_n_hidden: 4,
            plant_weights: fermtwin_core::synthetic::PLANT_WEIGHTS.to_vec(),
            plant_noise_sd: 0.05,
            temperature_drift: 1.0,
            ambient_temperature_c: 22.0,
            n0: 0.1,
        }
    }
}

/// Flag values that replace the corresponding configuration keys.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Replaces `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces `out_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replaces `prior.preset`.
    #[arg(long, value_enum)]
    pub prior: Option<PriorPreset>,
    /// Replaces `crossval.k`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Replaces `model.n_hidden`.
    #[arg(long)]
    pub hidden: Option<usize>,
}

impl RunConfig {
    /// Reads `path`, applies `overrides` and resolves relative paths against
    /// the configuration file's directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(d) = &overrides.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(p) = overrides.prior {
            cfg.prior.preset = p;
        }
        if let Some(k) = overrides.k {
            cfg.crossval.k = k;
        }
        if let Some(h) = overrides.hidden {
            cfg.model.n_hidden = h;
        }

        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.data.path = resolve(&cfg.data.path);
        if overrides.out_dir.is_none() {
            cfg.out_dir = resolve(&cfg.out_dir);
        }
        cfg.prior.file = cfg.prior.file.as_deref().map(resolve);
        cfg.predict.chain = cfg.predict.chain.as_deref().map(resolve);

        ensure!(cfg.data.path.is_file(), "data.path: {} does not exist", cfg.data.path.display());
        if cfg.prior.preset == PriorPreset::Informative {
            match &cfg.prior.file {
                None => bail!("prior.file: required by the informative preset"),
                Some(f) => ensure!(f.is_file(), "prior.file: {} does not exist", f.display()),
            }
        }
        cfg.sampler_config().context("sampler")?.validate().context("sampler")?;
        cfg.output_ranges().validate().context("ranges")?;
        Ok(cfg)
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        NetworkTopology::new(self.model.n_hidden).context("model.n_hidden")
    }

    pub fn key_mode(&self) -> GroupKeyMode {
        match self.data.group_key {
            KeyMode::FourField => GroupKeyMode::FourField,
            KeyMode::ThreeField => GroupKeyMode::ThreeField,
        }
    }

    pub fn output_ranges(&self) -> OutputRanges {
        OutputRanges { d: self.ranges.d, mu: self.ranges.mu, lambda: self.ranges.lambda }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let topology = self.topology()?;
        let s = &self.sampler;
        let proposal_scales = match &s.scales {
            Some(v) => {
                ensure!(
                    v.len() == topology.n_params(),
                    "sampler.scales: {} entries for {} parameters",
                    v.len(),
                    topology.n_params()
                );
                v.clone()
            }
            None => {
                let mut v = vec![s.weight_scale; topology.n_weights()];
                v.push(s.noise_scale);
                v
            }
        };
        Ok(SamplerConfig {
            burn_in: s.burn_in,
            iterations: s.iterations,
            thin: s.thin,
            proposal_scales,
            seed: self.seed,
            adapt_during_burn_in: s.adapt,
        })
    }

    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let topology = self.topology()?;
        let mut prior = match self.prior.preset {
            PriorPreset::Noninformative => PriorSpec::non_informative(topology),
            PriorPreset::Informative => {
                let path = self.prior.file.as_ref().context("prior.file: missing")?;
                let text = fs::read_to_string(path).with_context(|| format!("prior.file: reading {}", path.display()))?;
                let f: PriorFile =
                    toml::from_str(&text).with_context(|| format!("prior.file: parsing {}", path.display()))?;
                PriorSpec::informative(topology, f.weight_means, f.weight_sds).context("prior.file")?
            }
        };
        prior.noise_log_sd_mean = self.prior.noise_log_sd_mean;
        prior.noise_log_sd_sd = self.prior.noise_log_sd_sd;
        prior.validate(topology).context("prior")?;
        Ok(prior)
    }

    pub fn chain_path(&self) -> PathBuf {
        self.predict.chain.clone().unwrap_or_else(|| self.out_dir.join("chain.txt"))
    }

    pub fn loop_schedule(&self) -> Result<LoopSchedule> {
        let t = &self.twin;
        let objective = match t.objective {
            ObjectiveKind::MaxDensity => Objective::MaxDensityAtHorizon,
            ObjectiveKind::MinTime => Objective::MinTimeToTarget { target_od: t.target_od },
        };
        let schedule = LoopSchedule {
            step_h: t.step_h,
            total_h: t.total_h,
            refit_every: (t.refit_every > 0).then_some(t.refit_every),
            horizon_h: t.horizon_h,
            objective,
            band: self.predict.quantiles,
        };
        schedule.validate().context("twin")?;
        Ok(schedule)
    }

    pub fn band(&self) -> FrequencyBand {
        FrequencyBand { min_hz: self.twin.band_hz.0, max_hz: self.twin.band_hz.1 }
    }
}
