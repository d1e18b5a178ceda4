//! Error metrics, posterior prediction and grouped cross-validation.

use std::io::Write;

use rayon::prelude::*;

use crate::bnn::{fit_posterior, forward_weights, NetworkTopology, OutputRanges, PriorSpec};
use crate::dataset::{Features, FoldAssignment, GroupKey, GrowthDataset};
use crate::error::{invalid, Result};
use crate::fmt17;
use crate::growth::{gompertz_curve, GompertzParams};
use crate::mcmc::{PosteriorChain, SamplerConfig};

fn check_pair(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() {
        return Err(invalid(format!(
            "{} observed vs {} predicted values",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(invalid("metrics need at least one value"));
    }
    Ok(())
}

/// Per-point absolute percentage errors.
pub fn absolute_percentage_errors(observed: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    check_pair(observed, predicted)?;
    observed
        .iter()
        .zip(predicted)
        .map(|(&o, &p)| {
            if o > 0.0 {
                Ok(100.0 * (o - p).abs() / o)
            } else {
                Err(invalid(format!("observed value {o} must be positive for percentage errors")))
            }
        })
        .collect()
}

pub fn mape(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    let apes = absolute_percentage_errors(observed, predicted)?;
    Ok(apes.iter().sum::<f64>() / apes.len() as f64)
}

pub fn median_ape(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(median(absolute_percentage_errors(observed, predicted)?))
}

pub fn mse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let ss: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p) * (o - p)).sum();
    Ok(ss / observed.len() as f64)
}

/// Median; an even count averages the central pair.
fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Inverse empirical CDF: the smallest value whose rank fraction reaches `q`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

fn check_chain(topology: NetworkTopology, chain: &PosteriorChain) -> Result<()> {
    if chain.is_empty() {
        return Err(invalid("posterior chain is empty"));
    }
    if chain.dim() != topology.n_params() {
        return Err(invalid(format!(
            "chain dimension {} does not match topology ({} parameters)",
            chain.dim(),
            topology.n_params()
        )));
    }
    Ok(())
}

fn check_features(x: &Features) -> Result<()> {
    if x.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(invalid(format!("features {x:?} outside the unit cube")))
    }
}

fn per_sample_params<'a>(
    topology: NetworkTopology,
    chain: &'a PosteriorChain,
    features: &Features,
    ranges: &OutputRanges,
) -> impl Iterator<Item = GompertzParams> + 'a {
    let n_w = topology.n_weights();
    let features = *features;
    let ranges = *ranges;
    chain.samples.iter().map(move |s| forward_weights(topology, &s[..n_w], &features, &ranges))
}

/// Averages D, mu and lambda over every retained network.
pub fn posterior_params(
    topology: NetworkTopology,
    chain: &PosteriorChain,
    features: &Features,
    ranges: &OutputRanges,
) -> Result<GompertzParams> {
    check_chain(topology, chain)?;
    check_features(features)?;
    let (mut d, mut mu, mut lambda) = (0.0, 0.0, 0.0);
    for p in per_sample_params(topology, chain, features, ranges) {
        d += p.d();
        mu += p.mu();
        lambda += p.lambda();
    }
    let n = chain.len() as f64;
    GompertzParams::new(d / n, mu / n, lambda / n)
}

/// Point prediction from averaged parameters plus a pointwise quantile band
/// of the per-sample curves.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCurve {
    pub times: Vec<f64>,
    pub mean_od: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub quantile_pair: (f64, f64),
}

impl PredictiveCurve {
    pub const CSV_HEADER: &'static str = "t_h,mean_od600,lower_od600,upper_od600";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(self.times[i]),
                fmt17(self.mean_od[i]),
                fmt17(self.lower[i]),
                fmt17(self.upper[i])
            )?;
        }
        Ok(())
    }
}

pub fn predictive_curve(
    topology: NetworkTopology,
    chain: &PosteriorChain,
    features: &Features,
    ranges: &OutputRanges,
    n0: f64,
    times: &[f64],
    quantile_pair: (f64, f64),
) -> Result<PredictiveCurve> {
    let (lo_q, hi_q) = quantile_pair;
    if !(lo_q > 0.0 && hi_q < 1.0 && lo_q < hi_q) {
        return Err(invalid(format!("quantile pair ({lo_q}, {hi_q}) must satisfy 0 < low < high < 1")));
    }
    let mean_params = posterior_params(topology, chain, features, ranges)?;
    let mean_od: Vec<f64> = gompertz_curve(times, n0, &mean_params)?.into_iter().map(|p| p.od).collect();

    let curves: Vec<Vec<f64>> = per_sample_params(topology, chain, features, ranges)
        .map(|p| times.iter().map(|&t| p.eval(t, n0)).collect())
        .collect();
    let mut lower = Vec::with_capacity(times.len());
    let mut upper = Vec::with_capacity(times.len());
    let mut column = vec![0.0; curves.len()];
    for i in 0..times.len() {
        for (c, curve) in column.iter_mut().zip(&curves) {
            *c = curve[i];
        }
        column.sort_by(f64::total_cmp);
        lower.push(empirical_quantile(&column, lo_q));
        upper.push(empirical_quantile(&column, hi_q));
    }
    Ok(PredictiveCurve { times: times.to_vec(), mean_od, lower, upper, quantile_pair })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub mape: f64,
    pub median_ape: f64,
    pub mse: f64,
    pub n_points: usize,
}

impl FoldMetrics {
    pub fn compute(observed: &[f64], predicted: &[f64]) -> Result<Self> {
        Ok(Self {
            mape: mape(observed, predicted)?,
            median_ape: median_ape(observed, predicted)?,
            mse: mse(observed, predicted)?,
            n_points: observed.len(),
        })
    }
}

/// Headline values are equal-weight means over folds; `pooled` treats all
/// test points as one set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mape: f64,
    pub median_ape: f64,
    pub mse: f64,
    pub per_fold: Vec<FoldMetrics>,
    pub pooled: FoldMetrics,
    pub n_test_points: usize,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: String, v: String| {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("mape_percent".into(), fmt17(self.mape));
        kv("median_ape_percent".into(), fmt17(self.median_ape));
        kv("mse".into(), fmt17(self.mse));
        kv("n_test_points".into(), self.n_test_points.to_string());
        kv("k".into(), self.per_fold.len().to_string());
        kv("pooled_mape_percent".into(), fmt17(self.pooled.mape));
        kv("pooled_median_ape_percent".into(), fmt17(self.pooled.median_ape));
        kv("pooled_mse".into(), fmt17(self.pooled.mse));
        for (i, f) in self.per_fold.iter().enumerate() {
            kv(format!("fold{i}_mape_percent"), fmt17(f.mape));
            kv(format!("fold{i}_median_ape_percent"), fmt17(f.median_ape));
            kv(format!("fold{i}_mse"), fmt17(f.mse));
            kv(format!("fold{i}_n_test_points"), f.n_points.to_string());
        }
        out
    }
}

/// One held-out observation and its prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub fold: usize,
    pub group: usize,
    pub t: f64,
    pub observed: f64,
    pub predicted: f64,
}

pub const SCATTER_CSV_HEADER: &str = "fold,group,t_h,observed_od600,predicted_od600";

pub fn write_scatter_csv<W: Write>(mut w: W, points: &[ScatterPoint]) -> Result<()> {
    writeln!(w, "{SCATTER_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.fold, p.group, fmt17(p.t), fmt17(p.observed), fmt17(p.predicted))?;
    }
    Ok(())
}

/// Fitted chain and the split keys on each side of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub chain: PosteriorChain,
    pub train_keys: Vec<GroupKey>,
    pub test_keys: Vec<GroupKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub points: Vec<ScatterPoint>,
    pub folds: Vec<FoldOutcome>,
}

/// Grouped k-fold cross-validation. Fold `f` is fitted with seed
/// `config.seed + f`; folds run in parallel and are reduced in fold order.
pub fn cross_validate(
    dataset: &GrowthDataset,
    folds: &FoldAssignment,
    topology: NetworkTopology,
    prior: &PriorSpec,
    ranges: &OutputRanges,
    config: &SamplerConfig,
) -> Result<CvOutcome> {
    config.validate()?;
    if folds.assignment.len() != dataset.groups().len() {
        return Err(invalid(format!(
            "fold assignment covers {} groups, dataset has {}",
            folds.assignment.len(),
            dataset.groups().len()
        )));
    }
    if folds.assignment.iter().any(|&f| f >= folds.k) {
        return Err(invalid("fold index out of range"));
    }
    for f in 0..folds.k {
        if folds.test_groups(f).is_empty() || folds.train_groups(f).is_empty() {
            return Err(invalid(format!("fold {f} has an empty train or test side")));
        }
    }

    let per_fold: Vec<(FoldMetrics, Vec<ScatterPoint>, FoldOutcome)> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train_idx = folds.train_groups(f);
            let test_idx = folds.test_groups(f);
            let train = dataset.subset(&train_idx);
            let cfg = SamplerConfig { seed: config.seed.wrapping_add(f as u64), ..config.clone() };
            let chain = fit_posterior(topology, &train, prior, ranges, &cfg)?;

            let mut points = Vec::new();
            for &g in &test_idx {
                let group = &dataset.groups()[g];
                let params = posterior_params(topology, &chain, &group.features, ranges)?;
                for p in &group.observations {
                    points.push(ScatterPoint {
                        fold: f,
                        group: g,
                        t: p.t,
                        observed: p.od,
                        predicted: params.eval(p.t, group.n0),
                    });
                }
            }
            let obs: Vec<f64> = points.iter().map(|p| p.observed).collect();
            let pred: Vec<f64> = points.iter().map(|p| p.predicted).collect();
            let metrics = FoldMetrics::compute(&obs, &pred)?;
            let outcome = FoldOutcome {
                chain,
                train_keys: train_idx.iter().map(|&g| dataset.split_key(g)).collect(),
                test_keys: test_idx.iter().map(|&g| dataset.split_key(g)).collect(),
            };
            Ok((metrics, points, outcome))
        })
        .collect::<Result<_>>()?;

    let k = per_fold.len() as f64;
    let mut points = Vec::new();
    let mut metrics = Vec::new();
    let mut outcomes = Vec::new();
    for (m, p, o) in per_fold {
        metrics.push(m);
        points.extend(p);
        outcomes.push(o);
    }
    let obs: Vec<f64> = points.iter().map(|p| p.observed).collect();
    let pred: Vec<f64> = points.iter().map(|p| p.predicted).collect();
    let report = MetricsReport {
        mape: metrics.iter().map(|m| m.mape).sum::<f64>() / k,
        median_ape: metrics.iter().map(|m| m.median_ape).sum::<f64>() / k,
        mse: metrics.iter().map(|m| m.mse).sum::<f64>() / k,
        pooled: FoldMetrics::compute(&obs, &pred)?,
        n_test_points: points.len(),
        per_fold: metrics,
    };
    Ok(CvOutcome { report, points, folds: outcomes })
}
