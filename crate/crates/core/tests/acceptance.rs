//! Acceptance suite. Runs every criterion at its pinned tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fermtwin_core::chain_io::write_chain;
use fermtwin_core::dataset::GroupKey;
use fermtwin_core::evaluation::{cross_validate, write_scatter_csv, CvOutcome};
use fermtwin_core::growth::GompertzParams;
use fermtwin_core::mcmc::{run_chain, SamplerConfig};
use fermtwin_core::twin::{run_twin_loop, sense_temperature, SENSOR_RESOLUTION_C};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gompertz_analytics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-4;
    let mut worst_slope: f64 = 0.0;
    let mut worst_intercept: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..1000 {
        let d = rng.random_range(0.1..4.0);
        let mu = rng.random_range(0.01..2.0);
        let lambda = rng.random_range(0.0..48.0);
        let n0 = rng.random_range(0.0..1.0);
        let p = GompertzParams::new(d, mu, lambda).unwrap();
        let ti = p.inflection_time();
        let scale = d / (mu * std::f64::consts::E);

        let far_left = p.eval(lambda - 60.0 * scale, n0);
        let far_right = p.eval(lambda + 60.0 * scale, n0);
        let mut asymptotes = (far_left - n0).abs() <= 1e-12 && (far_right - (n0 + d)).abs() <= 1e-12 * (n0 + d);
        for k in 0..=40 {
            let t = lambda - scale + 0.15 * k as f64 * scale;
            let g = p.eval(t, n0);
            asymptotes &= g > n0 && g < n0 + d;
        }

        let fd = (p.eval(ti + h, n0) - p.eval(ti - h, n0)) / (2.0 * h);
        let slope_err = (fd - mu).abs() / mu;
        worst_slope = worst_slope.max(slope_err);

        let intercept = ti - (p.eval(ti, n0) - n0) / p.slope(ti);
        let intercept_err = (intercept - lambda).abs();
        worst_intercept = worst_intercept.max(intercept_err);

        let s = rng.random_range(0.0..24.0);
        let shifted = GompertzParams::new(d, mu, lambda + s).unwrap();
        let t = rng.random_range(0.0..72.0);
        let shift_ok = (shifted.eval(t + s, n0) - p.eval(t, n0)).abs() <= 1e-10;

        if !(asymptotes && slope_err <= 1e-4 && intercept_err <= 1e-6 && shift_ok) {
            failures.push(i);
        }
    }
    let elapsed = start.elapsed();
    check(
        failures.is_empty() && elapsed.as_secs_f64() < 1.0,
        format!(
            "1000 draws, {} failing, max slope rel err {worst_slope:.2e}, max intercept err {worst_intercept:.2e} h, {:.3} s",
            failures.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn sampler_statistics() -> Outcome {
    let start = Instant::now();
    let cfg = SamplerConfig {
        burn_in: 1_000,
        iterations: 100_000,
        thin: 1,
        proposal_scales: vec![2.4],
        seed: 11,
        adapt_during_burn_in: false,
    };
    let chain = run_chain(&[0.0], |x| -0.5 * x[0] * x[0], &cfg).unwrap();
    let xs: Vec<f64> = chain.samples.iter().map(|s| s[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ok_1d = mean.abs() <= 0.05 && (var - 1.0).abs() <= 0.1;

    // Sigma = [[1, 0.9], [0.9, 2.25]]: sds 1 and 1.5, correlation 0.6.
    let sigma = [[1.0, 0.9], [0.9, 2.25]];
    let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
    let prec = [[sigma[1][1] / det, -sigma[0][1] / det], [-sigma[1][0] / det, sigma[0][0] / det]];
    let target = |x: &[f64]| {
        -0.5 * (prec[0][0] * x[0] * x[0] + 2.0 * prec[0][1] * x[0] * x[1] + prec[1][1] * x[1] * x[1])
    };
    let cfg2 = SamplerConfig {
        burn_in: 2_000,
        iterations: 200_000,
        thin: 1,
        proposal_scales: vec![1.2, 1.8],
        seed: 12,
        adapt_during_burn_in: false,
    };
    let chain2 = run_chain(&[0.0, 0.0], target, &cfg2).unwrap();
    let n2 = chain2.len() as f64;
    let m: Vec<f64> = (0..2).map(|j| chain2.samples.iter().map(|s| s[j]).sum::<f64>() / n2).collect();
    let mut worst: f64 = 0.0;
    let mut cov = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            cov[a][b] = chain2.samples.iter().map(|s| (s[a] - m[a]) * (s[b] - m[b])).sum::<f64>() / (n2 - 1.0);
            worst = worst.max((cov[a][b] - sigma[a][b]).abs() / sigma[a][b].abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        ok_1d && worst <= 0.15 && elapsed.as_secs() < 30,
        format!(
            "1-D mean {mean:+.4} var {var:.4}; 2-D worst covariance rel err {:.1}%, {:.1} s",
            100.0 * worst,
            elapsed.as_secs_f64()
        ),
    )
}

fn schedule_arithmetic() -> Outcome {
    let cfg = SamplerConfig {
        burn_in: 100_000,
        iterations: 300_000,
        thin: 500,
        proposal_scales: vec![1.0],
        seed: 3,
        adapt_during_burn_in: true,
    };
    let chain = run_chain(&[0.0], |x| -0.5 * x[0] * x[0], &cfg).unwrap();
    check(
        cfg.retained() == 600 && chain.len() == 600,
        format!("schedule retains {}, chain holds {}", cfg.retained(), chain.len()),
    )
}

fn run_cv(seed: u64, informative: bool) -> CvOutcome {
    let b = common::benchmark(seed);
    let prior = if informative { &b.informative } else { &b.non_informative };
    let folds = b.dataset.fold_assignment(5).unwrap();
    let cfg = common::reduced(b.design.topology, seed);
    cross_validate(&b.dataset, &folds, b.design.topology, prior, &b.design.ranges, &cfg).unwrap()
}

fn synthetic_recovery(cv: &CvOutcome, elapsed: Duration) -> Outcome {
    let r = &cv.report;
    check(
        r.mape <= 15.0 && r.mse <= 0.02 && elapsed.as_secs() <= 600,
        format!(
            "{} test points, MAPE {:.2}%, median APE {:.2}%, MSE {:.5}, {:.1} s",
            r.n_test_points,
            r.mape,
            r.median_ape,
            r.mse,
            elapsed.as_secs_f64()
        ),
    )
}

fn prior_effect() -> Outcome {
    let mut ratios = Vec::new();
    for seed in [1, 2, 3] {
        let inf = run_cv(seed, true).report.mse;
        let non = run_cv(seed, false).report.mse;
        ratios.push(non / inf);
    }
    check(
        ratios.iter().all(|r| *r >= 2.0),
        format!("non-informative / informative MSE ratios {:.1?}", ratios),
    )
}

fn group_integrity(cv: &CvOutcome) -> Outcome {
    let b = common::benchmark(1);
    let folds = b.dataset.fold_assignment(5).unwrap();
    let mut shared = 0usize;
    let mut pairs = 0usize;
    for f in 0..folds.k {
        let key_of = |g: usize| b.dataset.split_key(g);
        let obs_keys = |groups: Vec<usize>| -> Vec<GroupKey> {
            groups.into_iter().flat_map(|g| vec![key_of(g); b.dataset.groups()[g].observations.len()]).collect()
        };
        let train = obs_keys(folds.train_groups(f));
        let test = obs_keys(folds.test_groups(f));
        for a in &train {
            for c in &test {
                pairs += 1;
                shared += (a == c) as usize;
            }
        }
        let recorded: HashSet<GroupKey> = cv.folds[f].train_keys.iter().copied().collect();
        shared += cv.folds[f].test_keys.iter().filter(|k| recorded.contains(k)).count();
    }
    check(shared == 0, format!("{pairs} train/test observation pairs checked, {shared} share a key"))
}

fn twin_optimality() -> Outcome {
    let start = Instant::now();
    let (mut hits, mut total) = (0usize, 0usize);
    for seed in 1..=5 {
        let (plant, mut model, grid) = common::twin_setup(seed, 0.05);
        let log = run_twin_loop(&plant, &mut model, &grid, &common::schedule(Some(6)), &mut std::io::sink()).unwrap();
        for e in log.entries.iter().filter(|e| e.model_generation >= 1) {
            total += 1;
            hits += (e.chosen_index == e.oracle_index) as usize;
        }
    }
    let rate = hits as f64 / total as f64;
    let elapsed = start.elapsed();
    check(
        rate >= 0.95 && elapsed.as_secs() < 300,
        format!("{hits}/{total} post-refit steps match the oracle ({:.1}%), {:.1} s", 100.0 * rate, elapsed.as_secs_f64()),
    )
}

fn sensor_quantization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let x = rng.random_range(-10.0..=85.0);
        let r = sense_temperature(x, 0.0).unwrap();
        let steps = r.temperature_c / SENSOR_RESOLUTION_C;
        let err = (r.temperature_c - x).abs();
        worst = worst.max(err);
        if steps.fract() != 0.0 || err > SENSOR_RESOLUTION_C / 2.0 {
            bad += 1;
        }
    }
    check(bad == 0, format!("10000 readings, {bad} off-grid or out of tolerance, max error {worst:.5} degC"))
}

fn artefacts(cv: &CvOutcome) -> Vec<u8> {
    let mut out = Vec::new();
    for fold in &cv.folds {
        write_chain(&mut out, &fold.chain, &[]).unwrap();
    }
    out.extend_from_slice(cv.report.to_text().as_bytes());
    write_scatter_csv(&mut out, &cv.points).unwrap();
    out
}

fn determinism(first: &CvOutcome) -> Outcome {
    let a = artefacts(first);
    let b = artefacts(&run_cv(1, true));
    check(a == b, format!("{} bytes of chains, report and scatter compared", a.len()))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "Gompertz analytics", gompertz_analytics()));
    results.push((2, "sampler statistics", sampler_statistics()));
    results.push((3, "schedule arithmetic", schedule_arithmetic()));
    let start = Instant::now();
    let cv = run_cv(1, true);
    let elapsed = start.elapsed();
    results.push((4, "synthetic recovery", synthetic_recovery(&cv, elapsed)));
    results.push((5, "prior effect", prior_effect()));
    results.push((6, "group integrity", group_integrity(&cv)));
    results.push((7, "twin-loop optimality", twin_optimality()));
    results.push((8, "sensor quantization", sensor_quantization()));
    results.push((9, "determinism", determinism(&cv)));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
