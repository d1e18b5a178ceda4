use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fermtwin_core::dataset::write_records;
use fermtwin_core::synthetic::{benchmark, plant_design, SyntheticDesign};
use tempfile::TempDir;

const QUICK: &str = "[sampler]\nburn_in = 10000\niterations = 30000\nthin = 50\n";

fn fermtwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermtwin")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes the design's records and a prior file centred on its generator.
    fn design(&self, name: &str, design: &SyntheticDesign) {
        write_records(File::create(self.path(&format!("{name}.csv"))).unwrap(), &design.generate().unwrap()).unwrap();
        let prior = design.informative_prior(0.5, 0.1, design.seed).unwrap();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        fs::write(
            self.path(&format!("{name}_prior.toml")),
            format!("weight_means = [{}]\nweight_sds = [{}]\n", fmt(&prior.weight_means), fmt(&prior.weight_sds)),
        )
        .unwrap();
    }

    fn config(&self, name: &str, body: &str) -> String {
        let p = self.path(name);
        fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn benchmark_config(data: &str, prior: &str, extra: &str) -> String {
    format!(
        "seed = 1\nout_dir = \"out\"\n[data]\npath = \"{data}.csv\"\n[prior]\npreset = \"{prior}\"\nfile = \"{data}_prior.toml\"\n{extra}"
    )
}

fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}"))
        .parse()
        .unwrap()
}

fn summary_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap().to_string()
}

#[test]
fn default_schedule_keeps_600_samples() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(1));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", ""));
    let out = fermtwin(&["fit", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(summary_value(&ws.path("out/fit_summary.txt"), "samples"), "600");
    assert_eq!(ws.read("out/chain.txt").lines().count(), 601);
}

#[test]
fn fit_is_byte_reproducible() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(2));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", QUICK));
    assert!(fermtwin(&["fit", "--config", &cfg, "--out-dir", ws.path("a").to_str().unwrap()]).status.success());
    assert!(fermtwin(&["fit", "--config", &cfg, "--out-dir", ws.path("b").to_str().unwrap()]).status.success());
    assert_eq!(ws.read("a/chain.txt"), ws.read("b/chain.txt"));
    assert_eq!(ws.read("a/fit_summary.txt"), ws.read("b/fit_summary.txt"));
    assert!(fermtwin(&["fit", "--config", &cfg, "--out-dir", ws.path("c").to_str().unwrap(), "--seed", "9"]).status.success());
    assert_ne!(ws.read("a/chain.txt"), ws.read("c/chain.txt"));
}

#[test]
fn thin_above_iterations_is_rejected_before_running() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(1));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", "[sampler]\niterations = 100\nthin = 500\n"));
    let out = fermtwin(&["fit", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("sampler"), "{}", stderr(&out));
    assert!(!ws.path("out").exists());
}

#[test]
fn config_errors_name_the_field() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(1));
    let unknown = ws.config("a.toml", &benchmark_config("bench", "informative", "[sampler]\nburnin = 5\n"));
    assert!(stderr(&fermtwin(&["fit", "--config", &unknown])).contains("burnin"));
    let missing = ws.config("b.toml", &benchmark_config("nothere", "noninformative", ""));
    assert!(stderr(&fermtwin(&["fit", "--config", &missing])).contains("data.path"));
    let cfg = ws.config("c.toml", &benchmark_config("bench", "informative", QUICK));
    let out = fermtwin(&["fit", "--config", &cfg, "--hidden", "2"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("prior.file"), "{}", stderr(&out));
}

#[test]
fn noiseless_oracle_cross_validates_tightly() {
    let ws = Workspace::new();
    let mut design = benchmark(3);
    design.noise_sd = 0.0;
    ws.design("clean", &design);
    let cfg = ws.config("run.toml", &benchmark_config("clean", "informative", QUICK));
    let out = fermtwin(&["crossval", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mape = metric(&ws.read("out/metrics.txt"), "mape_percent");
    assert!(mape < 2.0, "MAPE {mape}");
    let scatter = ws.read("out/scatter.csv");
    assert_eq!(scatter.lines().next().unwrap(), "fold,group,t_h,observed_od600,predicted_od600");
    assert_eq!(scatter.lines().count(), 97);
    assert!(ws.path("out/fold4_chain.txt").is_file());
}

#[test]
fn non_informative_preset_raises_cv_error() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(4));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", QUICK));
    assert!(fermtwin(&["crossval", "--config", &cfg, "--out-dir", ws.path("inf").to_str().unwrap()]).status.success());
    let out = fermtwin(&[
        "crossval",
        "--config",
        &cfg,
        "--out-dir",
        ws.path("non").to_str().unwrap(),
        "--prior",
        "noninformative",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let inf = metric(&ws.read("inf/metrics.txt"), "mse");
    let non = metric(&ws.read("non/metrics.txt"), "mse");
    assert!(non > inf, "{non} vs {inf}");
}

#[test]
fn k_above_group_count_is_rejected() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(1));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", QUICK));
    let out = fermtwin(&["crossval", "--config", &cfg, "--k", "13"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("crossval.k"), "{}", stderr(&out));
}

#[test]
fn predict_from_saved_chain() {
    let ws = Workspace::new();
    ws.design("bench", &benchmark(5));
    let cfg = ws.config("run.toml", &benchmark_config("bench", "informative", QUICK));
    let args = ["predict", "--config", &cfg, "--temperature", "22", "--frequency", "30000", "--duty", "0.5", "--n0", "0.8"];
    let out = fermtwin(&args);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("chain"));

    assert!(fermtwin(&["fit", "--config", &cfg]).status.success());
    let out = fermtwin(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(!stderr(&out).contains("warning"));
    let first = ws.read("out/prediction.csv");
    let rows: Vec<Vec<f64>> = first
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 49);
    for r in &rows {
        for v in &r[1..] {
            assert!(*v >= 0.8 && *v <= 0.8 + 4.0);
        }
        assert!(r[2] <= r[3]);
    }
    assert!(fermtwin(&args).status.success());
    assert_eq!(ws.read("out/prediction.csv"), first);

    let out = fermtwin(&["predict", "--config", &cfg, "--temperature", "40", "--frequency", "30000", "--duty", "0.5", "--n0", "0.8", "--times", "0,12"]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning: temperature_c=40"), "{}", stderr(&out));
    assert_eq!(ws.read("out/prediction.csv").lines().count(), 3);
}

fn twin_config(seed: u64, total_h: f64) -> String {
    format!(
        "seed = {seed}\nout_dir = \"out\"\n[data]\npath = \"plant.csv\"\n[model]\nn_hidden = 4\n\
         [prior]\npreset = \"informative\"\nfile = \"plant_prior.toml\"\n{QUICK}\
         [twin]\nstep_h = 1.0\ntotal_h = {total_h}\nrefit_every = 6\n"
    )
}

#[test]
fn simulate_writes_one_row_per_step() {
    let ws = Workspace::new();
    ws.design("plant", &plant_design(1));
    let cfg = ws.config("twin.toml", &twin_config(1, 12.0));
    let out = fermtwin(&["simulate", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = ws.read("out/twin_log.csv");
    assert_eq!(
        log.lines().next().unwrap(),
        "t_h,temp_c_sensed,freq_hz,duty,od_observed,od_predicted_mean,od_predicted_lo,od_predicted_hi"
    );
    assert_eq!(log.lines().count(), 13);

    let other = fermtwin(&["simulate", "--config", &cfg, "--seed", "2", "--out-dir", ws.path("s2").to_str().unwrap()]);
    assert!(other.status.success());
    let log2 = ws.read("s2/twin_log.csv");
    assert_eq!(log2.lines().count(), 13);
    let observed = |l: &str| l.lines().skip(1).map(|r| r.split(',').nth(4).unwrap().to_string()).collect::<Vec<_>>();
    assert_ne!(observed(&log), observed(&log2));
}

#[test]
fn simulate_settles_on_the_plant_optimum() {
    let ws = Workspace::new();
    ws.design("plant", &plant_design(3));
    let cfg = ws.config("twin.toml", &twin_config(3, 24.0));
    let out = fermtwin(&["simulate", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = ws.read("out/twin_log.csv");
    for row in log.lines().skip(19) {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cells[2], cells[3]), (35_000.0, 0.5));
    }
}
