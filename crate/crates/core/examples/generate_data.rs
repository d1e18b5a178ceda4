//! Writes the synthetic datasets and matching informative prior files used
//! by the sample configurations.
//!
//! Usage: `cargo run -p fermtwin-core --example generate_data -- <data-dir> <config-dir>`

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fermtwin_core::bnn::PriorSpec;
use fermtwin_core::dataset::write_records;
use fermtwin_core::synthetic::{benchmark, plant_design, SyntheticDesign};

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn write_prior(path: &Path, prior: &PriorSpec) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# Generator weights jittered by N(0, 0.1^2), sd 0.5 on every weight.")?;
    writeln!(w, "weight_means = {}", list(&prior.weight_means))?;
    writeln!(w, "weight_sds = {}", list(&prior.weight_sds))?;
    w.flush()
}

fn emit(design: &SyntheticDesign, name: &str, data_dir: &Path, config_dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let records = design.generate()?;
    let mut w = BufWriter::new(File::create(data_dir.join(format!("{name}.csv")))?);
    write_records(&mut w, &records)?;
    w.flush()?;
    write_prior(&config_dir.join(format!("{name}_prior.toml")), &design.informative_prior(0.5, 0.1, design.seed)?)?;
    println!("{name}: {} records", records.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data_dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let config_dir = PathBuf::from(args.next().unwrap_or_else(|| "configs".into()));
    fs::create_dir_all(&data_dir)?;
    fs::create_dir_all(&config_dir)?;
    emit(&benchmark(1), "benchmark", &data_dir, &config_dir)?;
    emit(&plant_design(1), "plant", &data_dir, &config_dir)?;
    Ok(())
}
