//! Plain-text chain persistence.
//!
//! Line 1 is a header of whitespace-separated `key=value` pairs. Every
//! following line is one retained sample: the state vector then its
//! log-density, each printed with 17 significant digits.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::fmt17;
use crate::mcmc::{PosteriorChain, SamplerConfig};

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(",")
}

/// Writes `chain` with the standard header keys followed by `extra`.
pub fn write_chain<W: Write>(mut w: W, chain: &PosteriorChain, extra: &[(&str, String)]) -> Result<()> {
    let cfg = &chain.config;
    let mut header = vec![
        format!("n_params={}", chain.final_scales.len()),
        format!("burn_in={}", cfg.burn_in),
        format!("iterations={}", cfg.iterations),
        format!("thin={}", cfg.thin),
        format!("seed={}", cfg.seed),
        format!("adapt={}", cfg.adapt_during_burn_in),
        format!("scales={}", join(&cfg.proposal_scales)),
        format!("final_scales={}", join(&chain.final_scales)),
        format!("acceptance_rate={}", fmt17(chain.acceptance_rate)),
        format!("samples={}", chain.samples.len()),
    ];
    for (k, v) in extra {
        debug_assert!(!v.contains(char::is_whitespace) && !k.contains('='));
        header.push(format!("{k}={v}"));
    }
    writeln!(w, "{}", header.join(" "))?;
    for (s, lp) in chain.samples.iter().zip(&chain.log_densities) {
        let mut line: Vec<String> = s.iter().map(|&x| fmt17(x)).collect();
        line.push(fmt17(*lp));
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Chain plus every header entry, including the standard keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub chain: PosteriorChain,
    pub header: BTreeMap<String, String>,
}

impl ChainFile {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::ChainFormat(format!("header lacks `{key}`")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::ChainFormat(format!("`{key}={v}` is not a number")))
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| x.parse().map_err(|_| Error::ChainFormat(format!("bad entry `{x}` in `{key}`"))))
        .collect()
}

pub fn read_chain<R: Read>(r: R) -> Result<ChainFile> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::ChainFormat("empty chain file".into()))??;
    let mut header = BTreeMap::new();
    for pair in first.split_whitespace() {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::ChainFormat(format!("header entry `{pair}` is not key=value")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        header.get(k).ok_or_else(|| Error::ChainFormat(format!("header lacks `{k}`")))
    };
    let int = |k: &str| -> Result<u64> {
        let v = get(k)?;
        v.parse().map_err(|_| Error::ChainFormat(format!("`{k}={v}` is not an integer")))
    };
    let n_params = int("n_params")? as usize;
    let config = SamplerConfig {
        burn_in: int("burn_in")? as usize,
        iterations: int("iterations")? as usize,
        thin: int("thin")? as usize,
        proposal_scales: parse_list("scales", get("scales")?)?,
        seed: int("seed")?,
        adapt_during_burn_in: get("adapt")? == "true",
    };
    let final_scales = parse_list("final_scales", get("final_scales")?)?;
    let acceptance_rate: f64 = get("acceptance_rate")?
        .parse()
        .map_err(|_| Error::ChainFormat("bad acceptance_rate".into()))?;

    let mut samples = Vec::new();
    let mut log_densities = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::ChainFormat(format!("line {}: non-numeric entry", i + 2)))?;
        if vals.len() != n_params + 1 {
            return Err(Error::ChainFormat(format!(
                "line {}: expected {} values, found {}",
                i + 2,
                n_params + 1,
                vals.len()
            )));
        }
        log_densities.push(vals[n_params]);
        samples.push(vals[..n_params].to_vec());
    }
    if let Ok(n) = int("samples") {
        if n as usize != samples.len() {
            return Err(Error::ChainFormat(format!("header promises {n} samples, file has {}", samples.len())));
        }
    }
    Ok(ChainFile {
        chain: PosteriorChain { samples, log_densities, acceptance_rate, config, final_scales },
        header,
    })
}
