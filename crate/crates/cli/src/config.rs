use std::path::Path;

use anyhow::anyhow;
use serde::de::DeserializeOwned;
use ssimuse::bench::{BenchConfig, SweepConfig, SweepParameter};
use ssimuse::metric_b::BParams;
use ssimuse::metric_v::VParams;

use crate::{BenchArgs, CliResult, Common, Failure};

/// Reads a JSON config, reporting syntax and unknown-field errors with
/// their line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(anyhow!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Config(anyhow!(
            "{}: line {}, column {}: {}",
            path.display(),
            e.line(),
            e.column(),
            strip_position(&e.to_string())
        ))
    })
}

fn strip_position(msg: &str) -> &str {
    msg.find(" at line ").map_or(msg, |i| &msg[..i])
}

fn apply_metric_flags(common: &Common, b: &mut BParams, v: &VParams) -> CliResult {
    if let Some(w) = common.window {
        b.window_steps = w;
    }
    if let Some(h) = common.hop {
        b.hop_steps = h;
    }
    if let Some(e) = common.weight_exp {
        b.weight_exponent = e;
    }
    if let Some(l) = common.lambda {
        b.lambda = l;
    }
    v.validate()?;
    Ok(())
}

/// Metric parameters for compare and audit: defaults, then the optional
/// config file, then flags.
pub fn metric_params(common: &Common) -> CliResult<(BParams, VParams)> {
    let base: BenchConfig = match &common.config {
        Some(path) => read_json(path)?,
        None => BenchConfig::default(),
    };
    let mut b = base.metric_b;
    apply_metric_flags(common, &mut b, &base.metric_v)?;
    b.validate(base.clip_steps)?;
    Ok((b, base.metric_v))
}

fn apply_bench_flags(cfg: &mut BenchConfig, bench: &BenchArgs, common: &Common, seed_in_file: bool) -> CliResult {
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    if let Some(n) = bench.set_size {
        cfg.set_size = n;
    }
    if let Some(n) = bench.synthetics {
        cfg.synthetics_per_reference = n;
    }
    if let Some(levels) = &bench.levels {
        cfg.levels = levels.clone();
    }
    match bench.seed {
        Some(seed) => cfg.seed = seed,
        None if seed_in_file => {}
        None => {
            return Err(Failure::Config(anyhow!(
                "a seed is required: pass --seed, set SSIMUSE_SEED, or put \"seed\" in the config file"
            )))
        }
    }
    apply_metric_flags(common, &mut cfg.metric_b, &cfg.metric_v)?;
    cfg.validate()?;
    Ok(())
}

fn has_seed(value: &serde_json::Value) -> bool {
    value.get("seed").is_some()
}

pub fn bench_config(bench: &BenchArgs, common: &Common) -> CliResult<BenchConfig> {
    let (mut cfg, seed_in_file) = match &common.config {
        Some(path) => {
            let raw: serde_json::Value = read_json(path)?;
            let cfg: BenchConfig = read_json(path)?;
            (cfg, has_seed(&raw))
        }
        None => (BenchConfig::default(), false),
    };
    apply_bench_flags(&mut cfg, bench, common, seed_in_file)?;
    Ok(cfg)
}

pub fn sweep_config(
    parameter: Option<SweepParameter>,
    values: Option<&[f64]>,
    bench: &BenchArgs,
    common: &Common,
) -> CliResult<SweepConfig> {
    let (file, seed_in_file) = match &common.config {
        Some(path) => {
            let raw: serde_json::Value = read_json(path)?;
            let seed = raw.get("base").is_some_and(has_seed);
            (Some(read_json::<SweepConfig>(path)?), seed)
        }
        None => (None, false),
    };
    let parameter = parameter
        .or(file.as_ref().map(|f| f.parameter))
        .ok_or_else(|| Failure::Config(anyhow!("--parameter is required without a config file")))?;
    let mut sweep = match file {
        Some(f) if f.parameter == parameter => f,
        Some(f) => SweepConfig::new(parameter, f.base),
        None => SweepConfig::new(parameter, BenchConfig::default()),
    };
    if let Some(values) = values {
        sweep.values = values.to_vec();
    }
    if sweep.values.is_empty() {
        sweep.values = parameter.default_values();
    }
    apply_bench_flags(&mut sweep.base, bench, common, seed_in_file)?;
    Ok(sweep)
}
