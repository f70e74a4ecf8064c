use std::path::PathBuf;

use interdiff::synth::{build_dataset, DatasetConfig, NoiseParams};

use super::usage_if_invalid;
use crate::config::Config;
use crate::{missing, CliError, GenDataArgs};

pub fn gen_data(a: &GenDataArgs, conf: &Config) -> Result<(), CliError> {
    let out: PathBuf = conf.pick(a.out.clone(), "out")?.ok_or_else(|| missing("out"))?;
    let d = DatasetConfig::default();
    let size = conf.pick_or(a.size, "size", d.width)?;
    let cfg = DatasetConfig {
        n: conf.pick_or(a.n, "n", d.n)?,
        width: size,
        height: size,
        channels: conf.pick_or(a.channels, "channels", d.channels)?,
        noise_a: conf.pick_or(a.noise_a, "noise-a", d.noise_a)?,
        noise_b: conf.pick_or(a.noise_b, "noise-b", d.noise_b)?,
        kinds: d.kinds,
        seed: conf.seed(a.seed)?,
    };
    if cfg.channels != 1 && cfg.channels != 3 {
        return Err(CliError::Usage(format!("--channels must be 1 or 3, got {}", cfg.channels)));
    }
    NoiseParams { a: cfg.noise_a, b: cfg.noise_b, seed: 0 }.validate().map_err(usage_if_invalid)?;
    let rows = build_dataset(&cfg, &out).map_err(usage_if_invalid)?;
    println!(
        "wrote {} pairs ({size}x{size}, a={}, b={}, seed={}) to {}",
        rows.len(),
        cfg.noise_a,
        cfg.noise_b,
        cfg.seed,
        out.display()
    );
    Ok(())
}
