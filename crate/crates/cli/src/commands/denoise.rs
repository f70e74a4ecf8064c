use std::path::PathBuf;

use anyhow::Context;
use interdiff::denoiser::{Checkpoint, NetDenoiser};
use interdiff::image::{load_image, save_image};
use interdiff::sampler::run_sampler;
use interdiff::SamplerKind;

use crate::config::Config;
use crate::{missing, CliError, DenoiseArgs};

pub fn denoise(a: &DenoiseArgs, conf: &Config) -> Result<(), CliError> {
    let model: PathBuf = conf.pick(a.model.clone(), "model")?.ok_or_else(|| missing("model"))?;
    let input: PathBuf = conf.pick(a.input.clone(), "in")?.ok_or_else(|| missing("in"))?;
    let out: PathBuf = conf.pick(a.out.clone(), "out")?.ok_or_else(|| missing("out"))?;
    let sampler = conf.pick_or(a.sampler, "sampler", SamplerKind::Improve)?;
    let horizon_flag: Option<usize> = conf.pick(a.horizon, "T")?;
    if horizon_flag == Some(0) {
        return Err(CliError::Usage("--T must be at least 1".into()));
    }
    let trace_dir: Option<PathBuf> = conf.pick(a.trace_dir.clone(), "trace-dir")?;

    let ck = Checkpoint::load(&model).with_context(|| format!("loading model {}", model.display()))?;
    let horizon = horizon_flag.unwrap_or(ck.horizon);
    let noisy = load_image(&input).with_context(|| format!("loading {}", input.display()))?;
    let mut den = NetDenoiser::from_checkpoint(ck)?;
    let (x, trace) = run_sampler(&noisy, &mut den, horizon, sampler, trace_dir.is_some())
        .with_context(|| format!("denoising {}", input.display()))?;
    save_image(&x.clamped(), &out)?;
    if let Some(dir) = &trace_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (s, img) in &trace.snapshots {
            save_image(&img.clamped(), dir.join(format!("step_{s:04}.png")))?;
        }
    }
    println!("sampler={sampler} T={horizon} denoiser_calls={} wrote {}", trace.denoiser_calls, out.display());
    Ok(())
}
