use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use interdiff::denoiser::{Checkpoint, NetDenoiser, Unet};
use interdiff::image::extract_patches;
use interdiff::metrics::{psnr, ssim, SsimParams};
use interdiff::sampler::run_sampler;
use interdiff::synth::load_dataset;
use interdiff::training::{train_loop_with, StepEvent, TrainOutcome};
use interdiff::{DenoiserSpec, NoisyPair, SamplerKind, TrainConfig};

use super::usage_if_invalid;
use crate::config::Config;
use crate::{missing, CliError, FitArgs, SweepArgs, TrainArgs};

struct Plan {
    data: PathBuf,
    cfg: TrainConfig,
    spec: DenoiserSpec,
    patch: usize,
    stride: usize,
    holdout: usize,
}

fn plan(a: &FitArgs, conf: &Config, horizon: usize) -> Result<Plan, CliError> {
    let d = TrainConfig::default();
    let s = DenoiserSpec::default();
    let cfg = TrainConfig {
        lr: conf.pick_or(a.lr, "lr", d.lr)?,
        beta1: conf.pick_or(a.beta1, "beta1", d.beta1)?,
        beta2: conf.pick_or(a.beta2, "beta2", d.beta2)?,
        adam_eps: conf.pick_or(a.adam_eps, "adam-eps", d.adam_eps)?,
        batch_size: conf.pick_or(a.batch, "batch", d.batch_size)?,
        iterations: conf.pick_or(a.iters, "iters", d.iterations)?,
        horizon,
        loss: conf.pick_or(a.loss, "loss", d.loss)?,
        charbonnier_eps: conf.pick_or(a.charbonnier_eps, "charbonnier-eps", d.charbonnier_eps)?,
        seed: conf.seed(a.seed)?,
    };
    cfg.validate().map_err(usage_if_invalid)?;
    let spec = DenoiserSpec {
        channels: s.channels,
        base_channels: conf.pick_or(a.base_channels, "base-channels", s.base_channels)?,
        depth: conf.pick_or(a.depth, "depth", s.depth)?,
        time_embed_dim: conf.pick_or(a.time_embed_dim, "time-embed-dim", s.time_embed_dim)?,
    };
    spec.validate().map_err(usage_if_invalid)?;
    let patch = conf.pick_or(a.patch, "patch", 32)?;
    let stride = conf.pick_or(a.stride, "stride", patch)?;
    if patch == 0 || stride == 0 {
        return Err(CliError::Usage("--patch and --stride must be positive".into()));
    }
    spec.check_input(patch, patch).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Plan {
        data: conf.pick(a.data.clone(), "data")?.ok_or_else(|| missing("data"))?,
        cfg,
        spec,
        patch,
        stride,
        holdout: conf.pick_or(a.holdout, "holdout", 0)?,
    })
}

struct Split {
    patches: Vec<NoisyPair>,
    held_out: Vec<(String, NoisyPair)>,
    channels: usize,
}

/// Loads the dataset, holds out the last `holdout` pairs and cuts the rest into patches.
fn load_split(p: &Plan) -> anyhow::Result<Split> {
    let mut pairs = load_dataset(&p.data).with_context(|| format!("loading dataset {}", p.data.display()))?;
    if pairs.is_empty() {
        return Err(anyhow!("no <id>_clean.png / <id>_noisy.png pairs in {}", p.data.display()));
    }
    if p.holdout >= pairs.len() {
        return Err(anyhow!("holdout {} leaves no training pairs out of {}", p.holdout, pairs.len()));
    }
    let held_out = pairs.split_off(pairs.len() - p.holdout);
    let channels = pairs[0].1.clean.channels();
    let mut patches = Vec::new();
    for (id, pair) in &pairs {
        let clean = extract_patches(&pair.clean, p.patch, p.stride).with_context(|| format!("pair {id}"))?;
        let noisy = extract_patches(&pair.noisy, p.patch, p.stride).with_context(|| format!("pair {id}"))?;
        for (c, n) in clean.into_iter().zip(noisy) {
            patches.push(NoisyPair::new(c, n)?);
        }
    }
    Ok(Split { patches, held_out, channels })
}

fn fit<F>(p: &Plan, split: &Split, observe: F) -> Result<(DenoiserSpec, TrainOutcome), CliError>
where
    F: FnMut(StepEvent<'_>) -> interdiff::Result<()>,
{
    let spec = DenoiserSpec { channels: split.channels, ..p.spec };
    let out = train_loop_with(&split.patches, &p.cfg, &spec, observe).map_err(usage_if_invalid)?;
    Ok((spec, out))
}

fn header(cmd: &str, p: &Plan, patches: usize) {
    let c = &p.cfg;
    println!(
        "{cmd}: lr={:e} beta1={} beta2={} adam_eps={:e} batch={} iters={} loss={} charbonnier_eps={} patch={} stride={} patches={patches} base_channels={} depth={} seed={}",
        c.lr, c.beta1, c.beta2, c.adam_eps, c.batch_size, c.iterations, c.loss, c.charbonnier_eps, p.patch, p.stride,
        p.spec.base_channels, p.spec.depth, c.seed
    );
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: &TrainArgs, conf: &Config) -> Result<(), CliError> {
    let horizon = conf.pick_or(a.horizon, "T", TrainConfig::default().horizon)?;
    let out_model: PathBuf = conf.pick(a.out_model.clone(), "out-model")?.ok_or_else(|| missing("out-model"))?;
    let log = conf.pick(a.log.clone(), "log")?.unwrap_or_else(|| out_model.with_extension("loss.csv"));
    let every = conf.pick_or(a.checkpoint_every, "checkpoint-every", 0)?;
    let p = plan(&a.fit, conf, horizon)?;
    let split = load_split(&p)?;
    header("train", &p, split.patches.len());
    println!("T={horizon} training pairs={} held out={}", split.patches.len(), split.held_out.len());

    let started = Instant::now();
    let mut csv = String::from("iteration,loss,wall_ms\n");
    let progress_every = (p.cfg.iterations / 20).max(1);
    let spec_for_ckpt = DenoiserSpec { channels: split.channels, ..p.spec };
    let (spec, outcome) = fit(&p, &split, |e| {
        let _ = writeln!(csv, "{},{},{}", e.iteration, e.loss, started.elapsed().as_millis());
        if e.iteration % progress_every == 0 {
            eprintln!("iter {:>6}  loss {:.6}", e.iteration, e.loss);
        }
        if every > 0 && e.iteration % every == 0 {
            Checkpoint { spec: spec_for_ckpt, horizon, params: e.params.clone() }.save(&out_model)?;
        }
        Ok(())
    })?;
    Checkpoint { spec, horizon, params: outcome.params }.save(&out_model)?;
    write_file(&log, &csv)?;
    println!(
        "saved {} and {} after {} iterations ({:.1} s)",
        out_model.display(),
        log.display(),
        outcome.losses.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn parse_t_list(s: &str) -> Result<Vec<usize>, CliError> {
    let list = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<usize>().map_err(|e| CliError::Usage(format!("--T-list entry `{x}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err(CliError::Usage("--T-list is empty".into()));
    }
    if list.contains(&0) {
        return Err(CliError::Usage("--T-list entries must be at least 1".into()));
    }
    Ok(list)
}

pub fn sweep(a: &SweepArgs, conf: &Config) -> Result<(), CliError> {
    let list = parse_t_list(&conf.pick(a.t_list.clone(), "T-list")?.unwrap_or_else(|| "10,30,50,70,90".into()))?;
    let sampler = conf.pick_or(a.sampler, "sampler", SamplerKind::Improve)?;
    let out = conf.pick(a.out.clone(), "out")?;
    let p = plan(&a.fit, conf, list[0])?;
    let split = load_split(&p)?;
    header("sweep-T", &p, split.patches.len());
    let eval_set: Vec<NoisyPair> = if split.held_out.is_empty() {
        eprintln!("warning: no held-out pairs, evaluating on the training images");
        load_dataset(&p.data)?.into_iter().map(|(_, q)| q).collect()
    } else {
        split.held_out.iter().map(|(_, q)| q.clone()).collect()
    };

    let mut csv = String::from("T,psnr,ssim\n");
    for &horizon in &list {
        let plan_t = Plan { cfg: TrainConfig { horizon, ..p.cfg.clone() }, data: p.data.clone(), ..p };
        let (spec, outcome) = fit(&plan_t, &split, |_| Ok(()))?;
        let mut den = NetDenoiser::new(Unet::new(spec)?, outcome.params)?;
        let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
        for pair in &eval_set {
            let (x, _) = run_sampler(&pair.noisy, &mut den, horizon, sampler, false)?;
            let x = x.clamped();
            psnr_sum += psnr(&x, &pair.clean, 1.0)?;
            ssim_sum += ssim(&x, &pair.clean, &SsimParams::default())?;
        }
        let n = eval_set.len() as f64;
        let row = format!("{horizon},{:.4},{:.6}", psnr_sum / n, ssim_sum / n);
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    if let Some(path) = out {
        write_file(&path, &csv)?;
    }
    Ok(())
}
