use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use interdiff::image::load_image;
use interdiff::metrics::{psnr, ssim, SsimParams};
use interdiff::synth::find_pairs;

use crate::config::Config;
use crate::{CliError, EvalArgs};

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn score(reference: &PathBuf, test: &PathBuf) -> anyhow::Result<(f64, f64)> {
    let r = load_image(reference)?;
    let t = load_image(test)?;
    Ok((psnr(&t, &r, 1.0)?, ssim(&t, &r, &SsimParams::default())?))
}

pub fn eval(a: &EvalArgs, conf: &Config) -> Result<(), CliError> {
    let dir: Option<PathBuf> = conf.pick(a.pairs.clone(), "pairs")?;
    let suffix = conf.pick_or(a.suffix.clone(), "suffix", "denoised".to_string())?;
    let reference = conf.pick_or(a.reference.clone(), "reference", "clean".to_string())?;
    let out: Option<PathBuf> = conf.pick(a.out.clone(), "out")?;

    let mut jobs = Vec::new();
    for spec in &a.pair {
        let Some((r, t)) = spec.split_once(',') else {
            return Err(CliError::Usage(format!("--pair expects REF,TEST, got `{spec}`")));
        };
        let t = PathBuf::from(t);
        let id = t.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        jobs.push((id, PathBuf::from(r), t));
    }
    if let Some(dir) = &dir {
        jobs.extend(find_pairs(dir, &reference, &suffix).with_context(|| format!("scanning {}", dir.display()))?);
    }
    if dir.is_none() && jobs.is_empty() {
        return Err(CliError::Usage("give --pairs DIR or at least one --pair REF,TEST".into()));
    }
    if jobs.is_empty() {
        return Err(anyhow!("no <id>_{reference}.png / <id>_{suffix}.png pairs found").into());
    }

    let mut csv = String::from("id,psnr,ssim\n");
    let mut rows = Vec::new();
    for (id, r, t) in &jobs {
        match score(r, t) {
            Ok((p, s)) => {
                let _ = writeln!(csv, "{id},{},{s:.6}", fmt_db(p));
                rows.push((p, s));
            }
            Err(e) => eprintln!("skipping {id}: {e:#}"),
        }
    }
    if rows.is_empty() {
        return Err(anyhow!("all {} pairs were skipped", jobs.len()).into());
    }
    let finite: Vec<f64> = rows.iter().map(|r| r.0).filter(|p| p.is_finite()).collect();
    let mean_psnr = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let mean_ssim = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let _ = writeln!(csv, "mean,{},{mean_ssim:.6}", fmt_db(mean_psnr));

    match out {
        Some(path) => {
            std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "evaluated {} of {} pairs: mean psnr {} ssim {mean_ssim:.6}",
                rows.len(),
                jobs.len(),
                fmt_db(mean_psnr)
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}
