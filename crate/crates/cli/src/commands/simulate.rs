use std::path::PathBuf;

use anyhow::Context;
use interdiff::error_sim::{monte_carlo, report_csv, ErrorModel};
use interdiff::Image;

use super::usage_if_invalid;
use crate::config::Config;
use crate::{CliError, SimulateArgs};

pub fn simulate(a: &SimulateArgs, conf: &Config) -> Result<(), CliError> {
    let horizon = conf.pick_or(a.horizon, "T", 16)?;
    let trials = conf.pick_or(a.trials, "trials", 2000)?;
    let size = conf.pick_or(a.size, "size", 1)?;
    let seed = conf.seed(a.seed)?;
    let out: Option<PathBuf> = conf.pick(a.out.clone(), "out")?;
    let em = ErrorModel {
        bias: conf.pick_or(a.bias, "bias", 0.0)?,
        sigma: conf.pick_or(a.sigma, "sigma", 0.05)?,
        kappa: conf.pick_or(a.kappa, "kappa", 0.0)?,
    };
    em.validate().map_err(usage_if_invalid)?;
    if horizon == 0 || trials == 0 || size == 0 {
        return Err(CliError::Usage("--T, --trials and --size must be at least 1".into()));
    }

    // Mid-grey scene observed with a uniform offset standing in for sensor noise.
    let x0 = Image::filled(size, size, 1, 0.5)?;
    let noisy = Image::filled(size, size, 1, 0.6)?;
    let s = monte_carlo(trials, &x0, &noisy, horizon, &em, seed)?;
    if let Some(path) = &out {
        std::fs::write(path, report_csv(&s, horizon, &em)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "T={horizon} trials={trials} b={} sigma={} kappa={} rms_origin={:.6e} rms_improve={:.6e} ratio={:.4} sqrt_T={:.4} improve_not_worse={:.4}",
        em.bias,
        em.sigma,
        em.kappa,
        s.rms_origin,
        s.rms_improve,
        s.ratio,
        (horizon as f64).sqrt(),
        s.improve_not_worse
    );
    Ok(())
}
