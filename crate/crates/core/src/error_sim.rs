//! Monte-Carlo comparison of origin and improve sampling under a denoiser
//! with injected error `S(x_t, t) = x0 + b + eta_t + kappa (x_t - ideal_t)`.
//!
//! Both samplers in a trial consume the same noise stream, so their final
//! errors form a matched pair.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::denoiser::OracleDenoiser;
use crate::diffusion::interpolate;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::derive_seed;
use crate::sampler::{improve_step, origin_step};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel {
    pub bias: f64,
    pub sigma: f64,
    pub kappa: f64,
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidConfig(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !self.bias.is_finite() || !self.kappa.is_finite() {
            return Err(Error::InvalidConfig("bias and kappa must be finite".into()));
        }
        Ok(())
    }

    fn oracle(&self, x0: &Image, noisy: &Image, horizon: usize, seed: u64) -> Result<OracleDenoiser> {
        OracleDenoiser::with_terms(x0.clone(), noisy.clone(), horizon, self.bias, self.sigma, self.kappa, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    /// RMS of `x0_hat - x0` for origin sampling.
    pub final_err_origin: f64,
    pub final_err_improve: f64,
    /// RMS distance to the exact interpolant after each step, from `t = T-1` down to 0.
    pub origin_trajectory: Vec<f64>,
    pub improve_trajectory: Vec<f64>,
}

/// Runs both samplers once with matched error streams.
pub fn run_trial(x0: &Image, noisy: &Image, horizon: usize, em: &ErrorModel, seed: u64) -> Result<TrialReport> {
    em.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut s_origin = em.oracle(x0, noisy, horizon, seed)?;
    let mut s_improve = em.oracle(x0, noisy, horizon, seed)?;
    let mut xo = noisy.clone();
    let mut xi = noisy.clone();
    let mut origin_trajectory = Vec::with_capacity(horizon);
    let mut improve_trajectory = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        xo = origin_step(&xo, t, horizon, noisy, &mut s_origin)?;
        xi = improve_step(&xi, t, horizon, noisy, &mut s_improve)?;
        let ideal = interpolate(x0, noisy, t - 1, horizon)?;
        origin_trajectory.push(xo.rms_diff(&ideal)?);
        improve_trajectory.push(xi.rms_diff(&ideal)?);
    }
    Ok(TrialReport {
        final_err_origin: xo.rms_diff(x0)?,
        final_err_improve: xi.rms_diff(x0)?,
        origin_trajectory,
        improve_trajectory,
    })
}

#[derive(Clone, Debug)]
pub struct McSummary {
    pub trials: Vec<TrialReport>,
    pub mean_origin: f64,
    pub stdev_origin: f64,
    pub mean_improve: f64,
    pub stdev_improve: f64,
    /// Root-mean-square of the per-trial final errors.
    pub rms_origin: f64,
    pub rms_improve: f64,
    /// `rms_origin / rms_improve`; 1 when both are zero.
    pub ratio: f64,
    /// Fraction of trials where improve's error is no larger than origin's.
    pub improve_not_worse: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Runs `trials` independent paired trials; trial `i` uses a seed derived from `(seed, i)`.
pub fn monte_carlo(
    trials: usize,
    x0: &Image,
    noisy: &Image,
    horizon: usize,
    em: &ErrorModel,
    seed: u64,
) -> Result<McSummary> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let reports = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(x0, noisy, horizon, em, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let eo: Vec<f64> = reports.iter().map(|r| r.final_err_origin).collect();
    let ei: Vec<f64> = reports.iter().map(|r| r.final_err_improve).collect();
    let (mean_origin, stdev_origin) = mean_sd(&eo);
    let (mean_improve, stdev_improve) = mean_sd(&ei);
    let (rms_origin, rms_improve) = (rms(&eo), rms(&ei));
    let ratio = if rms_improve == 0.0 {
        if rms_origin == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        rms_origin / rms_improve
    };
    let wins = eo.iter().zip(&ei).filter(|(o, i)| i <= o).count();
    Ok(McSummary {
        trials: reports,
        mean_origin,
        stdev_origin,
        mean_improve,
        stdev_improve,
        rms_origin,
        rms_improve,
        ratio,
        improve_not_worse: wins as f64 / trials as f64,
    })
}

/// Final outputs of both samplers when the error does not depend on the state.
///
/// `draws[t - 1]` is the noise consumed at step `t`. Unrolling the
/// recursions gives `origin = x0 + e_1` and `improve = x0 + mean(e_1..e_T)`
/// with `e_t = b + eta_t`.
pub fn closed_form_final(em: &ErrorModel, x0: &Image, draws: &[Image]) -> Result<(Image, Image)> {
    if em.kappa != 0.0 {
        return Err(Error::InvalidConfig("closed form requires kappa = 0".into()));
    }
    if draws.is_empty() {
        return Err(Error::InvalidConfig("need one draw per step".into()));
    }
    for d in draws {
        x0.same_shape(d)?;
    }
    let horizon = draws.len() as f64;
    let origin = x0.zip_map(&draws[0], |x, e| x + (em.bias + e))?;
    let mut sum = vec![0.0; x0.len()];
    for d in draws {
        for (s, e) in sum.iter_mut().zip(d.data()) {
            *s += em.bias + e;
        }
    }
    let (w, h, c) = x0.shape();
    let improve = Image::new(w, h, c, x0.data().iter().zip(&sum).map(|(x, s)| x + s / horizon).collect())?;
    Ok((origin, improve))
}

/// CSV report with columns `trial,T,b,sigma,kappa,err_origin,err_improve`.
pub fn report_csv(summary: &McSummary, horizon: usize, em: &ErrorModel) -> String {
    let mut out = String::from("trial,T,b,sigma,kappa,err_origin,err_improve\n");
    for (i, r) in summary.trials.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{horizon},{},{},{},{:.12e},{:.12e}",
            em.bias, em.sigma, em.kappa, r.final_err_origin, r.final_err_improve
        );
    }
    out
}
