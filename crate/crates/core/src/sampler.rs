//! Reverse-process samplers.
//!
//! All three start from the observed noisy image `xT`, which stays fixed for
//! the whole trajectory:
//!
//! - origin: `x_{t-1} = (1 - (t-1)/T) S(x_t, t) + ((t-1)/T) xT`
//! - improve: `x_{t-1} = x_t - x~_t + x~_{t-1}` where `x~_s` re-blends the
//!   same estimate `S(x_t, t)` with `xT` at step `s`
//! - direct: one call, `S(xT, T)`
//!
//! Intermediate states are never clamped.

use std::fmt;
use std::str::FromStr;

use crate::denoiser::Denoiser;
use crate::diffusion::alpha;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Origin,
    Improve,
    Direct,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Origin, SamplerKind::Improve, SamplerKind::Direct];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Origin => "origin",
            SamplerKind::Improve => "improve",
            SamplerKind::Direct => "direct",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "origin" => Ok(SamplerKind::Origin),
            "improve" => Ok(SamplerKind::Improve),
            "direct" => Ok(SamplerKind::Direct),
            other => Err(Error::InvalidConfig(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Recorded intermediates of one sampling run.
#[derive(Clone, Debug, Default)]
pub struct SampleTrace {
    /// `(s, x_s)` after each step, in the order produced. Empty unless requested.
    pub snapshots: Vec<(usize, Image)>,
    pub denoiser_calls: usize,
}

fn check_step(t: usize, horizon: usize) -> Result<()> {
    if t == 0 || t > horizon {
        return Err(Error::StepOutOfRange { t, horizon });
    }
    Ok(())
}

/// Origin update given the estimate `s = S(x_t, t)`.
pub fn origin_update(estimate: &Image, noisy: &Image, t: usize, horizon: usize) -> Result<Image> {
    check_step(t, horizon)?;
    let a = alpha(t - 1, horizon)?;
    estimate.zip_map(noisy, |s, n| (1.0 - a) * s + a * n)
}

/// Improve update given the estimate `s = S(x_t, t)`.
pub fn improve_update(x_t: &Image, estimate: &Image, noisy: &Image, t: usize, horizon: usize) -> Result<Image> {
    check_step(t, horizon)?;
    x_t.same_shape(estimate)?;
    x_t.same_shape(noisy)?;
    let a_t = alpha(t, horizon)?;
    let a_prev = alpha(t - 1, horizon)?;
    let data = x_t
        .data()
        .iter()
        .zip(estimate.data())
        .zip(noisy.data())
        .map(|((&x, &s), &n)| {
            let blend_t = (1.0 - a_t) * s + a_t * n;
            let blend_prev = (1.0 - a_prev) * s + a_prev * n;
            (x - blend_t) + blend_prev
        })
        .collect();
    let (w, h, c) = x_t.shape();
    Image::new(w, h, c, data)
}

/// One origin step from `x_t` to `x_{t-1}`.
pub fn origin_step<D: Denoiser + ?Sized>(
    x_t: &Image,
    t: usize,
    horizon: usize,
    noisy: &Image,
    denoiser: &mut D,
) -> Result<Image> {
    check_step(t, horizon)?;
    x_t.same_shape(noisy)?;
    let s = denoiser.estimate(x_t, t, horizon)?;
    origin_update(&s, noisy, t, horizon)
}

/// One improve step from `x_t` to `x_{t-1}`, with a single denoiser call.
pub fn improve_step<D: Denoiser + ?Sized>(
    x_t: &Image,
    t: usize,
    horizon: usize,
    noisy: &Image,
    denoiser: &mut D,
) -> Result<Image> {
    check_step(t, horizon)?;
    x_t.same_shape(noisy)?;
    let s = denoiser.estimate(x_t, t, horizon)?;
    improve_update(x_t, &s, noisy, t, horizon)
}

/// Runs a sampler from the observed noisy image down to a clean estimate.
pub fn run_sampler<D: Denoiser + ?Sized>(
    noisy: &Image,
    denoiser: &mut D,
    horizon: usize,
    kind: SamplerKind,
    record: bool,
) -> Result<(Image, SampleTrace)> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut trace = SampleTrace::default();
    if kind == SamplerKind::Direct {
        let out = denoiser.estimate(noisy, horizon, horizon)?;
        trace.denoiser_calls = 1;
        if record {
            trace.snapshots.push((0, out.clone()));
        }
        return Ok((out, trace));
    }
    let mut x = noisy.clone();
    for t in (1..=horizon).rev() {
        x = match kind {
            SamplerKind::Origin => origin_step(&x, t, horizon, noisy, denoiser)?,
            SamplerKind::Improve => improve_step(&x, t, horizon, noisy, denoiser)?,
            SamplerKind::Direct => unreachable!(),
        };
        trace.denoiser_calls += 1;
        if record {
            trace.snapshots.push((t - 1, x.clone()));
        }
    }
    Ok((x, trace))
}
