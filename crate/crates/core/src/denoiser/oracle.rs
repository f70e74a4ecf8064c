//! Synthetic denoisers with a controllable error model.
//!
//! An oracle knows the clean image `x0` and the noisy endpoint `xT` and
//! returns `x0 + b + eta + kappa * (x_t - ideal_t)`, where `eta` is fresh
//! Gaussian noise per call and `ideal_t` is the exact interpolant at step `t`.

use rand_distr::{Distribution, StandardNormal};

use super::Denoiser;
use crate::diffusion::interpolate;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{seeded, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleKind {
    Perfect,
    Biased { bias: f64 },
    IidNoise { sigma: f64, seed: u64 },
    StateCoupled { kappa: f64, sigma: f64, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct OracleDenoiser {
    x0: Image,
    noisy: Image,
    horizon: usize,
    bias: f64,
    sigma: f64,
    kappa: f64,
    rng: StreamRng,
    noise_log: Option<Vec<(usize, Image)>>,
}

impl OracleDenoiser {
    pub fn new(kind: OracleKind, x0: Image, noisy: Image, horizon: usize) -> Result<Self> {
        let (bias, sigma, kappa, seed) = match kind {
            OracleKind::Perfect => (0.0, 0.0, 0.0, 0),
            OracleKind::Biased { bias } => (bias, 0.0, 0.0, 0),
            OracleKind::IidNoise { sigma, seed } => (0.0, sigma, 0.0, seed),
            OracleKind::StateCoupled { kappa, sigma, seed } => (0.0, sigma, kappa, seed),
        };
        Self::with_terms(x0, noisy, horizon, bias, sigma, kappa, seed)
    }

    /// Oracle with all three error terms set directly.
    pub fn with_terms(
        x0: Image,
        noisy: Image,
        horizon: usize,
        bias: f64,
        sigma: f64,
        kappa: f64,
        seed: u64,
    ) -> Result<Self> {
        x0.same_shape(&noisy)?;
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) || !bias.is_finite() || !kappa.is_finite() {
            return Err(Error::InvalidConfig(format!("bad error model b={bias} sigma={sigma} kappa={kappa}")));
        }
        Ok(Self { x0, noisy, horizon, bias, sigma, kappa, rng: seeded(seed), noise_log: None })
    }

    /// Keeps a copy of every noise draw, tagged with the step that consumed it.
    pub fn recording(mut self) -> Self {
        self.noise_log = Some(Vec::new());
        self
    }

    pub fn noise_log(&self) -> &[(usize, Image)] {
        self.noise_log.as_deref().unwrap_or(&[])
    }

    pub fn clean(&self) -> &Image {
        &self.x0
    }

    pub fn noisy(&self) -> &Image {
        &self.noisy
    }
}

impl Denoiser for OracleDenoiser {
    fn estimate(&mut self, x_t: &Image, t: usize, horizon: usize) -> Result<Image> {
        if horizon != self.horizon {
            return Err(Error::InvalidConfig(format!("oracle built for T={} queried with T={horizon}", self.horizon)));
        }
        self.x0.same_shape(x_t)?;
        let mut out = self.x0.data().to_vec();
        if self.bias != 0.0 {
            out.iter_mut().for_each(|v| *v += self.bias);
        }
        if self.sigma > 0.0 {
            let eta: Vec<f64> = (0..out.len())
                .map(|_| self.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut self.rng))
                .collect();
            out.iter_mut().zip(&eta).for_each(|(v, e)| *v += e);
            if let Some(log) = &mut self.noise_log {
                let (w, h, c) = x_t.shape();
                log.push((t, Image::new(w, h, c, eta)?));
            }
        }
        if self.kappa != 0.0 {
            let ideal = interpolate(&self.x0, &self.noisy, t, self.horizon)?;
            for ((v, x), i) in out.iter_mut().zip(x_t.data()).zip(ideal.data()) {
                *v += self.kappa * (x - i);
            }
        }
        let (w, h, c) = x_t.shape();
        Image::new(w, h, c, out)
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (Image, Image) {
        let x0 = Image::from_fn(4, 4, 1, |x, y, _| (x + y) as f64 / 8.0).unwrap();
        let xt = Image::from_fn(4, 4, 1, |x, y, _| ((x * y) % 5) as f64 / 5.0).unwrap();
        (x0, xt)
    }

    #[test]
    fn perfect_returns_clean() {
        let (x0, xt) = pair();
        let mut o = OracleDenoiser::new(OracleKind::Perfect, x0.clone(), xt.clone(), 5).unwrap();
        assert_eq!(o.estimate(&xt, 5, 5).unwrap(), x0);
    }

    #[test]
    fn bias_is_added_everywhere() {
        let (x0, xt) = pair();
        let mut o = OracleDenoiser::new(OracleKind::Biased { bias: 0.1 }, x0.clone(), xt.clone(), 5).unwrap();
        let out = o.estimate(&xt, 3, 5).unwrap();
        for (a, b) in out.data().iter().zip(x0.data()) {
            assert_eq!(*a, b + 0.1);
        }
    }

    #[test]
    fn coupling_vanishes_on_the_interpolant() {
        let (x0, xt) = pair();
        let kind = OracleKind::StateCoupled { kappa: 0.7, sigma: 0.05, seed: 11 };
        let mut coupled = OracleDenoiser::new(kind, x0.clone(), xt.clone(), 5).unwrap();
        let mut plain =
            OracleDenoiser::new(OracleKind::IidNoise { sigma: 0.05, seed: 11 }, x0.clone(), xt.clone(), 5).unwrap();
        let ideal = interpolate(&x0, &xt, 2, 5).unwrap();
        assert_eq!(coupled.estimate(&ideal, 2, 5).unwrap(), plain.estimate(&ideal, 2, 5).unwrap());
    }

    #[test]
    fn draws_are_reproducible() {
        let (x0, xt) = pair();
        let kind = OracleKind::IidNoise { sigma: 0.1, seed: 42 };
        let mut a = OracleDenoiser::new(kind, x0.clone(), xt.clone(), 3).unwrap();
        let mut b = OracleDenoiser::new(kind, x0.clone(), xt.clone(), 3).unwrap();
        for t in (1..=3).rev() {
            let ea = a.estimate(&xt, t, 3).unwrap();
            assert_eq!(ea, b.estimate(&xt, t, 3).unwrap());
        }
        let mut fresh = OracleDenoiser::new(kind, x0.clone(), xt.clone(), 3).unwrap();
        let mut other = OracleDenoiser::new(OracleKind::IidNoise { sigma: 0.1, seed: 43 }, x0, xt.clone(), 3).unwrap();
        assert_ne!(fresh.estimate(&xt, 3, 3).unwrap(), other.estimate(&xt, 3, 3).unwrap());
    }

    #[test]
    fn rejects_negative_sigma_and_wrong_horizon() {
        let (x0, xt) = pair();
        assert!(OracleDenoiser::with_terms(x0.clone(), xt.clone(), 3, 0.0, -1.0, 0.0, 0).is_err());
        let mut o = OracleDenoiser::new(OracleKind::Perfect, x0, xt.clone(), 3).unwrap();
        assert!(o.estimate(&xt, 1, 4).is_err());
    }
}
