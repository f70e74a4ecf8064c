//! PSNR and SSIM.
//!
//! SSIM uses the usual 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
//! K2 = 0.03, evaluated only where the window fits entirely inside the image.

use crate::error::{Error, Result};
use crate::image::{quantize, Image};

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let ss: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(ss / a.len() as f64)
}

/// PSNR over 8-bit codes with peak 255, for comparison with integer toolchains.
pub fn psnr_u8(a: &Image, b: &Image) -> Result<f64> {
    psnr(&to_codes(a), &to_codes(b), 255.0)
}

fn to_codes(img: &Image) -> Image {
    img.map(|v| quantize(v) as f64)
}

/// Formats a PSNR value, writing `inf` for identical inputs.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, peak: 1.0 }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Valid-region separable filtering of one channel plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM, averaged over channels.
pub fn ssim(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    a.same_shape(b)?;
    let (w, h, c) = a.shape();
    if w < p.window || h < p.window {
        return Err(Error::TooSmallForWindow { window: p.window });
    }
    let taps = p.taps();
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let mut total = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = (0..w * h).map(|i| a.data()[i * c + ch]).collect();
        let pb: Vec<f64> = (0..w * h).map(|i| b.data()[i * c + ch]).collect();
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
        let mu_a = filter_valid(&pa, w, h, &taps);
        let mu_b = filter_valid(&pb, w, h, &taps);
        let e_aa = filter_valid(&sq(&pa, &pa), w, h, &taps);
        let e_bb = filter_valid(&sq(&pb, &pb), w, h, &taps);
        let e_ab = filter_valid(&sq(&pa, &pb), w, h, &taps);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// SSIM over 8-bit codes with peak 255.
pub fn ssim_u8(a: &Image, b: &Image) -> Result<f64> {
    ssim(&to_codes(a), &to_codes(b), &SsimParams { peak: 255.0, ..SsimParams::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{augment, AugmentOp};
    use crate::rng::seeded;
    use rand::Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = seeded(seed);
        Image::from_fn(n, n, 3, |_, _, _| rng.random::<f64>() * 0.8 + 0.1).unwrap()
    }

    #[test]
    fn psnr_analytic_values() {
        let x = random_image(16, 1).map(|v| v * 0.5);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(format_db(f64::INFINITY), "inf");
        let off = x.map(|v| v + 0.1);
        assert!((psnr(&x, &off, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let off = x.map(|v| v + 0.01);
        assert!((psnr(&x, &off, 1.0).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&x, &Image::zeros(4, 4, 3).unwrap(), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_nested_perturbations() {
        let x = random_image(12, 2);
        let mut prev = f64::INFINITY;
        for k in 1..10 {
            let y = Image::from_fn(12, 12, 3, |xx, yy, c| {
                let v = x.get(xx, yy, c);
                if (yy * 12 + xx) % 10 < k {
                    v + 0.05
                } else {
                    v
                }
            })
            .unwrap();
            let p = psnr(&x, &y, 1.0).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn window_weights_sum_to_one() {
        let taps = SsimParams::default().taps();
        let total: f64 = taps.iter().flat_map(|a| taps.iter().map(move |b| a * b)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let x = random_image(16, 3);
        assert!((ssim(&x, &x, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
        let a = Image::filled(16, 16, 1, 0.2).unwrap();
        let b = Image::filled(16, 16, 1, 0.4).unwrap();
        let c1 = 1e-4;
        let expect = (2.0 * 0.2 * 0.4 + c1) / (0.04 + 0.16 + c1);
        let got = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert!((got - 0.800_100).abs() < 1e-6);
    }

    #[test]
    fn ssim_symmetric_bounded_and_augment_invariant() {
        for seed in 0..5 {
            let a = random_image(16, 10 + seed);
            let b = random_image(16, 20 + seed);
            let p = SsimParams::default();
            let ab = ssim(&a, &b, &p).unwrap();
            assert!((ab - ssim(&b, &a, &p).unwrap()).abs() < 1e-15);
            assert!(ab < 1.0);
            for op in AugmentOp::ALL {
                let (ra, rb) = (augment(&a, op).unwrap(), augment(&b, op).unwrap());
                assert!((ssim(&ra, &rb, &p).unwrap() - ab).abs() < 1e-9);
                assert!((psnr(&ra, &rb, 1.0).unwrap() - psnr(&a, &b, 1.0).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::zeros(10, 16, 1).unwrap();
        assert!(matches!(ssim(&a, &a, &SsimParams::default()), Err(Error::TooSmallForWindow { .. })));
    }

    #[test]
    fn eight_bit_modes() {
        let a = random_image(16, 30);
        let b = a.map(|v| (v + 0.02).min(1.0));
        let p8 = psnr_u8(&a, &b).unwrap();
        assert!((p8 - psnr(&a, &b, 1.0).unwrap()).abs() < 0.5);
        assert!((ssim_u8(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }
}
