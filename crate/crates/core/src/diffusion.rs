//! The linear-interpolation forward process `x_t = (1 - t/T) x0 + (t/T) xT`.

use crate::error::{Error, Result};
use crate::image::Image;

/// Diffusion horizon `T` with blend weight `alpha(t) = t / T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    horizon: usize,
}

impl Schedule {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("diffusion horizon T must be at least 1".into()));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        alpha(t, self.horizon)
    }

    pub fn interpolate(&self, x0: &Image, x_t_max: &Image, t: usize) -> Result<Image> {
        interpolate(x0, x_t_max, t, self.horizon)
    }
}

pub fn alpha(t: usize, horizon: usize) -> Result<f64> {
    if horizon == 0 || t > horizon {
        return Err(Error::StepOutOfRange { t, horizon });
    }
    Ok(t as f64 / horizon as f64)
}

/// `(1 - alpha) * x0 + alpha * noisy`, elementwise.
pub fn interpolate(x0: &Image, noisy: &Image, t: usize, horizon: usize) -> Result<Image> {
    let a = alpha(t, horizon)?;
    x0.zip_map(noisy, |c, n| (1.0 - a) * c + a * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(0, 70).unwrap(), 0.0);
        assert_eq!(alpha(70, 70).unwrap(), 1.0);
        assert_eq!(alpha(7, 10).unwrap(), 0.7);
        assert!(matches!(alpha(11, 10), Err(Error::StepOutOfRange { .. })));
        assert!(Schedule::new(0).is_err());
    }

    #[test]
    fn endpoints_and_midpoint() {
        let x0 = Image::new(2, 1, 1, vec![0.2, 0.9]).unwrap();
        let xt = Image::new(2, 1, 1, vec![0.8, 0.1]).unwrap();
        assert_eq!(interpolate(&x0, &xt, 0, 10).unwrap(), x0);
        assert_eq!(interpolate(&x0, &xt, 10, 10).unwrap(), xt);
        let mid = interpolate(&x0, &xt, 5, 10).unwrap();
        assert!((mid.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Image::zeros(2, 2, 1).unwrap();
        let b = Image::zeros(2, 2, 3).unwrap();
        assert!(matches!(interpolate(&a, &b, 1, 2), Err(Error::ShapeMismatch { .. })));
    }

    proptest! {
        #[test]
        fn convex_and_linear_in_t(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..32),
            horizon in 1usize..200,
            frac in 0.0f64..1.0,
        ) {
            let n = pairs.len();
            let x0 = Image::new(n, 1, 1, pairs.iter().map(|p| p.0).collect()).unwrap();
            let xt = Image::new(n, 1, 1, pairs.iter().map(|p| p.1).collect()).unwrap();
            let t = ((horizon as f64 * frac) as usize).min(horizon - 1);
            let cur = interpolate(&x0, &xt, t, horizon).unwrap();
            let next = interpolate(&x0, &xt, t + 1, horizon).unwrap();
            for (i, &(a, b)) in pairs.iter().enumerate() {
                let v = cur.data()[i];
                prop_assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
                let step = next.data()[i] - v;
                prop_assert!((step - (b - a) / horizon as f64).abs() <= 1e-12);
            }
        }
    }
}
