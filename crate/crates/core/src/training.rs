//! Interpolation-supervised training: sample `t`, blend the pair, regress the
//! clean image, step Adam.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::augment::{augment, AugmentOp};
use crate::denoiser::{DenoiserParams, DenoiserSpec, Unet};
use crate::diffusion::interpolate;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, seeded, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `sqrt(||pred - gt||^2 + eps^2)` over the whole image.
    Charbonnier,
    /// `||pred - gt||^2`.
    L2,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Charbonnier => "charbonnier",
            LossKind::L2 => "l2",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charbonnier" => Ok(LossKind::Charbonnier),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub horizon: usize,
    pub loss: LossKind,
    pub charbonnier_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            iterations: 2000,
            horizon: 10,
            loss: LossKind::Charbonnier,
            charbonnier_eps: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps < 0.0 {
            return bad("adam_eps must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon T must be at least 1");
        }
        if self.charbonnier_eps.is_nan() || self.charbonnier_eps < 0.0 {
            return bad("charbonnier_eps must be non-negative");
        }
        Ok(())
    }
}

/// Adam moment accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// A clean image and its real noisy counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyPair {
    pub clean: Image,
    pub noisy: Image,
}

impl NoisyPair {
    pub fn new(clean: Image, noisy: Image) -> Result<Self> {
        clean.same_shape(&noisy)?;
        Ok(Self { clean, noisy })
    }

    /// Applies the same spatial op to both members.
    pub fn augmented(&self, op: AugmentOp) -> Result<Self> {
        Ok(Self { clean: augment(&self.clean, op)?, noisy: augment(&self.noisy, op)? })
    }
}

pub fn l2_loss(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_shape(gt)?;
    Ok(pred.data().iter().zip(gt.data()).map(|(p, g)| (p - g) * (p - g)).sum())
}

pub fn charbonnier_loss(pred: &Image, gt: &Image, eps: f64) -> Result<f64> {
    Ok((l2_loss(pred, gt)? + eps * eps).sqrt())
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss_and_grad(kind: LossKind, pred: &Image, gt: &Image, eps: f64) -> Result<(f64, Image)> {
    pred.same_shape(gt)?;
    let residual: Vec<f64> = pred.data().iter().zip(gt.data()).map(|(p, g)| p - g).collect();
    let sq: f64 = residual.iter().map(|r| r * r).sum();
    let (value, scale) = match kind {
        LossKind::L2 => (sq, 2.0),
        LossKind::Charbonnier => {
            let v = (sq + eps * eps).sqrt();
            (v, if v > 0.0 { 1.0 / v } else { 0.0 })
        }
    };
    let (w, h, c) = pred.shape();
    Ok((value, Image::new(w, h, c, residual.into_iter().map(|r| r * scale).collect())?))
}

/// Draws `t ~ Uniform{0..=T}` and returns the interpolant `x_t` with `t`.
pub fn sample_training_tuple<R: Rng + ?Sized>(pair: &NoisyPair, horizon: usize, rng: &mut R) -> Result<(Image, usize)> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let t = rng.random_range(0..=horizon);
    Ok((interpolate(&pair.clean, &pair.noisy, t, horizon)?, t))
}

/// One bias-corrected Adam step. Leaves everything untouched if any
/// gradient is non-finite.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::LengthMismatch { expected: params.len(), actual: grads.len() });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::LengthMismatch { expected: params.len(), actual: state.m.len() });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.step += 1;
    let step = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(step);
    let bc2 = 1.0 - cfg.beta2.powi(step);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// A model that can be trained by [`train_step`].
pub trait Trainable: Sync {
    fn param_count(&self) -> usize;

    /// Loss of `S(x_t, t)` against `target` and its gradient over the parameters.
    #[allow(clippy::too_many_arguments)]
    fn loss_and_param_grad(
        &self,
        params: &[f64],
        x_t: &Image,
        t: usize,
        horizon: usize,
        target: &Image,
        loss: LossKind,
        eps: f64,
    ) -> Result<(f64, Vec<f64>)>;
}

impl Trainable for Unet {
    fn param_count(&self) -> usize {
        Unet::param_count(self)
    }

    fn loss_and_param_grad(
        &self,
        params: &[f64],
        x_t: &Image,
        t: usize,
        horizon: usize,
        target: &Image,
        loss: LossKind,
        eps: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let (pred, cache) = self.forward_cached(params, x_t, t, horizon)?;
        let (value, upstream) = loss_and_grad(loss, &pred, target, eps)?;
        let (grads, _) = self.backward_cached(params, &cache, &upstream)?;
        Ok((value, grads))
    }
}

/// One optimizer step on a batch; returns the batch-mean loss.
///
/// Timesteps are drawn in batch order from `rng`; per-item gradients may be
/// computed in parallel but are summed in ascending batch index.
pub fn train_step<M: Trainable + ?Sized, R: Rng + ?Sized>(
    model: &M,
    params: &mut [f64],
    state: &mut OptimizerState,
    batch: &[NoisyPair],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tuples = batch.iter().map(|pair| sample_training_tuple(pair, cfg.horizon, rng)).collect::<Result<Vec<_>>>()?;
    let frozen: &[f64] = params;
    let results = batch
        .par_iter()
        .zip(tuples.par_iter())
        .map(|(pair, (x_t, t))| {
            model.loss_and_param_grad(frozen, x_t, *t, cfg.horizon, &pair.clean, cfg.loss, cfg.charbonnier_eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = model.param_count();
    let mut grads = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in &results {
        loss += l;
        for (acc, v) in grads.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grads.iter_mut().for_each(|g| *g *= scale);
    adam_update(params, &grads, state, cfg)?;
    Ok(loss * scale)
}

/// Per-iteration progress passed to a training observer.
pub struct StepEvent<'a> {
    /// 1-based iteration number.
    pub iteration: usize,
    pub loss: f64,
    pub params: &'a DenoiserParams,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    pub losses: Vec<f64>,
}

/// Runs `cfg.iterations` steps over shuffled batches of the dataset with a
/// random paired augmentation per item.
pub fn train_loop(dataset: &[NoisyPair], cfg: &TrainConfig, spec: &DenoiserSpec) -> Result<TrainOutcome> {
    train_loop_with(dataset, cfg, spec, |_| Ok(()))
}

/// [`train_loop`] with a callback after every step.
pub fn train_loop_with<F>(
    dataset: &[NoisyPair],
    cfg: &TrainConfig,
    spec: &DenoiserSpec,
    mut observe: F,
) -> Result<TrainOutcome>
where
    F: FnMut(StepEvent<'_>) -> Result<()>,
{
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let net = Unet::new(*spec)?;
    for pair in dataset {
        let (w, h, c) = pair.clean.shape();
        if c != spec.channels {
            return Err(Error::InvalidConfig(format!("dataset has {c} channels, model expects {}", spec.channels)));
        }
        spec.check_input(w, h)?;
    }
    let mut params = net.init_params(derive_seed(cfg.seed, 0));
    let mut state = OptimizerState::new(params.len());
    let mut rng: StreamRng = seeded(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let op = AugmentOp::random(&mut rng);
            batch.push(dataset[order[cursor]].augmented(op)?);
            cursor += 1;
        }
        let loss = train_step(&net, &mut params.values, &mut state, &batch, cfg, &mut rng)?;
        losses.push(loss);
        observe(StepEvent { iteration, loss, params: &params })?;
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(v: &[f64]) -> Image {
        Image::new(v.len(), 1, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn loss_values() {
        let a = img(&[0.3, 0.4]);
        assert_eq!(charbonnier_loss(&a, &a, 0.001).unwrap(), 0.001);
        let z = img(&[0.0, 0.0]);
        assert!((charbonnier_loss(&a, &z, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let direct = (0.25f64 + 1e-6).sqrt();
        assert!((charbonnier_loss(&a, &z, 0.001).unwrap() - direct).abs() < 1e-15);
        assert!((charbonnier_loss(&a, &z, 0.001).unwrap() - 0.500001).abs() < 1e-6);
        assert_eq!(l2_loss(&a, &a).unwrap(), 0.0);
        assert!((l2_loss(&a, &z).unwrap() - 0.25).abs() < 1e-15);
        assert!(l2_loss(&a, &img(&[1.0])).is_err());
    }

    #[test]
    fn charbonnier_gradient_matches_finite_differences() {
        let pred = img(&[0.1, -0.4, 0.7, 0.2]);
        let gt = img(&[0.3, 0.1, 0.5, 0.25]);
        let (value, g) = loss_and_grad(LossKind::Charbonnier, &pred, &gt, 1e-3).unwrap();
        for i in 0..4 {
            assert!((g.data()[i] - (pred.data()[i] - gt.data()[i]) / value).abs() < 1e-15);
            let h = 1e-5;
            let mut up = pred.data().to_vec();
            up[i] += h;
            let mut down = pred.data().to_vec();
            down[i] -= h;
            let fd = (charbonnier_loss(&img(&up), &gt, 1e-3).unwrap()
                - charbonnier_loss(&img(&down), &gt, 1e-3).unwrap())
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() / g.data()[i].abs() < 1e-6);
        }
        let (_, g2) = loss_and_grad(LossKind::L2, &pred, &gt, 0.0).unwrap();
        assert!((g2.data()[0] - 2.0 * (0.1 - 0.3)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn l2_is_squared_charbonnier_without_eps(v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50)) {
            let a = img(&v.iter().map(|p| p.0).collect::<Vec<_>>());
            let b = img(&v.iter().map(|p| p.1).collect::<Vec<_>>());
            let c = charbonnier_loss(&a, &b, 0.0).unwrap();
            prop_assert!((l2_loss(&a, &b).unwrap() - c * c).abs() <= 1e-12);
        }

        #[test]
        fn adam_is_elementwise(g in proptest::collection::vec(-3.0f64..3.0, 2..12), rot in 0usize..12) {
            let cfg = TrainConfig::default();
            let n = g.len();
            let p0: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
            let perm = |v: &[f64]| (0..n).map(|i| v[(i + rot) % n]).collect::<Vec<f64>>();
            let mut a = p0.clone();
            let mut sa = OptimizerState::new(n);
            adam_update(&mut a, &g, &mut sa, &cfg).unwrap();
            adam_update(&mut a, &g, &mut sa, &cfg).unwrap();
            let mut b = perm(&p0);
            let mut sb = OptimizerState::new(n);
            adam_update(&mut b, &perm(&g), &mut sb, &cfg).unwrap();
            adam_update(&mut b, &perm(&g), &mut sb, &cfg).unwrap();
            prop_assert_eq!(perm(&a), b);
            prop_assert!(sa.v.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn tuple_sampling_is_uniform_and_inclusive() {
        let pair = NoisyPair::new(img(&[0.2, 0.6]), img(&[0.9, 0.1])).unwrap();
        let horizon = 10;
        let mut rng = seeded(99);
        let mut counts = vec![0usize; horizon + 1];
        let draws = 100_000;
        for _ in 0..draws {
            let (x, t) = sample_training_tuple(&pair, horizon, &mut rng).unwrap();
            assert!(t <= horizon);
            if t == 0 {
                assert_eq!(x, pair.clean);
            }
            counts[t] += 1;
        }
        let p = 1.0 / (horizon + 1) as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (t, &c) in counts.iter().enumerate() {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sd, "t={t} count={c}");
        }
    }

    #[test]
    fn adam_single_and_double_step() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adam_update(&mut p, &[0.0], &mut s, &cfg).unwrap();
        assert_eq!(p, vec![1.0]);

        // Hand computation: m_hat = g, v_hat = g^2, step = -lr * g / (|g| + eps).
        let g = 0.5;
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adam_update(&mut p, &[g], &mut s, &cfg).unwrap();
        let expect = 1.0 - cfg.lr * g / (g.abs() + cfg.adam_eps);
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((p[0] - (1.0 - cfg.lr)).abs() < 1e-10);
        let before = p[0];
        adam_update(&mut p, &[g], &mut s, &cfg).unwrap();
        assert!(p[0] < before);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn adam_rejects_bad_input() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, 2.0];
        let mut s = OptimizerState::new(2);
        assert!(matches!(adam_update(&mut p, &[1.0], &mut s, &cfg), Err(Error::LengthMismatch { .. })));
        assert!(matches!(
            adam_update(&mut p, &[1.0, f64::NAN], &mut s, &cfg),
            Err(Error::NonFiniteGradient { index: 1 })
        ));
        assert_eq!(s.step, 0);
        assert_eq!(p, vec![1.0, 2.0]);
    }

    /// `S(x_t, t) = w` everywhere: a convex one-parameter problem.
    struct ConstantModel;

    impl Trainable for ConstantModel {
        fn param_count(&self) -> usize {
            1
        }

        fn loss_and_param_grad(
            &self,
            params: &[f64],
            x_t: &Image,
            _t: usize,
            _horizon: usize,
            target: &Image,
            loss: LossKind,
            eps: f64,
        ) -> Result<(f64, Vec<f64>)> {
            let pred = x_t.map(|_| params[0]);
            let (v, g) = loss_and_grad(loss, &pred, target, eps)?;
            Ok((v, vec![g.data().iter().sum()]))
        }
    }

    #[test]
    fn toy_model_loss_decreases_monotonically() {
        let clean = Image::filled(4, 4, 1, 0.5).unwrap();
        let noisy = Image::filled(4, 4, 1, 0.8).unwrap();
        let batch = vec![NoisyPair::new(clean, noisy).unwrap(); 4];
        let cfg = TrainConfig { lr: 2e-3, loss: LossKind::L2, ..TrainConfig::default() };
        let mut params = vec![0.0];
        let mut state = OptimizerState::new(1);
        let mut rng = seeded(1);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let l = train_step(&ConstantModel, &mut params, &mut state, &batch, &cfg, &mut rng).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    fn tiny_dataset() -> Vec<NoisyPair> {
        (0..3)
            .map(|k| {
                let clean = Image::from_fn(8, 8, 1, |x, y, _| ((x + y + k) % 4) as f64 / 4.0).unwrap();
                let noisy = clean.map(|v| (v + 0.1).min(1.0));
                NoisyPair::new(clean, noisy).unwrap()
            })
            .collect()
    }

    fn tiny_spec() -> DenoiserSpec {
        DenoiserSpec { channels: 1, base_channels: 4, depth: 1, time_embed_dim: 4 }
    }

    #[test]
    fn loop_is_deterministic_and_sized() {
        let cfg = TrainConfig { iterations: 5, batch_size: 2, seed: 3, ..TrainConfig::default() };
        let a = train_loop(&tiny_dataset(), &cfg, &tiny_spec()).unwrap();
        let b = train_loop(&tiny_dataset(), &cfg, &tiny_spec()).unwrap();
        assert_eq!(a.losses.len(), 5);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.params, b.params);
        assert!(a.losses.iter().all(|l| l.is_finite() && *l >= 0.0));
    }

    #[test]
    fn zero_iterations_returns_init() {
        let cfg = TrainConfig { iterations: 0, seed: 5, ..TrainConfig::default() };
        let out = train_loop(&tiny_dataset(), &cfg, &tiny_spec()).unwrap();
        assert!(out.losses.is_empty());
        let net = Unet::new(tiny_spec()).unwrap();
        assert_eq!(out.params, net.init_params(derive_seed(5, 0)));
        assert!(matches!(train_loop(&[], &cfg, &tiny_spec()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn paired_augmentation_moves_both_members_identically() {
        // Encode pixel indices so the permutation is visible.
        let clean = Image::from_fn(4, 4, 1, |x, y, _| (y * 4 + x) as f64).unwrap();
        let noisy = clean.map(|v| v + 100.0);
        let pair = NoisyPair::new(clean, noisy).unwrap();
        for op in AugmentOp::ALL {
            let aug = pair.augmented(op).unwrap();
            for (c, n) in aug.clean.data().iter().zip(aug.noisy.data()) {
                assert_eq!(c + 100.0, *n);
            }
        }
    }
}
