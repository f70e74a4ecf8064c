//! A small time-conditioned convolutional encoder-decoder with additive skips.
//!
//! Layout for `depth = D`, width `C`:
//!
//! ```text
//! enc0:      conv3x3(in -> C) . SiLU . +temb . conv3x3 . SiLU            -> s0
//! enc1..D:   conv3x3/2        . SiLU . +temb . conv3x3 . SiLU            -> s1..sD
//! decD-1..0: up2 . conv3x3    . SiLU . +s_k . +temb . conv3x3 . SiLU
//! out:       conv3x3(C -> in), no activation
//! ```
//!
//! Every stage keeps `C` channels. The time embedding enters each stage through
//! its own linear layer, broadcast over pixels.

use std::ops::Range;

use rand::Rng;

use super::layers::{self, Tensor};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenoiserSpec {
    /// Image channels (1 or 3).
    pub channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self { channels: 3, base_channels: 16, depth: 2, time_embed_dim: 32 }
    }
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::InvalidConfig("base_channels must be at least 1".into()));
        }
        if self.time_embed_dim == 0 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig("time_embed_dim must be even and positive".into()));
        }
        Ok(())
    }

    /// Checks that a `width` x `height` input survives `depth` halvings.
    pub fn check_input(&self, width: usize, height: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if !width.is_multiple_of(m) || !height.is_multiple_of(m) {
            return Err(Error::NotDivisible { width, height, depth: self.depth });
        }
        Ok(())
    }
}

/// A named contiguous run of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSlice {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Clone, Debug)]
struct Dense {
    weight: Range<usize>,
    bias: Range<usize>,
    fan_in: usize,
}

#[derive(Clone, Debug)]
struct Block {
    conv_a: Dense,
    temb: Dense,
    conv_b: Dense,
}

/// The network architecture for one [`DenoiserSpec`]: parameter layout plus
/// forward and backward passes over a flat parameter slice.
#[derive(Clone, Debug)]
pub struct Unet {
    spec: DenoiserSpec,
    enc: Vec<Block>,
    /// Indexed by level: `dec[k]` produces the level-`k` resolution.
    dec: Vec<Block>,
    out: Dense,
    slices: Vec<ParamSlice>,
    total: usize,
}

struct LayoutBuilder {
    slices: Vec<ParamSlice>,
    total: usize,
}

impl LayoutBuilder {
    fn dense(&mut self, name: &str, weights: usize, biases: usize, fan_in: usize) -> Dense {
        let weight = self.total..self.total + weights;
        let bias = weight.end..weight.end + biases;
        self.total = bias.end;
        self.slices.push(ParamSlice { name: format!("{name}.weight"), range: weight.clone() });
        self.slices.push(ParamSlice { name: format!("{name}.bias"), range: bias.clone() });
        Dense { weight, bias, fan_in }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize) -> Dense {
        self.dense(name, cout * cin * 9, cout, cin * 9)
    }

    fn block(&mut self, prefix: &str, cin: usize, c: usize, e: usize) -> Block {
        Block {
            conv_a: self.conv(&format!("{prefix}.conv_a"), cin, c),
            temb: self.dense(&format!("{prefix}.temb"), c * e, c, e),
            conv_b: self.conv(&format!("{prefix}.conv_b"), c, c),
        }
    }
}

/// Activations kept from the forward pass for backpropagation.
struct StageCache {
    input: Tensor,
    pre_a: Tensor,
    mid: Tensor,
    pre_b: Tensor,
}

pub(crate) struct ForwardCache {
    shape: (usize, usize, usize),
    embed: Vec<f64>,
    enc: Vec<StageCache>,
    dec: Vec<Option<StageCache>>,
    out_input: Tensor,
}

impl Unet {
    pub fn new(spec: DenoiserSpec) -> Result<Self> {
        spec.validate()?;
        let (c, e) = (spec.base_channels, spec.time_embed_dim);
        let mut b = LayoutBuilder { slices: Vec::new(), total: 0 };
        let mut enc = vec![b.block("enc0", spec.channels, c, e)];
        for k in 1..=spec.depth {
            enc.push(b.block(&format!("enc{k}"), c, c, e));
        }
        let mut dec: Vec<Option<Block>> = vec![None; spec.depth];
        for k in (0..spec.depth).rev() {
            dec[k] = Some(b.block(&format!("dec{k}"), c, c, e));
        }
        let out = b.conv("out", c, spec.channels);
        Ok(Self {
            spec,
            enc,
            dec: dec.into_iter().map(|d| d.expect("every level built")).collect(),
            out,
            slices: b.slices,
            total: b.total,
        })
    }

    pub fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    /// Named slices in storage order; they partition `0..param_count()`.
    pub fn param_slices(&self) -> &[ParamSlice] {
        &self.slices
    }

    /// Uniform in `+-sqrt(1 / fan_in)` for weights, zero biases.
    pub fn init_params(&self, seed: u64) -> DenoiserParams {
        let mut rng = seeded(seed);
        let mut values = vec![0.0; self.total];
        let denses = self
            .enc
            .iter()
            .chain(&self.dec)
            .flat_map(|b| [&b.conv_a, &b.temb, &b.conv_b])
            .chain(std::iter::once(&self.out));
        for d in denses {
            let bound = (1.0 / d.fan_in as f64).sqrt();
            for v in &mut values[d.weight.clone()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        DenoiserParams { values }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.total {
            return Err(Error::LengthMismatch { expected: self.total, actual: params.len() });
        }
        Ok(())
    }

    fn to_tensor(&self, img: &Image) -> Result<Tensor> {
        let (w, h, c) = img.shape();
        if c != self.spec.channels {
            return Err(Error::InvalidConfig(format!("model expects {} channels, image has {c}", self.spec.channels)));
        }
        self.spec.check_input(w, h)?;
        let mut t = Tensor::zeros(c, h, w);
        for (i, &v) in img.data().iter().enumerate() {
            let ch = i % c;
            let px = i / c;
            t.data[ch * h * w + px] = v;
        }
        Ok(t)
    }

    fn to_image(t: &Tensor) -> Result<Image> {
        let (c, pl) = (t.channels, t.plane());
        let mut data = vec![0.0; t.data.len()];
        for ch in 0..c {
            for px in 0..pl {
                data[px * c + ch] = t.data[ch * pl + px];
            }
        }
        Image::new(t.width, t.height, c, data)
    }

    fn stage_forward(
        params: &[f64],
        block: &Block,
        input: Tensor,
        stride: usize,
        skip: Option<&Tensor>,
        embed: &[f64],
    ) -> (Tensor, StageCache) {
        let pre_a = layers::conv3x3_forward(
            &input,
            &params[block.conv_a.weight.clone()],
            &params[block.conv_a.bias.clone()],
            stride,
        );
        let mut mid = layers::silu_forward(&pre_a);
        if let Some(s) = skip {
            mid.add_assign(s);
        }
        let shift = layers::linear_forward(embed, &params[block.temb.weight.clone()], &params[block.temb.bias.clone()]);
        layers::add_channelwise(&mut mid, &shift);
        let pre_b =
            layers::conv3x3_forward(&mid, &params[block.conv_b.weight.clone()], &params[block.conv_b.bias.clone()], 1);
        let out = layers::silu_forward(&pre_b);
        (out, StageCache { input, pre_a, mid, pre_b })
    }

    /// Returns `(grad wrt stage input, grad wrt the mid-stage sum)`; the latter
    /// is also the gradient flowing into the skip connection.
    fn stage_backward(
        params: &[f64],
        block: &Block,
        cache: &StageCache,
        stride: usize,
        embed: &[f64],
        grad_out: &Tensor,
        grads: &mut [f64],
    ) -> (Tensor, Tensor) {
        let g_pre_b = layers::silu_backward(&cache.pre_b, grad_out);
        let g_mid = conv_backward(params, &block.conv_b, &cache.mid, &g_pre_b, 1, grads);
        let g_shift = layers::channel_sums(&g_mid);
        let (gw, gb) = split_grads(grads, &block.temb);
        layers::linear_backward(embed, &g_shift, gw, gb);
        let g_pre_a = layers::silu_backward(&cache.pre_a, &g_mid);
        let g_in = conv_backward(params, &block.conv_a, &cache.input, &g_pre_a, stride, grads);
        (g_in, g_mid)
    }

    pub(crate) fn forward_cached(
        &self,
        params: &[f64],
        x_t: &Image,
        t: usize,
        horizon: usize,
    ) -> Result<(Image, ForwardCache)> {
        self.check_params(params)?;
        let input = self.to_tensor(x_t)?;
        let embed = layers::time_embed(t, horizon, self.spec.time_embed_dim)?;
        let depth = self.spec.depth;

        let mut enc_caches = Vec::with_capacity(depth + 1);
        let mut skips = Vec::with_capacity(depth + 1);
        let mut h = input;
        for (k, block) in self.enc.iter().enumerate() {
            let stride = if k == 0 { 1 } else { 2 };
            let (out, cache) = Self::stage_forward(params, block, h, stride, None, &embed);
            enc_caches.push(cache);
            skips.push(out.clone());
            h = out;
        }
        let mut dec_caches: Vec<Option<StageCache>> = (0..depth).map(|_| None).collect();
        for k in (0..depth).rev() {
            let up = layers::upsample2_forward(&h);
            let (out, cache) = Self::stage_forward(params, &self.dec[k], up, 1, Some(&skips[k]), &embed);
            dec_caches[k] = Some(cache);
            h = out;
        }
        let result = layers::conv3x3_forward(&h, &params[self.out.weight.clone()], &params[self.out.bias.clone()], 1);
        let cache = ForwardCache { shape: x_t.shape(), embed, enc: enc_caches, dec: dec_caches, out_input: h };
        Ok((Self::to_image(&result)?, cache))
    }

    pub(crate) fn backward_cached(
        &self,
        params: &[f64],
        cache: &ForwardCache,
        upstream: &Image,
    ) -> Result<(Vec<f64>, Image)> {
        let mut grads = vec![0.0; self.total];
        if upstream.shape() != cache.shape {
            return Err(Error::ShapeMismatch { expected: cache.shape, actual: upstream.shape() });
        }
        let g_result = self.to_tensor(upstream)?;
        let depth = self.spec.depth;
        let mut g_h = conv_backward(params, &self.out, &cache.out_input, &g_result, 1, &mut grads);

        let mut g_skips: Vec<Option<Tensor>> = (0..depth).map(|_| None).collect();
        for (k, slot) in g_skips.iter_mut().enumerate() {
            let dc = cache.dec[k].as_ref().expect("decoder cache");
            let (g_up, g_mid) = Self::stage_backward(params, &self.dec[k], dc, 1, &cache.embed, &g_h, &mut grads);
            *slot = Some(g_mid);
            g_h = layers::upsample2_backward(&g_up);
        }
        for k in (0..=depth).rev() {
            if k < depth {
                g_h.add_assign(g_skips[k].as_ref().expect("skip gradient"));
            }
            let stride = if k == 0 { 1 } else { 2 };
            let (g_in, _) =
                Self::stage_backward(params, &self.enc[k], &cache.enc[k], stride, &cache.embed, &g_h, &mut grads);
            g_h = g_in;
        }
        Ok((grads, Self::to_image(&g_h)?))
    }

    /// Estimate of `x0` from `(x_t, t)`.
    pub fn forward(&self, params: &[f64], x_t: &Image, t: usize, horizon: usize) -> Result<Image> {
        Ok(self.forward_cached(params, x_t, t, horizon)?.0)
    }

    /// Reverse-mode gradients of `<upstream, forward(params, x_t, t)>` with
    /// respect to the parameters and the input image.
    pub fn backward(
        &self,
        params: &[f64],
        x_t: &Image,
        t: usize,
        horizon: usize,
        upstream: &Image,
    ) -> Result<(Vec<f64>, Image)> {
        x_t.same_shape(upstream)?;
        let (_, cache) = self.forward_cached(params, x_t, t, horizon)?;
        self.backward_cached(params, &cache, upstream)
    }
}

fn split_grads<'a>(grads: &'a mut [f64], d: &Dense) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(d.weight.end, d.bias.start);
    let (w, b) = grads[d.weight.start..d.bias.end].split_at_mut(d.weight.len());
    (w, b)
}

fn conv_backward(
    params: &[f64],
    d: &Dense,
    input: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    grads: &mut [f64],
) -> Tensor {
    let (gw, gb) = split_grads(grads, d);
    layers::conv3x3_backward(input, &params[d.weight.clone()], grad_out, stride, gw, gb)
}

/// The flat parameter vector of a [`Unet`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    pub values: Vec<f64>,
}

impl DenoiserParams {
    pub fn zeros(net: &Unet) -> Self {
        Self { values: vec![0.0; net.param_count()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One-shot form of [`Unet::forward`].
pub fn forward(params: &DenoiserParams, spec: &DenoiserSpec, x_t: &Image, t: usize, horizon: usize) -> Result<Image> {
    Unet::new(*spec)?.forward(&params.values, x_t, t, horizon)
}

/// One-shot form of [`Unet::backward`].
pub fn backward(
    params: &DenoiserParams,
    spec: &DenoiserSpec,
    x_t: &Image,
    t: usize,
    horizon: usize,
    upstream: &Image,
) -> Result<(Vec<f64>, Image)> {
    Unet::new(*spec)?.backward(&params.values, x_t, t, horizon, upstream)
}
