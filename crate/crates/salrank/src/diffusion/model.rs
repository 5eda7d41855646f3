//! The conditioned denoiser and frame encoder.
//!
//! The denoiser is a three-level convolutional encoder–decoder with skip
//! connections. Input is the noisy map plus four constant timestep planes;
//! conditioning features (encoded frames ⊗ ranking map) enter at the
//! bottleneck; the output is a linear x0-prediction head. [`Model::denoise`]
//! clamps it to the signal range [−1,1] for sampling, while the training
//! path ([`Model::denoise_cached`]) keeps it raw so the regression loss
//! never loses its gradient to the clamp.
//!
//! The frame encoder is two stride-2 convolutions (RGB → 8 → 16 channels),
//! so its output is 1/4 of the input extent in each dimension; a clip's
//! temporal context is the mean of its per-frame features. Both parts are
//! trained jointly with hand-derived gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Frame, GrayscaleMap};
use crate::tensor::{pointwise_product_concat, resize_nearest, FeatureTensor};

use super::net::{
    silu_backward, silu_in_place, time_planes, upsample2x, upsample2x_backward, Conv2d,
};

/// Timestep embedding planes prepended to the noisy map.
pub const TIME_CHANNELS: usize = 4;
/// Frame-encoder output channels.
pub const ENC_CHANNELS: usize = 16;
/// Conditioning channels: encoded features ⊗ ranking map, plus the map
/// itself as an extra channel.
pub const COND_CHANNELS: usize = ENC_CHANNELS + 1;

const C0: usize = 12;
const C1: usize = 24;
const C2: usize = 32;
const E1: usize = 8;

/// Spatial contract of a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub height: usize,
    pub frames_per_clip: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width % 4 != 0 || self.height % 4 != 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Dimension(format!(
                "frame size {}x{} must be a positive multiple of 4 in each dimension",
                self.width, self.height
            )));
        }
        if self.frames_per_clip == 0 {
            return Err(Error::EmptyInput("frames_per_clip must be ≥ 1".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 24,
            frames_per_clip: 3,
        }
    }
}

/// All learnable layers of the decoder and encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    // Denoiser path, top to bottom and back up.
    pub in0: Conv2d,    // 1+4 → 12, stride 1
    pub down1: Conv2d,  // 12 → 24, stride 2
    pub down2: Conv2d,  // 24 → 32, stride 2
    pub mix: Conv2d,    // 32+17 → 32, stride 1 (bottleneck + conditioning)
    pub up1: Conv2d,    // 32 → 24, stride 1 (after 2× upsample)
    pub merge1: Conv2d, // 24+24 → 24, stride 1 (skip join)
    pub up2: Conv2d,    // 24 → 12, stride 1 (after 2× upsample)
    pub merge2: Conv2d, // 12+12 → 12, stride 1 (skip join)
    pub out: Conv2d,    // 12 → 1, stride 1, linear
    // Frame encoder.
    pub e1: Conv2d, // 3 → 8, stride 2
    pub e2: Conv2d, // 8 → 16, stride 2
}

/// Per-layer gradient buffers, same shapes as the corresponding layers.
#[derive(Debug, Clone)]
pub struct ConvGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ConvGrad {
    fn zeros_like(layer: &Conv2d) -> Self {
        Self {
            w: vec![0.0; layer.w.len()],
            b: vec![0.0; layer.b.len()],
        }
    }
}

/// Gradients for every layer of a [`Model`], in its flattening order.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub in0: ConvGrad,
    pub down1: ConvGrad,
    pub down2: ConvGrad,
    pub mix: ConvGrad,
    pub up1: ConvGrad,
    pub merge1: ConvGrad,
    pub up2: ConvGrad,
    pub merge2: ConvGrad,
    pub out: ConvGrad,
    pub e1: ConvGrad,
    pub e2: ConvGrad,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            in0: ConvGrad::zeros_like(&model.in0),
            down1: ConvGrad::zeros_like(&model.down1),
            down2: ConvGrad::zeros_like(&model.down2),
            mix: ConvGrad::zeros_like(&model.mix),
            up1: ConvGrad::zeros_like(&model.up1),
            merge1: ConvGrad::zeros_like(&model.merge1),
            up2: ConvGrad::zeros_like(&model.up2),
            merge2: ConvGrad::zeros_like(&model.merge2),
            out: ConvGrad::zeros_like(&model.out),
            e1: ConvGrad::zeros_like(&model.e1),
            e2: ConvGrad::zeros_like(&model.e2),
        }
    }

    fn parts(&self) -> [&ConvGrad; 11] {
        [
            &self.in0,
            &self.down1,
            &self.down2,
            &self.mix,
            &self.up1,
            &self.merge1,
            &self.up2,
            &self.merge2,
            &self.out,
            &self.e1,
            &self.e2,
        ]
    }

    /// Flattens in the same order as [`Model::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for part in self.parts() {
            out.extend_from_slice(&part.w);
            out.extend_from_slice(&part.b);
        }
        out
    }

    /// Elementwise sum with another gradient set.
    pub fn add(&mut self, other: &ModelGrads) {
        fn add_part(a: &mut ConvGrad, b: &ConvGrad) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
        add_part(&mut self.in0, &other.in0);
        add_part(&mut self.down1, &other.down1);
        add_part(&mut self.down2, &other.down2);
        add_part(&mut self.mix, &other.mix);
        add_part(&mut self.up1, &other.up1);
        add_part(&mut self.merge1, &other.merge1);
        add_part(&mut self.up2, &other.up2);
        add_part(&mut self.merge2, &other.merge2);
        add_part(&mut self.out, &other.out);
        add_part(&mut self.e1, &other.e1);
        add_part(&mut self.e2, &other.e2);
    }

    /// Scales every gradient by `s`.
    pub fn scale(&mut self, s: f64) {
        let scale_part = |p: &mut ConvGrad| {
            for v in p.w.iter_mut().chain(p.b.iter_mut()) {
                *v *= s;
            }
        };
        scale_part(&mut self.in0);
        scale_part(&mut self.down1);
        scale_part(&mut self.down2);
        scale_part(&mut self.mix);
        scale_part(&mut self.up1);
        scale_part(&mut self.merge1);
        scale_part(&mut self.up2);
        scale_part(&mut self.merge2);
        scale_part(&mut self.out);
        scale_part(&mut self.e1);
        scale_part(&mut self.e2);
    }
}

/// One manifest entry: layer name plus weight/bias element counts and the
/// conv shape `[out_ch, in_ch, 3, 3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: [usize; 4],
    pub stride: usize,
}

impl Model {
    fn with_init(config: ModelConfig, seed: u64, gain: f64, out_gain: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            config,
            in0: Conv2d::init(1 + TIME_CHANNELS, C0, 1, gain, &mut rng),
            down1: Conv2d::init(C0, C1, 2, gain, &mut rng),
            down2: Conv2d::init(C1, C2, 2, gain, &mut rng),
            mix: Conv2d::init(C2 + COND_CHANNELS, C2, 1, gain, &mut rng),
            up1: Conv2d::init(C2, C1, 1, gain, &mut rng),
            merge1: Conv2d::init(C1 + C1, C1, 1, gain, &mut rng),
            up2: Conv2d::init(C1, C0, 1, gain, &mut rng),
            merge2: Conv2d::init(C0 + C0, C0, 1, gain, &mut rng),
            out: Conv2d::init(C0, 1, 1, out_gain, &mut rng),
            e1: Conv2d::init(3, E1, 2, gain, &mut rng),
            e2: Conv2d::init(E1, ENC_CHANNELS, 2, gain, &mut rng),
        })
    }

    /// Training initialization: variance-preserving hidden weights with a
    /// zeroed output layer. Starting the prediction at exactly zero keeps the
    /// first optimizer steps confined to the output convolution; otherwise
    /// the large initial residual drives every hidden pre-activation negative
    /// and the network can stall at the best-constant-predictor plateau.
    pub fn init_training(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, seed, 1.0, 0.0)
    }

    /// Generic-position initialization: every layer, including the output
    /// convolution, gets nonzero weights, so behavioral tests and
    /// finite-difference checks exercise all gradient paths.
    pub fn init_fd_check(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, seed, 0.6, 0.6)
    }

    fn layers(&self) -> [(&'static str, &Conv2d); 11] {
        [
            ("in0", &self.in0),
            ("down1", &self.down1),
            ("down2", &self.down2),
            ("mix", &self.mix),
            ("up1", &self.up1),
            ("merge1", &self.merge1),
            ("up2", &self.up2),
            ("merge2", &self.merge2),
            ("out", &self.out),
            ("e1", &self.e1),
            ("e2", &self.e2),
        ]
    }

    fn layers_mut(&mut self) -> [&mut Conv2d; 11] {
        [
            &mut self.in0,
            &mut self.down1,
            &mut self.down2,
            &mut self.mix,
            &mut self.up1,
            &mut self.merge1,
            &mut self.up2,
            &mut self.merge2,
            &mut self.out,
            &mut self.e1,
            &mut self.e2,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.param_count()).sum()
    }

    /// All parameters as one vector: per layer, weights then bias, in the
    /// fixed layer order of the manifest.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, layer) in self.layers() {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    /// Loads parameters from a [`Model::flatten`]-ordered vector.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "parameter vector length {} does not match model size {}",
                flat.len(),
                self.param_count()
            )));
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter {bad}")));
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            let wlen = layer.w.len();
            layer.w.copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = layer.b.len();
            layer.b.copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        Ok(())
    }

    /// Layer-shape manifest matching the flattening order.
    pub fn manifest(&self) -> Vec<LayerShape> {
        self.layers()
            .iter()
            .map(|(name, l)| LayerShape {
                name: (*name).to_string(),
                shape: [l.out_ch, l.in_ch, 3, 3],
                stride: l.stride,
            })
            .collect()
    }

    /// Predicts the clean map from a noisy one, clamped to the valid signal
    /// range [−1,1]. `cond` must be `COND_CHANNELS` at 1/4 the spatial
    /// extent of `mt`.
    ///
    /// The clamp lives here, on the inference boundary, and not inside
    /// [`Model::denoise_cached`]: the training loss must regress the raw
    /// head, because background pixels sit exactly at −1 and a clamped loss
    /// head loses its gradient the moment the prediction overshoots.
    pub fn denoise(&self, mt: &FeatureTensor, t: usize, cond: &FeatureTensor) -> Result<FeatureTensor> {
        let mut y = self.denoise_cached(mt, t, cond)?.0;
        for v in y.values_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(y)
    }

    /// Forward pass retaining every intermediate needed by
    /// [`Model::denoise_backward`]. Returns the raw (unclamped) prediction:
    /// this is the tensor the training loss regresses.
    pub fn denoise_cached(
        &self,
        mt: &FeatureTensor,
        t: usize,
        cond: &FeatureTensor,
    ) -> Result<(FeatureTensor, DenoiseCache)> {
        let (h, w) = (mt.height(), mt.width());
        if mt.channels() != 1 {
            return Err(Error::Dimension(format!(
                "noisy map must be single-channel, got {}",
                mt.channels()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Dimension(format!(
                "spatial extent {w}x{h} must be a multiple of 4"
            )));
        }
        if cond.channels() != COND_CHANNELS || cond.height() != h / 4 || cond.width() != w / 4 {
            return Err(Error::Dimension(format!(
                "conditioning must be {COND_CHANNELS}x{}x{}, got {}x{}x{}",
                h / 4,
                w / 4,
                cond.channels(),
                cond.height(),
                cond.width()
            )));
        }

        let x_in = mt.concat_channels(&time_planes(t, h, w))?;
        let z0 = self.in0.forward(&x_in);
        let a0 = activated(&z0);
        let z1 = self.down1.forward(&a0);
        let a1 = activated(&z1);
        let z2 = self.down2.forward(&a1);
        let a2 = activated(&z2);
        let xm = a2.concat_channels(cond)?;
        let zm = self.mix.forward(&xm);
        let am = activated(&zm);
        let u1 = upsample2x(&am);
        let z3 = self.up1.forward(&u1);
        let a3 = activated(&z3);
        let c1 = a3.concat_channels(&a1)?;
        let z4 = self.merge1.forward(&c1);
        let a4 = activated(&z4);
        let u2 = upsample2x(&a4);
        let z5 = self.up2.forward(&u2);
        let a5 = activated(&z5);
        let c2 = a5.concat_channels(&a0)?;
        let z6 = self.merge2.forward(&c2);
        let a6 = activated(&z6);
        let y = self.out.forward(&a6);
        let cache = DenoiseCache {
            x_in,
            z0,
            a0,
            z1,
            a1,
            z2,
            xm,
            zm,
            u1,
            z3,
            c1,
            z4,
            u2,
            z5,
            c2,
            z6,
            a6,
        };
        Ok((y, cache))
    }

    /// Backward pass through the denoiser. Accumulates parameter gradients
    /// into `grads` and returns (∂L/∂mt, ∂L/∂cond).
    pub fn denoise_backward(
        &self,
        cache: &DenoiseCache,
        grad_y: &FeatureTensor,
        grads: &mut ModelGrads,
    ) -> (FeatureTensor, FeatureTensor) {
        let mut ga6 = self
            .out
            .backward(&cache.a6, grad_y, &mut grads.out.w, &mut grads.out.b);
        silu_backward(cache.z6.values(), ga6.values_mut());
        let gc2 = self
            .merge2
            .backward(&cache.c2, &ga6, &mut grads.merge2.w, &mut grads.merge2.b);
        let (mut ga5, ga0_skip) = split_channels(&gc2, C0);
        silu_backward(cache.z5.values(), ga5.values_mut());
        let gu2 = self
            .up2
            .backward(&cache.u2, &ga5, &mut grads.up2.w, &mut grads.up2.b);
        let mut ga4 = upsample2x_backward(&gu2);
        silu_backward(cache.z4.values(), ga4.values_mut());
        let gc1 = self
            .merge1
            .backward(&cache.c1, &ga4, &mut grads.merge1.w, &mut grads.merge1.b);
        let (mut ga3, ga1_skip) = split_channels(&gc1, C1);
        silu_backward(cache.z3.values(), ga3.values_mut());
        let gu1 = self
            .up1
            .backward(&cache.u1, &ga3, &mut grads.up1.w, &mut grads.up1.b);
        let mut gam = upsample2x_backward(&gu1);
        silu_backward(cache.zm.values(), gam.values_mut());
        let gxm = self
            .mix
            .backward(&cache.xm, &gam, &mut grads.mix.w, &mut grads.mix.b);
        let (mut ga2, g_cond) = split_channels(&gxm, C2);
        silu_backward(cache.z2.values(), ga2.values_mut());
        let ga1_down = self
            .down2
            .backward(&cache.a1, &ga2, &mut grads.down2.w, &mut grads.down2.b);
        let mut ga1 = ga1_down;
        add_into(&mut ga1, &ga1_skip);
        silu_backward(cache.z1.values(), ga1.values_mut());
        let ga0_down = self
            .down1
            .backward(&cache.a0, &ga1, &mut grads.down1.w, &mut grads.down1.b);
        let mut ga0 = ga0_down;
        add_into(&mut ga0, &ga0_skip);
        silu_backward(cache.z0.values(), ga0.values_mut());
        let gx_in = self
            .in0
            .backward(&cache.x_in, &ga0, &mut grads.in0.w, &mut grads.in0.b);
        let (g_mt, _g_time) = split_channels(&gx_in, 1);
        (g_mt, g_cond)
    }

    /// Encodes one frame to `ENC_CHANNELS` at 1/4 extent, with cache.
    fn encode_frame_cached(&self, frame: &Frame) -> (FeatureTensor, FrameCache) {
        let x = frame_tensor(frame);
        let ze1 = self.e1.forward(&x);
        let ae1 = activated(&ze1);
        let ze2 = self.e2.forward(&ae1);
        let out = activated(&ze2);
        (out, FrameCache { x, ze1, ae1, ze2 })
    }

    /// Mean per-frame feature over the clip: the temporal context F_v.
    pub fn encode_frames(&self, frames: &[Frame]) -> Result<FeatureTensor> {
        Ok(self.encode_frames_cached(frames)?.0)
    }

    /// As [`Model::encode_frames`] but retaining per-frame caches.
    pub fn encode_frames_cached(
        &self,
        frames: &[Frame],
    ) -> Result<(FeatureTensor, Vec<FrameCache>)> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("cannot encode an empty clip".into()));
        }
        let mut caches = Vec::with_capacity(frames.len());
        let mut mean: Option<FeatureTensor> = None;
        for frame in frames {
            let (feat, cache) = self.encode_frame_cached(frame);
            caches.push(cache);
            match &mut mean {
                None => mean = Some(feat),
                Some(acc) => add_into(acc, &feat),
            }
        }
        let mut mean = mean.unwrap();
        let inv = 1.0 / frames.len() as f64;
        for v in mean.values_mut() {
            *v *= inv;
        }
        Ok((mean, caches))
    }

    /// Backward through the mean feature into both encoder layers.
    pub fn encode_frames_backward(
        &self,
        caches: &[FrameCache],
        grad_mean: &FeatureTensor,
        grads: &mut ModelGrads,
    ) {
        let inv = 1.0 / caches.len() as f64;
        let mut per_frame = grad_mean.clone();
        for v in per_frame.values_mut() {
            *v *= inv;
        }
        for cache in caches {
            let mut gz2 = per_frame.clone();
            silu_backward(cache.ze2.values(), gz2.values_mut());
            let mut ga1 = self
                .e2
                .backward(&cache.ae1, &gz2, &mut grads.e2.w, &mut grads.e2.b);
            silu_backward(cache.ze1.values(), ga1.values_mut());
            let _ = self
                .e1
                .backward(&cache.x, &ga1, &mut grads.e1.w, &mut grads.e1.b);
        }
    }

    /// Full conditioning tensor for a clip: rank map (resized to feature
    /// extent) position-wise multiplied into the mean frame features, with
    /// the map itself appended as an extra channel.
    pub fn conditioning(
        &self,
        frames: &[Frame],
        rank_map: &GrayscaleMap,
    ) -> Result<FeatureTensor> {
        Ok(self.conditioning_cached(frames, rank_map)?.0)
    }

    /// As [`Model::conditioning`] but retaining what the backward pass needs.
    pub fn conditioning_cached(
        &self,
        frames: &[Frame],
        rank_map: &GrayscaleMap,
    ) -> Result<(FeatureTensor, CondCache)> {
        let (mean, frame_caches) = self.encode_frames_cached(frames)?;
        let rank_small = resize_nearest(rank_map, mean.width(), mean.height());
        let cond = pointwise_product_concat(&rank_small, &mean)?;
        Ok((
            cond,
            CondCache {
                frame_caches,
                rank_small,
            },
        ))
    }

    /// Backward from ∂L/∂cond into the encoder parameters.
    pub fn conditioning_backward(
        &self,
        cache: &CondCache,
        grad_cond: &FeatureTensor,
        grads: &mut ModelGrads,
    ) {
        // cond[c] = feat[c]·rank for c < ENC_CHANNELS; the final channel is
        // the rank map itself (no learnable inputs).
        let (h, w) = (grad_cond.height(), grad_cond.width());
        let mut grad_mean = FeatureTensor::zeros(ENC_CHANNELS, h, w);
        {
            let gm = grad_mean.values_mut();
            let rank = cache.rank_small.values();
            for c in 0..ENC_CHANNELS {
                let gplane = grad_cond.channel(c);
                let mplane = &mut gm[c * h * w..(c + 1) * h * w];
                for i in 0..h * w {
                    mplane[i] = gplane[i] * rank[i];
                }
            }
        }
        self.encode_frames_backward(&cache.frame_caches, &grad_mean, grads);
    }
}

/// Intermediates of one denoiser forward pass.
pub struct DenoiseCache {
    x_in: FeatureTensor,
    z0: FeatureTensor,
    a0: FeatureTensor,
    z1: FeatureTensor,
    a1: FeatureTensor,
    z2: FeatureTensor,
    xm: FeatureTensor,
    zm: FeatureTensor,
    u1: FeatureTensor,
    z3: FeatureTensor,
    c1: FeatureTensor,
    z4: FeatureTensor,
    u2: FeatureTensor,
    z5: FeatureTensor,
    c2: FeatureTensor,
    z6: FeatureTensor,
    a6: FeatureTensor,
}

/// Intermediates of one frame encoding.
pub struct FrameCache {
    x: FeatureTensor,
    ze1: FeatureTensor,
    ae1: FeatureTensor,
    ze2: FeatureTensor,
}

/// Intermediates of one conditioning computation.
pub struct CondCache {
    frame_caches: Vec<FrameCache>,
    rank_small: GrayscaleMap,
}

fn activated(z: &FeatureTensor) -> FeatureTensor {
    let mut a = z.clone();
    silu_in_place(a.values_mut());
    a
}

fn frame_tensor(frame: &Frame) -> FeatureTensor {
    let mut x = FeatureTensor::zeros(3, frame.height(), frame.width());
    x.values_mut().copy_from_slice(frame.rgb());
    x
}

/// Splits a tensor into its first `front` channels and the rest.
fn split_channels(x: &FeatureTensor, front: usize) -> (FeatureTensor, FeatureTensor) {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    assert!(front < c);
    let plane = h * w;
    let mut a = FeatureTensor::zeros(front, h, w);
    let mut b = FeatureTensor::zeros(c - front, h, w);
    a.values_mut().copy_from_slice(&x.values()[..front * plane]);
    b.values_mut().copy_from_slice(&x.values()[front * plane..]);
    (a, b)
}

fn add_into(acc: &mut FeatureTensor, other: &FeatureTensor) {
    debug_assert_eq!(acc.values().len(), other.values().len());
    for (a, b) in acc.values_mut().iter_mut().zip(other.values()) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::standard_normal;

    fn test_config() -> ModelConfig {
        ModelConfig {
            width: 16,
            height: 8,
            frames_per_clip: 2,
        }
    }

    fn frame(w: usize, h: usize, seed: u64, index: usize) -> Frame {
        let noise = standard_normal(3, h, w, seed);
        let rgb = noise.values().iter().map(|v| v.abs() % 1.0).collect();
        Frame::new(w, h, rgb, index).unwrap()
    }

    #[test]
    fn parameter_count_is_stable() {
        let model = Model::init_training(ModelConfig::default(), 0).unwrap();
        // in0 552 + down1 2616 + down2 6944 + mix 14144 + up1 6936
        // + merge1 10392 + up2 2604 + merge2 2604 + out 109
        // + e1 224 + e2 1168
        assert_eq!(model.param_count(), 48_293);
        assert_eq!(model.flatten().len(), 48_293);
    }

    #[test]
    fn flatten_round_trips() {
        let model = Model::init_training(test_config(), 3).unwrap();
        let flat = model.flatten();
        let mut other = Model::init_training(test_config(), 4).unwrap();
        assert_ne!(other.flatten(), flat);
        other.set_from_flat(&flat).unwrap();
        assert_eq!(other.flatten(), flat);
        assert_eq!(other, model);
    }

    #[test]
    fn set_from_flat_rejects_bad_input() {
        let mut model = Model::init_training(test_config(), 3).unwrap();
        assert!(model.set_from_flat(&[0.0; 7]).is_err());
        let mut flat = model.flatten();
        flat[17] = f64::NAN;
        assert!(model.set_from_flat(&flat).is_err());
    }

    #[test]
    fn denoise_output_matches_input_shape() {
        let model = Model::init_training(test_config(), 1).unwrap();
        let mt = standard_normal(1, 8, 16, 2);
        let cond = standard_normal(COND_CHANNELS, 2, 4, 3);
        let y = model.denoise(&mt, 10, &cond).unwrap();
        assert_eq!((y.channels(), y.height(), y.width()), (1, 8, 16));
        assert!(y.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_weights_give_constant_bias_output() {
        let mut model = Model::init_training(test_config(), 1).unwrap();
        let zeros = vec![0.0; model.param_count()];
        model.set_from_flat(&zeros).unwrap();
        model.out.b[0] = 0.25;
        let mt = standard_normal(1, 8, 16, 5);
        let cond = standard_normal(COND_CHANNELS, 2, 4, 6);
        let y = model.denoise(&mt, 42, &cond).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn denoise_rejects_mismatched_conditioning() {
        let model = Model::init_training(test_config(), 1).unwrap();
        let mt = standard_normal(1, 8, 16, 2);
        let bad_cond = standard_normal(COND_CHANNELS, 4, 4, 3);
        assert!(model.denoise(&mt, 1, &bad_cond).is_err());
        let bad_ch = standard_normal(3, 2, 4, 3);
        assert!(model.denoise(&mt, 1, &bad_ch).is_err());
    }

    #[test]
    fn encoder_quarters_spatial_extent() {
        let model = Model::init_training(test_config(), 2).unwrap();
        let frames = vec![frame(16, 8, 7, 0), frame(16, 8, 8, 1)];
        let feat = model.encode_frames(&frames).unwrap();
        assert_eq!(
            (feat.channels(), feat.height(), feat.width()),
            (ENC_CHANNELS, 2, 4)
        );
    }

    #[test]
    fn frame_permutation_leaves_mean_unchanged() {
        let model = Model::init_training(test_config(), 2).unwrap();
        let a = frame(16, 8, 7, 0);
        let b = frame(16, 8, 9, 1);
        let c = frame(16, 8, 11, 2);
        let fwd = model
            .encode_frames(&[a.clone(), b.clone(), c.clone()])
            .unwrap();
        let rev = model.encode_frames(&[c, a, b]).unwrap();
        for (x, y) in fwd.values().iter().zip(rev.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_shape_and_rank_channel() {
        let model = Model::init_training(test_config(), 2).unwrap();
        let frames = vec![frame(16, 8, 7, 0)];
        let rank = GrayscaleMap::new(16, 8, vec![0.5; 128]).unwrap();
        let cond = model.conditioning(&frames, &rank).unwrap();
        assert_eq!(
            (cond.channels(), cond.height(), cond.width()),
            (COND_CHANNELS, 2, 4)
        );
        assert!(cond.channel(ENC_CHANNELS).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_rank_map_zeroes_feature_channels() {
        let model = Model::init_training(test_config(), 2).unwrap();
        let frames = vec![frame(16, 8, 7, 0)];
        let rank = GrayscaleMap::new(16, 8, vec![0.0; 128]).unwrap();
        let cond = model.conditioning(&frames, &rank).unwrap();
        assert!(cond.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_matches_flatten_order_and_sizes() {
        let model = Model::init_training(test_config(), 0).unwrap();
        let manifest = model.manifest();
        assert_eq!(manifest.len(), 11);
        assert_eq!(manifest[0].name, "in0");
        assert_eq!(manifest[0].shape, [12, 5, 3, 3]);
        assert_eq!(manifest[8].name, "out");
        assert_eq!(manifest[8].shape, [1, 12, 3, 3]);
        assert_eq!(manifest[10].name, "e2");
        assert_eq!(manifest[10].shape, [16, 8, 3, 3]);
        let total: usize = manifest
            .iter()
            .map(|l| l.shape.iter().product::<usize>() + l.shape[0])
            .sum();
        assert_eq!(total, model.param_count());
    }

    #[test]
    fn gradient_buffers_match_model_layout() {
        let model = Model::init_training(test_config(), 0).unwrap();
        let grads = ModelGrads::zeros_like(&model);
        assert_eq!(grads.flatten().len(), model.param_count());
    }
}
