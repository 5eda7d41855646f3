//! The conditioned denoising-diffusion saliency decoder.
//!
//! Saliency maps are affinely mapped from [0,1] into the signed signal
//! domain [−1,1], noised by a closed-form forward process, and recovered by
//! a small convolutional denoiser that predicts the clean map directly
//! (x0-parameterization). The reverse process is deterministic (η = 0), so a
//! fixed seed reproduces a sample bit-for-bit.
//!
//! Submodules: [`schedule`] (β/ᾱ ladder), [`net`] (conv layers with manual
//! analytic gradients), [`model`] (denoiser + frame encoder assembly),
//! [`train`] (MSE training with Adam), [`checkpoint`] (binary persistence).

pub mod checkpoint;
pub mod model;
pub mod net;
pub mod schedule;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::map::GrayscaleMap;
use crate::tensor::FeatureTensor;

pub use model::{Model, ModelConfig};
pub use schedule::NoiseSchedule;
pub use train::{TrainConfig, TrainOutcome};

/// Maps a unit-interval map into the signed diffusion domain: v ↦ 2v − 1.
pub fn to_signal(map: &GrayscaleMap) -> Result<FeatureTensor> {
    if let Some(&bad) = map.values().iter().find(|v| **v > 1.0) {
        return Err(Error::Domain(format!(
            "signal conversion expects values in [0,1], got {bad}"
        )));
    }
    let mut out = FeatureTensor::zeros(1, map.height(), map.width());
    for (o, &v) in out.values_mut().iter_mut().zip(map.values()) {
        *o = 2.0 * v - 1.0;
    }
    Ok(out)
}

/// Maps a signed single-channel signal back to a unit-interval map:
/// v ↦ (v + 1)/2, clamped to [0,1].
pub fn from_signal(signal: &FeatureTensor) -> Result<GrayscaleMap> {
    if signal.channels() != 1 {
        return Err(Error::Dimension(format!(
            "signal must be single-channel, got {}",
            signal.channels()
        )));
    }
    let values = signal
        .values()
        .iter()
        .map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
        .collect();
    GrayscaleMap::new(signal.width(), signal.height(), values)
}

/// Draws an i.i.d. standard-normal tensor, deterministic for a fixed seed.
pub fn standard_normal(channels: usize, height: usize, width: usize, seed: u64) -> FeatureTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = FeatureTensor::zeros(channels, height, width);
    for v in out.values_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    out
}

/// Forward process: m_t = √ᾱ_t·m_0 + √(1−ᾱ_t)·ε, elementwise.
///
/// `m0` must already live in the signal domain [−1,1]; `noise` is standard
/// normal of the same shape. t = 0 is the identity.
pub fn forward_sample(
    m0: &FeatureTensor,
    t: usize,
    noise: &FeatureTensor,
    sched: &NoiseSchedule,
) -> Result<FeatureTensor> {
    if t > sched.steps() {
        return Err(Error::Domain(format!(
            "t = {t} outside 0..={}",
            sched.steps()
        )));
    }
    check_same_shape(m0, noise)?;
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out = FeatureTensor::zeros(m0.channels(), m0.height(), m0.width());
    for ((o, &s), &e) in out
        .values_mut()
        .iter_mut()
        .zip(m0.values())
        .zip(noise.values())
    {
        *o = sa * s + sn * e;
    }
    Ok(out)
}

/// One deterministic reverse step from t to t−1 given the predicted clean
/// map: ε̂ = (m_t − √ᾱ_t·x̂0)/√(1−ᾱ_t); m_{t−1} = √ᾱ_{t−1}·x̂0 + √(1−ᾱ_{t−1})·ε̂.
///
/// At t = 1 the output collapses to x̂0 exactly (ᾱ_0 = 1).
pub fn reverse_step(
    mt: &FeatureTensor,
    t: usize,
    x0_hat: &FeatureTensor,
    sched: &NoiseSchedule,
) -> Result<FeatureTensor> {
    if t == 0 || t > sched.steps() {
        return Err(Error::Domain(format!(
            "reverse step needs t ∈ 1..={}, got {t}",
            sched.steps()
        )));
    }
    check_same_shape(mt, x0_hat)?;
    let ab_t = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t - 1);
    let (sa_t, sn_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let (sa_p, sn_p) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    let mut out = FeatureTensor::zeros(mt.channels(), mt.height(), mt.width());
    for ((o, &m), &x0) in out
        .values_mut()
        .iter_mut()
        .zip(mt.values())
        .zip(x0_hat.values())
    {
        let eps_hat = (m - sa_t * x0) / sn_t;
        *o = sa_p * x0 + sn_p * eps_hat;
    }
    Ok(out)
}

/// Runs the full reverse trajectory from seeded Gaussian noise, delegating
/// clean-map prediction to `predict_x0(m_t, t)`.
///
/// This is the sampling core shared by the trained model and by oracle
/// substitutes in tests. Errors with [`Error::Divergence`] if any
/// intermediate goes non-finite.
pub fn sample_trajectory(
    mut predict_x0: impl FnMut(&FeatureTensor, usize) -> Result<FeatureTensor>,
    height: usize,
    width: usize,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<FeatureTensor> {
    let mut mt = standard_normal(1, height, width, seed);
    for t in (1..=sched.steps()).rev() {
        let x0_hat = predict_x0(&mt, t)?;
        mt = reverse_step(&mt, t, &x0_hat, sched)?;
        if let Some(&bad) = mt.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite value {bad} in reverse trajectory at t = {}",
                t - 1
            )));
        }
    }
    Ok(mt)
}

/// Decodes a saliency map from conditioning features with a trained model.
/// Deterministic for a fixed seed; output values lie in [0,1].
pub fn sample(
    cond: &FeatureTensor,
    model: &Model,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<GrayscaleMap> {
    let (h, w) = (cond.height() * 4, cond.width() * 4);
    let signal = sample_trajectory(
        |mt, t| model.denoise(mt, t, cond),
        h,
        w,
        sched,
        seed,
    )?;
    from_signal(&signal)
}

fn check_same_shape(a: &FeatureTensor, b: &FeatureTensor) -> Result<()> {
    if a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Dimension(format!(
            "shape mismatch: {}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}
