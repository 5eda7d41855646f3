//! MSE diffusion training with analytic gradients and Adam.
//!
//! Each step draws clips and frame indices, noises the clean signal to a
//! random timestep, and regresses the denoiser output onto the clean signal:
//! loss = mean over the batch of Σ_pixels (m0 − D_θ(m_t, t, cond))². The
//! conditioning is rebuilt inside the step so encoder gradients flow.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curation::assign_ranks;
use crate::error::{Error, Result};
use crate::map::{GrayscaleMap, VideoClip};
use crate::rankmap::{predicted_ranking_map, ratio_frame_indices, PredictedRanking};
use crate::seedutil::{derive_seed, derive_seed_indexed};
use crate::tensor::FeatureTensor;

use super::model::{Model, ModelConfig, ModelGrads};
use super::schedule::{NoiseSchedule, DEFAULT_BETA, DEFAULT_T};
use super::{forward_sample, standard_normal, to_signal};

/// Training hyperparameters, loadable from a TOML key-value file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Optimization steps.
    pub steps: usize,
    /// Diffusion steps T.
    pub t_steps: usize,
    /// Linear β ramp endpoints.
    pub beta_start: f64,
    pub beta_end: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fraction ρ of each clip's frames that receive a ranking map.
    pub rank_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            t_steps: DEFAULT_T,
            beta_start: DEFAULT_BETA.0,
            beta_end: DEFAULT_BETA.1,
            learning_rate: 2e-3,
            batch_size: 8,
            rank_ratio: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rank_ratio) {
            return Err(Error::Config(format!(
                "rank_ratio {} outside [0,1]",
                self.rank_ratio
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
    }
}

/// One precomputed batch item: clean signal plus conditioning features.
#[derive(Debug, Clone)]
pub struct TrainBatchItem {
    /// Clean map in the signal domain [−1,1], single channel.
    pub m0: FeatureTensor,
    pub cond: FeatureTensor,
}

/// One batch item carrying raw inputs, for the jointly-trained path.
#[derive(Debug, Clone)]
pub struct TrainClipItem<'a> {
    pub m0: FeatureTensor,
    pub clip: &'a VideoClip,
    pub rank_map: GrayscaleMap,
}

/// Denoiser-only training step on precomputed conditioning. Accumulates
/// analytic gradients into `grads` (encoder entries stay untouched) and
/// returns the batch loss.
pub fn training_step(
    batch: &[TrainBatchItem],
    t_draws: &[usize],
    noise_seed: u64,
    model: &Model,
    sched: &NoiseSchedule,
    grads: &mut ModelGrads,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch is empty".into()));
    }
    if batch.len() != t_draws.len() {
        return Err(Error::Dimension(format!(
            "{} batch items but {} timestep draws",
            batch.len(),
            t_draws.len()
        )));
    }
    let inv_batch = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (i, (item, &t)) in batch.iter().zip(t_draws).enumerate() {
        check_t(t, sched)?;
        let noise = standard_normal(
            1,
            item.m0.height(),
            item.m0.width(),
            derive_seed_indexed(noise_seed, "noise", i as u64),
        );
        let mt = forward_sample(&item.m0, t, &noise, sched)?;
        let (y, cache) = model.denoise_cached(&mt, t, &item.cond)?;
        let (item_loss, grad_y) = squared_error(&y, &item.m0);
        loss += item_loss * inv_batch;
        let mut grad_y = grad_y;
        for g in grad_y.values_mut() {
            *g *= inv_batch;
        }
        model.denoise_backward(&cache, &grad_y, grads);
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("training loss went {loss}")));
    }
    Ok(loss)
}

/// Jointly-trained step: conditioning is computed inside from each item's
/// frames and ranking map, so gradients reach the frame encoder too.
pub fn training_step_joint(
    batch: &[TrainClipItem<'_>],
    t_draws: &[usize],
    noise_seed: u64,
    model: &Model,
    sched: &NoiseSchedule,
    grads: &mut ModelGrads,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch is empty".into()));
    }
    if batch.len() != t_draws.len() {
        return Err(Error::Dimension(format!(
            "{} batch items but {} timestep draws",
            batch.len(),
            t_draws.len()
        )));
    }
    let inv_batch = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (i, (item, &t)) in batch.iter().zip(t_draws).enumerate() {
        check_t(t, sched)?;
        let (cond, cond_cache) = model.conditioning_cached(&item.clip.frames, &item.rank_map)?;
        let noise = standard_normal(
            1,
            item.m0.height(),
            item.m0.width(),
            derive_seed_indexed(noise_seed, "noise", i as u64),
        );
        let mt = forward_sample(&item.m0, t, &noise, sched)?;
        let (y, cache) = model.denoise_cached(&mt, t, &cond)?;
        let (item_loss, grad_y) = squared_error(&y, &item.m0);
        loss += item_loss * inv_batch;
        let mut grad_y = grad_y;
        for g in grad_y.values_mut() {
            *g *= inv_batch;
        }
        let (_, grad_cond) = model.denoise_backward(&cache, &grad_y, grads);
        model.conditioning_backward(&cond_cache, &grad_cond, grads);
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("training loss went {loss}")));
    }
    Ok(loss)
}

fn check_t(t: usize, sched: &NoiseSchedule) -> Result<()> {
    if t == 0 || t > sched.steps() {
        return Err(Error::Domain(format!(
            "timestep draw {t} outside 1..={}",
            sched.steps()
        )));
    }
    Ok(())
}

/// Returns (Σ (y−target)², 2·(y−target)).
fn squared_error(y: &FeatureTensor, target: &FeatureTensor) -> (f64, FeatureTensor) {
    let mut grad = FeatureTensor::zeros(y.channels(), y.height(), y.width());
    let mut loss = 0.0;
    for ((g, &a), &b) in grad.values_mut().iter_mut().zip(y.values()).zip(target.values()) {
        let r = a - b;
        loss += r * r;
        *g = 2.0 * r;
    }
    (loss, grad)
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A trained model with its schedule and the per-step loss curve.
pub struct TrainOutcome {
    pub model: Model,
    pub sched: NoiseSchedule,
    pub losses: Vec<f64>,
}

/// The clip-level oracle ranking map: objects of the middle frame ranked by
/// fixation density, rasterized like a predicted map (unit interval).
pub fn oracle_rank_map(clip: &VideoClip) -> Result<GrayscaleMap> {
    let mid = clip.middle_frame();
    let objects = &clip.annotations[mid];
    if objects.is_empty() {
        return Err(Error::IncompleteInput(format!(
            "clip {}: middle frame has no annotations",
            clip.id
        )));
    }
    let ranked = assign_ranks(objects, &clip.fixations[mid])?;
    let pr = PredictedRanking::new(
        ranked.iter().map(|o| (o.tag.clone(), o.rank)).collect(),
        ranked.iter().map(|o| Some(o.bbox)).collect(),
    )?;
    predicted_ranking_map(&pr, clip.width(), clip.height())
}

/// Trains a fresh model on the given clips. Fully deterministic for a fixed
/// config. Clips must share one frame geometry.
pub fn train(dataset: &[VideoClip], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset is empty".into()));
    }
    for clip in dataset {
        clip.validate()?;
    }
    let (w, h) = (dataset[0].width(), dataset[0].height());
    let frames_per_clip = dataset[0].len();
    for clip in dataset {
        if clip.width() != w || clip.height() != h || clip.len() != frames_per_clip {
            return Err(Error::Dimension(format!(
                "clip {} geometry {}x{}x{} differs from {}x{}x{}",
                clip.id,
                clip.len(),
                clip.height(),
                clip.width(),
                frames_per_clip,
                h,
                w
            )));
        }
    }
    let model_config = ModelConfig {
        width: w,
        height: h,
        frames_per_clip,
    };
    let sched = config.schedule()?;
    let mut model = Model::init_training(model_config, derive_seed(config.seed, "model-init"))?;

    // Per-clip precomputation: clean signals, the oracle ranking map, and
    // which frames it applies to at ratio ρ.
    let zero_map = GrayscaleMap::new(w, h, vec![0.0; w * h])?;
    let chosen: HashSet<usize> = ratio_frame_indices(config.rank_ratio, frames_per_clip)?
        .into_iter()
        .collect();
    let mut signals: Vec<Vec<FeatureTensor>> = Vec::with_capacity(dataset.len());
    let mut rank_maps: Vec<GrayscaleMap> = Vec::with_capacity(dataset.len());
    for clip in dataset {
        signals.push(
            clip.saliency
                .iter()
                .map(to_signal)
                .collect::<Result<Vec<_>>>()?,
        );
        rank_maps.push(oracle_rank_map(clip)?);
    }

    let mut params = model.flatten();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut losses = Vec::with_capacity(config.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "train-loop"));
    let mut grads = ModelGrads::zeros_like(&model);

    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        let mut t_draws = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let ci = rng.gen_range(0..dataset.len());
            let fi = rng.gen_range(0..frames_per_clip);
            let rank_map = if chosen.contains(&fi) {
                rank_maps[ci].clone()
            } else {
                zero_map.clone()
            };
            batch.push(TrainClipItem {
                m0: signals[ci][fi].clone(),
                clip: &dataset[ci],
                rank_map,
            });
            t_draws.push(rng.gen_range(1..=sched.steps()));
        }
        zero_grads(&mut grads);
        let noise_seed = derive_seed_indexed(config.seed, "step-noise", step as u64);
        let loss = training_step_joint(&batch, &t_draws, noise_seed, &model, &sched, &mut grads)
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!(
                    "at step {}: {msg} (last finite step: {step})",
                    step + 1
                )),
                other => other,
            })?;
        losses.push(loss);
        adam.step(&mut params, &grads.flatten());
        model.set_from_flat(&params)?;
    }

    Ok(TrainOutcome {
        model,
        sched,
        losses,
    })
}

fn zero_grads(grads: &mut ModelGrads) {
    grads.scale(0.0);
}

/// Mean of `values[i..i+window]` clamped to the tail; used for the smoothed
/// loss-curve checks.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    if values.is_empty() || window == 0 {
        return Vec::new();
    }
    (0..values.len())
        .map(|i| {
            let end = (i + window).min(values.len());
            values[i..end].iter().sum::<f64>() / (end - i) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::model::COND_CHANNELS;

    fn tiny_model() -> Model {
        Model::init_fd_check(
            ModelConfig {
                width: 8,
                height: 8,
                frames_per_clip: 2,
            },
            5,
        )
        .unwrap()
    }

    fn batch_of(n: usize, _model: &Model) -> Vec<TrainBatchItem> {
        (0..n)
            .map(|i| TrainBatchItem {
                m0: {
                    let mut m = standard_normal(1, 8, 8, 100 + i as u64);
                    for v in m.values_mut() {
                        *v = v.tanh();
                    }
                    m
                },
                cond: standard_normal(COND_CHANNELS, 2, 2, 200 + i as u64),
            })
            .collect()
    }

    #[test]
    fn loss_is_nonnegative_and_finite() {
        let model = tiny_model();
        let sched = NoiseSchedule::default_schedule();
        let batch = batch_of(3, &model);
        let mut grads = ModelGrads::zeros_like(&model);
        let loss = training_step(&batch, &[10, 50, 99], 7, &model, &sched, &mut grads).unwrap();
        assert!(loss >= 0.0 && loss.is_finite());
    }

    #[test]
    fn perfect_predictor_has_zero_loss_and_zero_head_gradient() {
        // A model with all-zero weights and the target being the zero map:
        // D_θ ≡ 0 = m0, so loss = 0 and all gradients vanish.
        let mut model = tiny_model();
        let zeros = vec![0.0; model.param_count()];
        model.set_from_flat(&zeros).unwrap();
        let sched = NoiseSchedule::default_schedule();
        let batch = vec![TrainBatchItem {
            m0: FeatureTensor::zeros(1, 8, 8),
            cond: standard_normal(COND_CHANNELS, 2, 2, 3),
        }];
        let mut grads = ModelGrads::zeros_like(&model);
        let loss = training_step(&batch, &[42], 9, &model, &sched, &mut grads).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_empty_batch_and_bad_t() {
        let model = tiny_model();
        let sched = NoiseSchedule::default_schedule();
        let mut grads = ModelGrads::zeros_like(&model);
        assert!(matches!(
            training_step(&[], &[], 0, &model, &sched, &mut grads),
            Err(Error::EmptyInput(_))
        ));
        let batch = batch_of(1, &model);
        assert!(matches!(
            training_step(&batch, &[0], 0, &model, &sched, &mut grads),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            training_step(&batch, &[101], 0, &model, &sched, &mut grads),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn denoiser_gradients_match_finite_differences() {
        let sched = NoiseSchedule::default_schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for init_seed in [11u64, 12, 13] {
            let mut model = Model::init_fd_check(
                ModelConfig {
                    width: 8,
                    height: 8,
                    frames_per_clip: 1,
                },
                init_seed,
            )
            .unwrap();
            let batch = batch_of(2, &model);
            let t_draws = [30, 77];
            let noise_seed = 1000 + init_seed;
            let mut grads = ModelGrads::zeros_like(&model);
            training_step(&batch, &t_draws, noise_seed, &model, &sched, &mut grads).unwrap();
            let analytic = grads.flatten();
            let mut params = model.flatten();
            let denoiser_params = analytic.len() - 224 - 1168; // encoder tail
            for _ in 0..40 {
                let idx = rng.gen_range(0..denoiser_params);
                let h = 1e-4 * params[idx].abs().max(1.0);
                let orig = params[idx];
                params[idx] = orig + h;
                model.set_from_flat(&params).unwrap();
                let mut scratch = ModelGrads::zeros_like(&model);
                let up =
                    training_step(&batch, &t_draws, noise_seed, &model, &sched, &mut scratch)
                        .unwrap();
                params[idx] = orig - h;
                model.set_from_flat(&params).unwrap();
                let mut scratch = ModelGrads::zeros_like(&model);
                let down =
                    training_step(&batch, &t_draws, noise_seed, &model, &sched, &mut scratch)
                        .unwrap();
                params[idx] = orig;
                model.set_from_flat(&params).unwrap();
                let fd = (up - down) / (2.0 * h);
                let denom = analytic[idx].abs().max(fd.abs()).max(1e-7);
                assert!(
                    (analytic[idx] - fd).abs() / denom <= 1e-4,
                    "seed {init_seed} param {idx}: analytic {} vs fd {fd}",
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize f(x) = Σ (x−3)²
        let mut params = vec![0.0; 4];
        let mut adam = Adam::new(4, 0.1);
        for _ in 0..300 {
            let grads: Vec<f64> = params.iter().map(|&x| 2.0 * (x - 3.0)).collect();
            adam.step(&mut params, &grads);
        }
        for x in params {
            assert!((x - 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn config_parses_partial_toml_with_defaults() {
        let config = TrainConfig::from_toml("steps = 50\nlearning_rate = 0.01\n").unwrap();
        assert_eq!(config.steps, 50);
        assert_eq!(config.learning_rate, 0.01);
        assert_eq!(config.batch_size, TrainConfig::default().batch_size);
        assert!(TrainConfig::from_toml("bogus_key = 1").is_err());
    }

    #[test]
    #[ignore = "timing probe, run explicitly"]
    fn bench_training_step_wall_clock() {
        let model = Model::init_training(ModelConfig::default(), 1).unwrap();
        let sched = NoiseSchedule::default_schedule();
        let batch: Vec<TrainBatchItem> = (0..8)
            .map(|i| TrainBatchItem {
                m0: {
                    let mut m = standard_normal(1, 24, 32, 100 + i as u64);
                    for v in m.values_mut() {
                        *v = v.tanh();
                    }
                    m
                },
                cond: standard_normal(COND_CHANNELS, 6, 8, 200 + i as u64),
            })
            .collect();
        let t_draws = [10, 20, 30, 40, 50, 60, 70, 80];
        let mut grads = ModelGrads::zeros_like(&model);
        let start = std::time::Instant::now();
        let reps = 50;
        for r in 0..reps {
            zero_grads(&mut grads);
            training_step(&batch, &t_draws, r, &model, &sched, &mut grads).unwrap();
        }
        let per_step = start.elapsed().as_secs_f64() / reps as f64;
        let mt = standard_normal(1, 24, 32, 5);
        let cond = standard_normal(COND_CHANNELS, 6, 8, 6);
        let start = std::time::Instant::now();
        for t in 0..200 {
            model.denoise(&mt, t % 100 + 1, &cond).unwrap();
        }
        let per_denoise = start.elapsed().as_secs_f64() / 200.0;
        println!(
            "training_step (batch 8, 32x24): {:.1} ms; denoise fwd: {:.2} ms; \
             2000 steps ≈ {:.0} s; full 100-step decode ≈ {:.2} s",
            per_step * 1e3,
            per_denoise * 1e3,
            per_step * 2000.0,
            per_denoise * 100.0
        );
    }

    #[test]
    fn smoothed_window_averages() {
        let vals = vec![4.0, 2.0, 0.0, 6.0];
        assert_eq!(smoothed(&vals, 2), vec![3.0, 1.0, 3.0, 6.0]);
        assert!(smoothed(&[], 3).is_empty());
    }
}
