//! Synthetic "blob-world" clips: colored disks drifting over a noisy
//! background, with fixations sampled from a known attention mixture.
//!
//! Each clip carries K disks with attention weights w_k (Σw_k = 1). Per
//! frame, `n_fix` fixations each pick disk k with probability w_k and land
//! uniformly inside it; the ground-truth saliency map is the fixation map
//! blurred with a Gaussian and peak-normalized. Because the generating
//! weights are known, object-ranking behaviour can be verified against the
//! mixture itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{BoundingBox, FixationMap, Frame, GrayscaleMap, VideoClip};
use crate::seedutil::derive_seed_indexed;

/// Generator parameters, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub width: usize,
    pub height: usize,
    /// Attention weight per disk; K = weights.len(); must sum to 1.
    pub weights: Vec<f64>,
    /// Disk radius range in pixels, sampled uniformly per disk.
    pub radius: (f64, f64),
    /// Maximum per-axis speed in pixels per frame.
    pub speed: f64,
    /// Fixations sampled per frame.
    pub n_fix: usize,
    /// Gaussian blur σ for the saliency ground truth, in pixels.
    pub blur_sigma: f64,
    /// Amplitude of the uniform background noise in the RGB frames.
    pub background_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clips: 30,
            frames_per_clip: 3,
            width: 32,
            height: 24,
            weights: vec![0.7, 0.2, 0.1],
            radius: (3.0, 5.0),
            speed: 2.0,
            n_fix: 120,
            blur_sigma: 32.0 / 30.0,
            background_noise: 0.08,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips == 0 || self.frames_per_clip == 0 || self.n_fix == 0 {
            return Err(Error::Spec(
                "n_clips, frames_per_clip, and n_fix must be ≥ 1".into(),
            ));
        }
        if self.weights.is_empty() {
            return Err(Error::Spec("at least one disk weight required".into()));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Spec("disk weights must be positive".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("disk weights sum to {sum}, need 1")));
        }
        let (lo, hi) = self.radius;
        if !(lo > 0.0) || hi < lo {
            return Err(Error::Spec(format!("bad radius range {lo}..{hi}")));
        }
        let half = (self.width.min(self.height) as f64) / 2.0;
        if hi >= half {
            return Err(Error::Spec(format!(
                "disk radius up to {hi} cannot fit a {}x{} frame",
                self.width, self.height
            )));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::Spec("blur_sigma must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.background_noise) {
            return Err(Error::Spec("background_noise must lie in [0,1)".into()));
        }
        if self.speed < 0.0 {
            return Err(Error::Spec("speed must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Disk {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    r: f64,
    color: [f64; 3],
}

impl Disk {
    /// Advances one frame, reflecting velocity at the walls so the disk
    /// always stays fully inside the frame.
    fn step(&mut self, width: f64, height: f64) {
        self.x += self.vx;
        self.y += self.vy;
        if self.x < self.r {
            self.x = 2.0 * self.r - self.x;
            self.vx = -self.vx;
        }
        if self.x > width - self.r {
            self.x = 2.0 * (width - self.r) - self.x;
            self.vx = -self.vx;
        }
        if self.y < self.r {
            self.y = 2.0 * self.r - self.y;
            self.vy = -self.vy;
        }
        if self.y > height - self.r {
            self.y = 2.0 * (height - self.r) - self.y;
            self.vy = -self.vy;
        }
    }

    /// Tight pixel bounding box, clipped to the frame.
    fn bbox(&self, width: usize, height: usize) -> BoundingBox {
        let x0 = (self.x - self.r).floor().max(0.0) as u32;
        let y0 = (self.y - self.r).floor().max(0.0) as u32;
        let x1 = (((self.x + self.r).floor() as usize) + 1).min(width) as u32;
        let y1 = (((self.y + self.r).floor() as usize) + 1).min(height) as u32;
        BoundingBox::new(x0, y0, x1, y1).expect("disk box is non-degenerate by construction")
    }
}

/// Generates the synthetic dataset. Deterministic per spec (clips draw from
/// independent seed streams, so changing `n_clips` never reshuffles earlier
/// clips).
pub fn generate(spec: &SynthSpec) -> Result<Vec<VideoClip>> {
    spec.validate()?;
    (0..spec.n_clips)
        .map(|i| generate_clip(spec, i))
        .collect()
}

fn generate_clip(spec: &SynthSpec, index: usize) -> Result<VideoClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_indexed(spec.seed, "synth-clip", index as u64));
    let (w, h) = (spec.width, spec.height);
    let (wf, hf) = (w as f64, h as f64);
    let k = spec.weights.len();

    let mut disks: Vec<Disk> = (0..k)
        .map(|_| {
            let r = rng.gen_range(spec.radius.0..=spec.radius.1);
            Disk {
                x: rng.gen_range(r..=wf - r),
                y: rng.gen_range(r..=hf - r),
                vx: rng.gen_range(-spec.speed..=spec.speed),
                vy: rng.gen_range(-spec.speed..=spec.speed),
                r,
                color: [
                    rng.gen_range(0.25..=1.0),
                    rng.gen_range(0.25..=1.0),
                    rng.gen_range(0.25..=1.0),
                ],
            }
        })
        .collect();

    let cumulative: Vec<f64> = spec
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.frames_per_clip);
    let mut fixations = Vec::with_capacity(spec.frames_per_clip);
    let mut saliency = Vec::with_capacity(spec.frames_per_clip);
    let mut annotations = Vec::with_capacity(spec.frames_per_clip);

    for frame_idx in 0..spec.frames_per_clip {
        if frame_idx > 0 {
            for disk in &mut disks {
                disk.step(wf, hf);
            }
        }

        // RGB frame: uniform noise background, then disks in index order.
        let mut rgb = vec![0.0; 3 * w * h];
        for v in &mut rgb {
            *v = rng.gen_range(0.0..spec.background_noise.max(f64::MIN_POSITIVE));
        }
        for disk in &disks {
            let bbox = disk.bbox(w, h);
            for y in bbox.y0 as usize..bbox.y1 as usize {
                for x in bbox.x0 as usize..bbox.x1 as usize {
                    let dx = x as f64 + 0.5 - disk.x;
                    let dy = y as f64 + 0.5 - disk.y;
                    if dx * dx + dy * dy <= disk.r * disk.r {
                        for c in 0..3 {
                            rgb[c * w * h + y * w + x] = disk.color[c];
                        }
                    }
                }
            }
        }
        frames.push(Frame::new(w, h, rgb, frame_idx)?);

        // Fixations: disk by weight, point uniform inside the disk.
        let mut points = Vec::with_capacity(spec.n_fix);
        for _ in 0..spec.n_fix {
            let u: f64 = rng.gen();
            let di = cumulative.partition_point(|&c| c < u).min(k - 1);
            let disk = &disks[di];
            let radius = disk.r * rng.gen_range(0.0f64..=1.0).sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let px = ((disk.x + radius * theta.cos()).floor().max(0.0) as usize).min(w - 1);
            let py = ((disk.y + radius * theta.sin()).floor().max(0.0) as usize).min(h - 1);
            points.push((px, py));
        }
        let fix = FixationMap::from_points(w, h, &points)?;

        // Saliency ground truth: blurred fixation map, peak-normalized.
        let blurred = gaussian_blur(fix.base(), spec.blur_sigma);
        let peak = blurred.max_value();
        let sal = if peak > 0.0 {
            blurred.map_values(|v| v / peak)?
        } else {
            blurred
        };
        fixations.push(fix);
        saliency.push(sal);

        annotations.push(
            disks
                .iter()
                .enumerate()
                .map(|(di, d)| (format!("disk{di}"), d.bbox(w, h)))
                .collect(),
        );
    }

    let clip = VideoClip {
        id: format!("clip{index:03}"),
        frames,
        fixations,
        saliency,
        annotations,
    };
    clip.validate()?;
    Ok(clip)
}

/// Separable Gaussian blur with zero padding; kernel truncated at 3σ and
/// normalized to unit sum.
pub fn gaussian_blur(map: &GrayscaleMap, sigma: f64) -> GrayscaleMap {
    assert!(sigma > 0.0, "sigma must be positive");
    let q = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * q + 1) as usize);
    for d in -q..=q {
        kernel.push((-((d * d) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }
    let (w, h) = (map.width(), map.height());
    // Horizontal pass.
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = x as i64 + ki as i64 - q;
                if sx >= 0 && sx < w as i64 {
                    acc += kv * map.get(sx as usize, y);
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y as i64 + ki as i64 - q;
                if sy >= 0 && sy < h as i64 {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    GrayscaleMap::new(w, h, out).expect("blur of a valid map is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::assign_ranks;

    #[test]
    fn default_spec_is_valid_and_deterministic() {
        let spec = SynthSpec::default();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.len(), 30);
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.id, cb.id);
            for (fa, fb) in ca.frames.iter().zip(&cb.frames) {
                assert_eq!(fa.rgb(), fb.rgb());
            }
            for (sa, sb) in ca.saliency.iter().zip(&cb.saliency) {
                assert_eq!(sa.values(), sb.values());
            }
        }
        let spec2 = SynthSpec {
            seed: 1,
            ..SynthSpec::default()
        };
        let c = generate(&spec2).unwrap();
        assert_ne!(a[0].frames[0].rgb(), c[0].frames[0].rgb());
    }

    #[test]
    fn every_clip_passes_validation() {
        let spec = SynthSpec {
            n_clips: 5,
            ..SynthSpec::default()
        };
        for clip in generate(&spec).unwrap() {
            clip.validate().unwrap();
            assert_eq!(clip.len(), 3);
            assert_eq!(clip.annotations[0].len(), 3);
            // Peak-normalized saliency.
            for sal in &clip.saliency {
                assert!((sal.max_value() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_disk_fixations_fall_inside_its_box() {
        let spec = SynthSpec {
            n_clips: 10,
            weights: vec![1.0],
            ..SynthSpec::default()
        };
        for clip in generate(&spec).unwrap() {
            for (fix, objects) in clip.fixations.iter().zip(&clip.annotations) {
                let bbox = objects[0].1;
                for y in 0..clip.height() {
                    for x in 0..clip.width() {
                        if fix.is_fixated(x, y) {
                            assert!(
                                bbox.contains(x as u32, y as u32),
                                "fixation ({x},{y}) outside {bbox:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_geometry_is_rejected() {
        let spec = SynthSpec {
            radius: (10.0, 14.0),
            width: 24,
            height: 24,
            ..SynthSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
        let spec = SynthSpec {
            weights: vec![0.5, 0.4],
            ..SynthSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn disks_never_leave_the_frame() {
        let spec = SynthSpec {
            n_clips: 8,
            frames_per_clip: 12,
            speed: 5.0,
            ..SynthSpec::default()
        };
        for clip in generate(&spec).unwrap() {
            for per_frame in &clip.annotations {
                for (_, bbox) in per_frame {
                    bbox.check_within(32, 24).unwrap();
                }
            }
        }
    }

    #[test]
    fn saliency_mass_tracks_attention_weights() {
        // Mean saliency inside each disk's box should order like w on a
        // large majority of frames.
        let spec = SynthSpec {
            n_clips: 40,
            ..SynthSpec::default()
        };
        let clips = generate(&spec).unwrap();
        let mut ordered = 0usize;
        let mut total = 0usize;
        for clip in &clips {
            for (sal, objects) in clip.saliency.iter().zip(&clip.annotations) {
                let mean_in = |b: &BoundingBox| -> f64 {
                    let mut acc = 0.0;
                    for y in b.y0..b.y1 {
                        for x in b.x0..b.x1 {
                            acc += sal.get(x as usize, y as usize);
                        }
                    }
                    acc / b.area() as f64
                };
                let means: Vec<f64> = objects.iter().map(|(_, b)| mean_in(b)).collect();
                total += 1;
                if means[0] > means[1] && means[1] > means[2] {
                    ordered += 1;
                }
            }
        }
        let rate = ordered as f64 / total as f64;
        assert!(rate > 0.7, "weight-order rate {rate} over {total} frames");
    }

    #[test]
    fn blur_preserves_mass_in_the_interior() {
        // A centred impulse far from borders keeps its mass under a
        // unit-sum kernel.
        let mut values = vec![0.0; 41 * 41];
        values[20 * 41 + 20] = 1.0;
        let map = GrayscaleMap::new(41, 41, values).unwrap();
        let blurred = gaussian_blur(&map, 2.0);
        assert!((blurred.sum() - 1.0).abs() < 1e-9);
        // Peak at the impulse.
        let mut best = (0, 0);
        let mut best_v = -1.0;
        for y in 0..41 {
            for x in 0..41 {
                if blurred.get(x, y) > best_v {
                    best_v = blurred.get(x, y);
                    best = (x, y);
                }
            }
        }
        assert_eq!(best, (20, 20));
    }

    #[test]
    fn rank_recovery_rate_matches_independent_simulation() {
        // With w = (0.7, 0.2, 0.1) and only 20 fixations per frame, how
        // often does fixation-count ranking recover the weight order? The
        // generator's empirical rate must agree with an independent
        // Monte-Carlo simulation of the same mixture process. (The rate
        // itself is far below a perfect-recovery regime at n_fix = 20:
        // the simulation places it near 0.7, so a ≥0.95 target would be
        // unattainable for this mixture; see the module docs.)
        let spec = SynthSpec {
            n_clips: 67, // 201 frames
            n_fix: 20,
            ..SynthSpec::default()
        };
        let clips = generate(&spec).unwrap();
        let mut hits = 0usize;
        let mut frames = 0usize;
        for clip in &clips {
            for (objects, fix) in clip.annotations.iter().zip(&clip.fixations) {
                let ranked = assign_ranks(objects, fix).unwrap();
                frames += 1;
                if ranked[0].tag == "disk0" && ranked[1].tag == "disk1" && ranked[2].tag == "disk2"
                {
                    hits += 1;
                }
            }
        }
        let impl_rate = hits as f64 / frames as f64;

        // Independent oracle: same distributions, fresh arithmetic, no
        // generator code.
        let mut rng = ChaCha8Rng::seed_from_u64(0xFEED5EED);
        let trials = 4000;
        let mut oracle_hits = 0usize;
        for _ in 0..trials {
            let spec_d = SynthSpec::default();
            let (w, h) = (spec_d.width as f64, spec_d.height as f64);
            let geom: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    let r = rng.gen_range(3.0..=5.0);
                    (rng.gen_range(r..=w - r), rng.gen_range(r..=h - r), r)
                })
                .collect();
            let boxes: Vec<(i64, i64, i64, i64)> = geom
                .iter()
                .map(|&(cx, cy, r)| {
                    (
                        (cx - r).floor().max(0.0) as i64,
                        (cy - r).floor().max(0.0) as i64,
                        (((cx + r).floor() as i64) + 1).min(spec_d.width as i64),
                        (((cy + r).floor() as i64) + 1).min(spec_d.height as i64),
                    )
                })
                .collect();
            let mut pixels = std::collections::HashSet::new();
            for _ in 0..20 {
                let u: f64 = rng.gen();
                let di = if u < 0.7 {
                    0
                } else if u < 0.9 {
                    1
                } else {
                    2
                };
                let (cx, cy, r) = geom[di];
                let rad = r * rng.gen_range(0.0f64..=1.0).sqrt();
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                let px = ((cx + rad * th.cos()).floor().max(0.0) as i64)
                    .min(spec_d.width as i64 - 1);
                let py = ((cy + rad * th.sin()).floor().max(0.0) as i64)
                    .min(spec_d.height as i64 - 1);
                pixels.insert((px, py));
            }
            let score = |bi: usize| -> f64 {
                let (x0, y0, x1, y1) = boxes[bi];
                let count = pixels
                    .iter()
                    .filter(|&&(px, py)| px >= x0 && px < x1 && py >= y0 && py < y1)
                    .count();
                count as f64 / (((x1 - x0) * (y1 - y0)) as f64).sqrt()
            };
            let (s0, s1, s2) = (score(0), score(1), score(2));
            if s0 > s1 && s1 > s2 {
                oracle_hits += 1;
            }
        }
        let oracle_rate = oracle_hits as f64 / trials as f64;
        let p = (impl_rate + oracle_rate) / 2.0;
        let se = (p * (1.0 - p) * (1.0 / frames as f64 + 1.0 / trials as f64)).sqrt();
        assert!(
            (impl_rate - oracle_rate).abs() <= 4.0 * se.max(0.01),
            "generator rate {impl_rate:.3} vs simulated rate {oracle_rate:.3} (se {se:.3})"
        );
    }
}
