//! Predicted ranking maps: rasterizing ranked objects into grayscale
//! conditioning maps, plus random maps for the replacement experiment.
//!
//! Intensity follows rank: rank 1 of m renders at 1.0, rank m at 0.0, with
//! linear steps between. Overlaps sum and clamp to 1, so brighter always
//! means higher-ranked.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{BoundingBox, GrayscaleMap};

/// Ranked objects with their grounded locations, aligned by index.
///
/// A `None` box means grounding failed for that object; it is skipped at
/// render time but keeps its rank, preserving the ordinal positions of the
/// objects that were localized.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedRanking {
    objects: Vec<(String, u32)>,
    boxes: Vec<Option<BoundingBox>>,
}

impl PredictedRanking {
    /// Ranks must be exactly the set {1..m} and boxes must align 1:1.
    pub fn new(objects: Vec<(String, u32)>, boxes: Vec<Option<BoundingBox>>) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::EmptyInput("ranking holds no objects".into()));
        }
        if objects.len() != boxes.len() {
            return Err(Error::Dimension(format!(
                "{} objects but {} boxes",
                objects.len(),
                boxes.len()
            )));
        }
        let mut ranks: Vec<u32> = objects.iter().map(|&(_, r)| r).collect();
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(i, &r)| r != i as u32 + 1) {
            return Err(Error::Domain(format!(
                "ranks must be a permutation of 1..={}, got {ranks:?}",
                objects.len()
            )));
        }
        Ok(Self { objects, boxes })
    }

    /// Number of ranked objects, m, including any that failed grounding.
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty rankings
    }

    pub fn objects(&self) -> &[(String, u32)] {
        &self.objects
    }

    pub fn boxes(&self) -> &[Option<BoundingBox>] {
        &self.boxes
    }

    /// (tag, rank, box) for each object the grounder localized.
    pub fn localized(&self) -> impl Iterator<Item = (&str, u32, &BoundingBox)> {
        self.objects
            .iter()
            .zip(&self.boxes)
            .filter_map(|(&(ref tag, rank), bbox)| bbox.as_ref().map(|b| (tag.as_str(), rank, b)))
    }
}

/// Grayscale intensity of rank `rank` among `m` objects: 1 − (rank−1)/(m−1).
/// A sole object (m = 1) gets 1.0.
pub fn rstar(rank: u32, m: u32) -> Result<f64> {
    if rank < 1 || rank > m {
        return Err(Error::Domain(format!("rank {rank} outside 1..={m}")));
    }
    if m == 1 {
        return Ok(1.0);
    }
    Ok(1.0 - (rank - 1) as f64 / (m - 1) as f64)
}

/// Rasterizes a ranking: each localized object contributes rstar(rank, m)
/// over its box, sums clamp to 1, background stays 0.
pub fn predicted_ranking_map(
    pr: &PredictedRanking,
    width: usize,
    height: usize,
) -> Result<GrayscaleMap> {
    let m = pr.len() as u32;
    let mut values = vec![0.0; width * height];
    for (_, rank, bbox) in pr.localized() {
        bbox.check_within(width, height)?;
        let intensity = rstar(rank, m)?;
        for y in bbox.y0..bbox.y1 {
            let row = y as usize * width;
            for x in bbox.x0..bbox.x1 {
                values[row + x as usize] += intensity;
            }
        }
    }
    for v in &mut values {
        *v = v.min(1.0);
    }
    GrayscaleMap::new(width, height, values)
}

/// A uniformly random ranking map: `n_boxes` random boxes (corners resampled
/// until area ≥ 1% of the frame) with ranks a random permutation of
/// 1..=n_boxes. Deterministic for a fixed seed.
pub fn random_ranking_map(
    seed: u64,
    n_boxes: u32,
    width: usize,
    height: usize,
) -> Result<GrayscaleMap> {
    let pr = random_ranking(seed, n_boxes, width, height)?;
    predicted_ranking_map(&pr, width, height)
}

/// The ranking behind [`random_ranking_map`], exposed so callers can also
/// write the sidecar listing.
pub fn random_ranking(
    seed: u64,
    n_boxes: u32,
    width: usize,
    height: usize,
) -> Result<PredictedRanking> {
    if n_boxes < 1 {
        return Err(Error::Domain("n_boxes must be ≥ 1".into()));
    }
    if width < 1 || height < 1 {
        return Err(Error::Dimension("frame must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_area = ((width * height) as f64 * 0.01).ceil() as u64;
    let mut objects = Vec::with_capacity(n_boxes as usize);
    let mut boxes = Vec::with_capacity(n_boxes as usize);
    for i in 0..n_boxes {
        let bbox = loop {
            let xa = rng.gen_range(0..=width as u32);
            let xb = rng.gen_range(0..=width as u32);
            let ya = rng.gen_range(0..=height as u32);
            let yb = rng.gen_range(0..=height as u32);
            let (x0, x1) = (xa.min(xb), xa.max(xb));
            let (y0, y1) = (ya.min(yb), ya.max(yb));
            if x0 == x1 || y0 == y1 {
                continue;
            }
            let candidate = BoundingBox::new(x0, y0, x1, y1)?;
            if candidate.area() >= min_area {
                break candidate;
            }
        };
        objects.push((format!("box{i}"), 0));
        boxes.push(Some(bbox));
    }
    let mut ranks: Vec<u32> = (1..=n_boxes).collect();
    ranks.shuffle(&mut rng);
    for (obj, rank) in objects.iter_mut().zip(ranks) {
        obj.1 = rank;
    }
    PredictedRanking::new(objects, boxes)
}

/// Indices of the ⌈ratio·len⌉ evenly-spaced frames that receive a ranking
/// map; remaining frames get a zero map. The first frame is always included
/// whenever the count is non-zero.
pub fn ratio_frame_indices(ratio: f64, len: usize) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("ratio {ratio} outside [0,1]")));
    }
    let n = (ratio * len as f64).ceil() as usize;
    Ok((0..n).map(|i| i * len / n.max(1)).collect())
}

/// One sidecar line describing an object that contributed to a ranking map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub tag: String,
    pub rank: u32,
    pub rstar: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Sidecar listing of the localized (rendered) objects of a ranking.
pub fn sidecar_entries(pr: &PredictedRanking) -> Result<Vec<SidecarEntry>> {
    let m = pr.len() as u32;
    pr.localized()
        .map(|(tag, rank, bbox)| {
            Ok(SidecarEntry {
                tag: tag.to_string(),
                rank,
                rstar: rstar(rank, m)?,
                bbox: *bbox,
            })
        })
        .collect()
}
