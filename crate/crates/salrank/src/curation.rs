//! Data curation: scoring objects by fixation density, assigning ranks, and
//! rasterizing ground-truth ranking maps.
//!
//! An object's score is the number of fixated pixels inside its box divided
//! by the square root of the box area, so small, densely fixated objects
//! outrank large ones with scattered gaze.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{
    count_fixations_in_box, minmax_scale_to_255, BoundingBox, FixationMap, GrayscaleMap, VideoClip,
};

/// A tagged, scored, ranked object within one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedObject {
    pub tag: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
    pub rank: u32,
}

/// One clip's supervision record: caption plus per-frame ranked objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRecord {
    pub clip_id: String,
    pub caption: String,
    pub frames: Vec<FrameObjects>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObjects {
    pub frame: usize,
    pub objects: Vec<RankedObject>,
}

impl CurationRecord {
    /// One JSON-lines record.
    pub fn to_jsonl(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_jsonl(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// Fixated-pixel count in the box over the square root of the box area.
pub fn rank_score(bbox: &BoundingBox, fix: &FixationMap) -> Result<f64> {
    let count = count_fixations_in_box(bbox, fix)?;
    Ok(count as f64 / (bbox.area() as f64).sqrt())
}

/// Scores and ranks the objects of one frame. Sorted by descending score;
/// ties broken by larger box area, then lexicographic tag. Ranks are 1..=m.
pub fn assign_ranks(
    objects: &[(String, BoundingBox)],
    fix: &FixationMap,
) -> Result<Vec<RankedObject>> {
    if objects.is_empty() {
        return Err(Error::EmptyInput("no objects to rank".into()));
    }
    let mut scored: Vec<RankedObject> = objects
        .iter()
        .map(|(tag, bbox)| {
            Ok(RankedObject {
                tag: tag.clone(),
                bbox: *bbox,
                score: rank_score(bbox, fix)?,
                rank: 0,
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| b.bbox.area().cmp(&a.bbox.area()))
            .then_with(|| a.tag.cmp(&b.tag))
    });
    for (i, obj) in scored.iter_mut().enumerate() {
        obj.rank = (i + 1) as u32;
    }
    Ok(scored)
}

/// Sum of each object's score over its box, before any scaling.
pub fn accumulate_scores(objects: &[RankedObject], width: usize, height: usize) -> Result<GrayscaleMap> {
    let mut values = vec![0.0; width * height];
    for obj in objects {
        obj.bbox.check_within(width, height)?;
        for y in obj.bbox.y0..obj.bbox.y1 {
            let row = y as usize * width;
            for x in obj.bbox.x0..obj.bbox.x1 {
                values[row + x as usize] += obj.score;
            }
        }
    }
    GrayscaleMap::new(width, height, values)
}

/// Ground-truth ranking map: per-pixel score sum, scaled so the brightest
/// pixel is 255. Pixels covered by no box stay 0.
pub fn gt_ranking_map(objects: &[RankedObject], width: usize, height: usize) -> Result<GrayscaleMap> {
    Ok(minmax_scale_to_255(&accumulate_scores(objects, width, height)?))
}

/// Builds a clip's supervision record: the caption plus per-frame ranked
/// objects. Deterministic for a fixed clip.
pub fn emit_record(clip: &VideoClip, caption: &str) -> Result<CurationRecord> {
    if caption.is_empty() {
        return Err(Error::EmptyInput("caption must be non-empty".into()));
    }
    let mut frames = Vec::with_capacity(clip.len());
    for (idx, (objects, fix)) in clip.annotations.iter().zip(&clip.fixations).enumerate() {
        if objects.is_empty() {
            return Err(Error::IncompleteInput(format!(
                "clip {}: frame {idx} has no annotations",
                clip.id
            )));
        }
        frames.push(FrameObjects {
            frame: idx,
            objects: assign_ranks(objects, fix)?,
        });
    }
    Ok(CurationRecord {
        clip_id: clip.id.clone(),
        caption: caption.to_string(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(tag: &str, bbox: BoundingBox, score: f64, rank: u32) -> RankedObject {
        RankedObject {
            tag: tag.into(),
            bbox,
            score,
            rank,
        }
    }

    #[test]
    fn rank_score_fixations_over_sqrt_area() {
        // 2 fixations inside a 3x4 box.
        let fix = FixationMap::from_points(10, 10, &[(2, 2), (3, 4), (9, 9)]).unwrap();
        let bbox = BoundingBox::new(1, 1, 4, 5).unwrap();
        let s = rank_score(&bbox, &fix).unwrap();
        assert!((s - 2.0 / 12f64.sqrt()).abs() < 1e-12);
        assert!((s - 0.57735).abs() < 1e-5);
    }

    #[test]
    fn rank_score_zero_without_fixations() {
        let fix = FixationMap::from_points(6, 6, &[(5, 5)]).unwrap();
        let bbox = BoundingBox::new(0, 0, 3, 3).unwrap();
        assert_eq!(rank_score(&bbox, &fix).unwrap(), 0.0);
    }

    #[test]
    fn rank_score_unit_box_equals_count() {
        let fix = FixationMap::from_points(4, 4, &[(2, 2)]).unwrap();
        let hit = BoundingBox::new(2, 2, 3, 3).unwrap();
        let miss = BoundingBox::new(0, 0, 1, 1).unwrap();
        assert_eq!(rank_score(&hit, &fix).unwrap(), 1.0);
        assert_eq!(rank_score(&miss, &fix).unwrap(), 0.0);
    }

    #[test]
    fn rank_score_scales_inverse_sqrt_area() {
        // The same fixations lie inside both a box and one with 4x its area.
        let fix = FixationMap::from_points(16, 16, &[(4, 4), (5, 5)]).unwrap();
        let small = BoundingBox::new(3, 3, 7, 7).unwrap();
        let large = BoundingBox::new(1, 1, 9, 9).unwrap();
        assert_eq!(large.area(), 4 * small.area());
        let ratio = rank_score(&small, &fix).unwrap() / rank_score(&large, &fix).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn assign_ranks_orders_by_score() {
        let fix = FixationMap::from_points(10, 10, &[(1, 1), (2, 1), (8, 8)]).unwrap();
        let objects = vec![
            ("sparse".to_string(), BoundingBox::new(7, 7, 10, 10).unwrap()),
            ("dense".to_string(), BoundingBox::new(0, 0, 3, 3).unwrap()),
        ];
        let ranked = assign_ranks(&objects, &fix).unwrap();
        assert_eq!(ranked[0].tag, "dense");
        assert_eq!(ranked[0].rank, 1);
        assert_eq!(ranked[1].tag, "sparse");
        assert_eq!(ranked[1].rank, 2);
    }

    #[test]
    fn assign_ranks_breaks_ties_by_area_then_tag() {
        let fix = FixationMap::from_points(20, 20, &[]).unwrap();
        let objects = vec![
            ("b".to_string(), BoundingBox::new(0, 0, 5, 10).unwrap()), // area 50
            ("a".to_string(), BoundingBox::new(10, 0, 20, 10).unwrap()), // area 100
        ];
        let ranked = assign_ranks(&objects, &fix).unwrap();
        // Equal scores (both 0); the larger-area object wins rank 1.
        assert_eq!(ranked[0].tag, "a");
        assert_eq!(ranked[1].tag, "b");

        let same_area = vec![
            ("zeta".to_string(), BoundingBox::new(0, 0, 5, 5).unwrap()),
            ("alpha".to_string(), BoundingBox::new(10, 10, 15, 15).unwrap()),
        ];
        let ranked = assign_ranks(&same_area, &fix).unwrap();
        assert_eq!(ranked[0].tag, "alpha");
    }

    #[test]
    fn assign_ranks_singleton_gets_rank_one() {
        let fix = FixationMap::from_points(5, 5, &[]).unwrap();
        let objects = vec![("only".to_string(), BoundingBox::new(0, 0, 2, 2).unwrap())];
        let ranked = assign_ranks(&objects, &fix).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].rank, 1);
        assert_eq!(ranked[0].score, 0.0);
    }

    #[test]
    fn assign_ranks_rejects_empty_list() {
        let fix = FixationMap::from_points(5, 5, &[]).unwrap();
        assert!(matches!(
            assign_ranks(&[], &fix),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ranks_are_a_permutation_with_nonincreasing_scores() {
        let fix =
            FixationMap::from_points(12, 12, &[(1, 1), (2, 2), (3, 3), (8, 8), (9, 9)]).unwrap();
        let objects: Vec<(String, BoundingBox)> = vec![
            ("u".into(), BoundingBox::new(0, 0, 5, 5).unwrap()),
            ("v".into(), BoundingBox::new(7, 7, 12, 12).unwrap()),
            ("w".into(), BoundingBox::new(2, 2, 10, 10).unwrap()),
        ];
        let ranked = assign_ranks(&objects, &fix).unwrap();
        let mut ranks: Vec<u32> = ranked.iter().map(|o| o.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3]);
        for pair in ranked.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
    }

    #[test]
    fn gt_map_of_no_objects_is_zero() {
        let m = gt_ranking_map(&[], 4, 4).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gt_map_single_object_saturates_to_255() {
        let objects = vec![obj("o", BoundingBox::new(1, 1, 3, 3).unwrap(), 0.5, 1)];
        let m = gt_ranking_map(&objects, 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expected = if (1..3).contains(&x) && (1..3).contains(&y) {
                    255.0
                } else {
                    0.0
                };
                assert_eq!(m.get(x, y), expected);
            }
        }
    }

    #[test]
    fn gt_map_overlap_hand_case() {
        // Boxes overlap on [2,4)x[0,2); scores 0.4 and 0.6.
        let objects = vec![
            obj("a", BoundingBox::new(0, 0, 4, 2).unwrap(), 0.6, 1),
            obj("b", BoundingBox::new(2, 0, 6, 2).unwrap(), 0.4, 2),
        ];
        let m = gt_ranking_map(&objects, 6, 2).unwrap();
        // Overlap carries 1.0 pre-scale, so scaling is by 255.
        assert_eq!(m.get(3, 0), 255.0);
        assert_eq!(m.get(0, 0), 153.0); // 0.6 * 255
        assert_eq!(m.get(5, 1), 102.0); // 0.4 * 255
        assert_eq!(m.get(4, 0), 102.0);
    }

    #[test]
    fn gt_map_matches_per_pixel_brute_force() {
        let objects = vec![
            obj("a", BoundingBox::new(0, 1, 5, 4).unwrap(), 0.7, 1),
            obj("b", BoundingBox::new(3, 0, 8, 3).unwrap(), 0.3, 2),
            obj("c", BoundingBox::new(2, 2, 4, 6).unwrap(), 0.1, 3),
        ];
        let (w, h) = (8, 6);
        let m = accumulate_scores(&objects, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut expected = 0.0;
                for o in &objects {
                    if o.bbox.contains(x as u32, y as u32) {
                        expected += o.score;
                    }
                }
                assert!((m.get(x, y) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_accumulation_is_sum_of_singletons() {
        let a = obj("a", BoundingBox::new(0, 0, 2, 2).unwrap(), 0.8, 1);
        let b = obj("b", BoundingBox::new(3, 3, 5, 5).unwrap(), 0.2, 2);
        let joint = accumulate_scores(&[a.clone(), b.clone()], 6, 6).unwrap();
        let only_a = accumulate_scores(&[a], 6, 6).unwrap();
        let only_b = accumulate_scores(&[b], 6, 6).unwrap();
        for i in 0..joint.len() {
            assert_eq!(
                joint.values()[i],
                only_a.values()[i] + only_b.values()[i]
            );
        }
    }

    #[test]
    fn record_serialization_is_deterministic() {
        let record = CurationRecord {
            clip_id: "clip0".into(),
            caption: "two disks drift".into(),
            frames: vec![FrameObjects {
                frame: 0,
                objects: vec![obj("d", BoundingBox::new(0, 0, 2, 2).unwrap(), 1.5, 1)],
            }],
        };
        let a = record.to_jsonl().unwrap();
        let b = record.to_jsonl().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"clip_id\":\"clip0\",\"caption\":"));
        let back = CurationRecord::from_jsonl(&a).unwrap();
        assert_eq!(back, record);
    }
}
