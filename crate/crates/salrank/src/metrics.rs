//! Saliency evaluation metrics: CC, NSS, SIM, AUC-Judd, and Spearman rank
//! correlation.
//!
//! Conventions: NSS standardizes with the population standard deviation of
//! the whole predicted map; AUC-Judd treats every non-fixation pixel as a
//! negative (no sampling); SIM normalizes both maps to unit mass before the
//! min-intersection; Spearman handles ties with average ranks.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::map::{FixationMap, GrayscaleMap};

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson linear correlation between two maps, over all pixels.
pub fn cc(pred: &GrayscaleMap, gt: &GrayscaleMap) -> Result<f64> {
    pred.same_shape(gt)?;
    pearson(pred.values(), gt.values())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, sa) = mean_and_population_std(a);
    let (mb, sb) = mean_and_population_std(b);
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation of a constant map".into(),
        ));
    }
    let n = a.len() as f64;
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Mean standardized predicted value over fixated pixels.
pub fn nss(pred: &GrayscaleMap, fix: &FixationMap) -> Result<f64> {
    pred.same_shape(fix.base())?;
    let n_fix = fix.count();
    if n_fix == 0 {
        return Err(Error::UndefinedMetric("NSS with zero fixations".into()));
    }
    let (mean, std) = mean_and_population_std(pred.values());
    if std == 0.0 {
        return Err(Error::UndefinedMetric("NSS of a constant map".into()));
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(fix.base().values())
        .filter(|(_, f)| **f > 0.0)
        .map(|(p, _)| (p - mean) / std)
        .sum();
    Ok(sum / n_fix as f64)
}

/// Histogram intersection of the two maps normalized to unit mass.
pub fn sim(pred: &GrayscaleMap, gt: &GrayscaleMap) -> Result<f64> {
    pred.same_shape(gt)?;
    let (sp, sg) = (pred.sum(), gt.sum());
    if sp <= 0.0 || sg <= 0.0 {
        return Err(Error::UndefinedMetric("SIM of a zero-mass map".into()));
    }
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p / sp).min(g / sg))
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// ROC area with fixated pixels as positives and all other pixels as
/// negatives; thresholds swept over the predicted values at fixations,
/// integrated with the trapezoid rule including the (0,0) and (1,1)
/// endpoints.
pub fn auc_judd(pred: &GrayscaleMap, fix: &FixationMap) -> Result<f64> {
    pred.same_shape(fix.base())?;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (p, f) in pred.values().iter().zip(fix.base().values()) {
        if *f > 0.0 {
            pos.push(*p);
        } else {
            neg.push(*p);
        }
    }
    if pos.is_empty() {
        return Err(Error::UndefinedMetric("AUC-J with zero fixations".into()));
    }
    if neg.is_empty() {
        return Err(Error::UndefinedMetric(
            "AUC-J with every pixel fixated".into(),
        ));
    }

    // Distinct thresholds, descending, taken from the fixation values.
    let mut thresholds = pos.clone();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    // Sort both sides so each count is a binary search instead of a scan.
    let mut pos_sorted = pos;
    pos_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut neg_sorted = neg;
    neg_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let count_ge = |sorted: &[f64], t: f64| -> usize {
        sorted.len() - sorted.partition_point(|v| *v < t)
    };

    let n_pos = pos_sorted.len() as f64;
    let n_neg = neg_sorted.len() as f64;
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push((0.0, 0.0));
    for t in thresholds {
        let tpr = count_ge(&pos_sorted, t) as f64 / n_pos;
        let fpr = count_ge(&neg_sorted, t) as f64 / n_neg;
        points.push((fpr, tpr));
    }
    points.push((1.0, 1.0));

    let mut area = 0.0;
    for w in points.windows(2) {
        let (f0, t0) = w[0];
        let (f1, t1) = w[1];
        area += (f1 - f0) * (t0 + t1) / 2.0;
    }
    Ok(area.clamp(0.0, 1.0))
}

/// Ranks with average-rank tie handling (1-based).
fn average_ranks(values: &[i64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the same value; assign their mean rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation of two equal-length rank lists.
pub fn spearman(ranks_a: &[i64], ranks_b: &[i64]) -> Result<f64> {
    if ranks_a.len() != ranks_b.len() {
        return Err(Error::Dimension(format!(
            "rank lists of different length: {} vs {}",
            ranks_a.len(),
            ranks_b.len()
        )));
    }
    if ranks_a.len() < 2 {
        return Err(Error::UndefinedMetric(
            "Spearman needs at least two pairs".into(),
        ));
    }
    let ra = average_ranks(ranks_a);
    let rb = average_ranks(ranks_b);
    pearson(&ra, &rb)
}

/// Per-frame metric values; `None` marks a frame where the metric is
/// undefined (constant prediction, zero fixations).
#[derive(Debug, Clone, Default)]
pub struct FrameMetrics {
    pub auc_j: Option<f64>,
    pub cc: Option<f64>,
    pub sim: Option<f64>,
    pub nss: Option<f64>,
}

impl FrameMetrics {
    /// Evaluates all four metrics, recording undefined ones as `None`.
    pub fn evaluate(pred: &GrayscaleMap, gt: &GrayscaleMap, fix: &FixationMap) -> Self {
        FrameMetrics {
            auc_j: auc_judd(pred, fix).ok(),
            cc: cc(pred, gt).ok(),
            sim: sim(pred, gt).ok(),
            nss: nss(pred, fix).ok(),
        }
    }
}

/// Per-frame metrics for a run plus their mean, serializable to CSV.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    /// `(frame label, metrics)` in evaluation order.
    pub frames: Vec<(String, FrameMetrics)>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

impl MetricReport {
    pub fn push(&mut self, label: impl Into<String>, metrics: FrameMetrics) {
        self.frames.push((label.into(), metrics));
    }

    /// Means over frames where each metric is defined.
    pub fn mean(&self) -> FrameMetrics {
        FrameMetrics {
            auc_j: mean_of(self.frames.iter().map(|(_, m)| m.auc_j)),
            cc: mean_of(self.frames.iter().map(|(_, m)| m.cc)),
            sim: mean_of(self.frames.iter().map(|(_, m)| m.sim)),
            nss: mean_of(self.frames.iter().map(|(_, m)| m.nss)),
        }
    }

    /// CSV with one row per frame plus a `mean` row; undefined cells hold
    /// the literal `undefined`.
    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                Some(v) => format!("{v:.6}"),
                None => "undefined".into(),
            }
        }
        let mut out = String::from("frame,auc_j,cc,sim,nss\n");
        for (label, m) in &self.frames {
            let _ = writeln!(
                out,
                "{label},{},{},{},{}",
                cell(m.auc_j),
                cell(m.cc),
                cell(m.sim),
                cell(m.nss)
            );
        }
        let m = self.mean();
        let _ = writeln!(
            out,
            "mean,{},{},{},{}",
            cell(m.auc_j),
            cell(m.cc),
            cell(m.sim),
            cell(m.nss)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: Vec<f64>) -> GrayscaleMap {
        GrayscaleMap::new(w, h, v).unwrap()
    }

    #[test]
    fn cc_of_map_with_itself_is_one() {
        let m = map(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert!((cc(&m, &m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_of_negation_is_minus_one() {
        let m = map(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let neg = map(2, 2, vec![4.0, 3.0, 2.0, 1.0]); // 5 - v
        assert!((cc(&m, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_exact_linear_relation() {
        let a = map(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = map(2, 2, vec![2.0, 4.0, 6.0, 8.0]);
        assert!((cc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_rejects_constant_map() {
        let a = map(2, 1, vec![3.0, 3.0]);
        let b = map(2, 1, vec![1.0, 2.0]);
        assert!(matches!(cc(&a, &b), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn cc_is_affine_invariant() {
        let a = map(2, 2, vec![0.3, 0.9, 0.1, 0.5]);
        let b = map(2, 2, vec![0.2, 0.8, 0.7, 0.4]);
        let scaled = a.map_values(|v| 3.0 * v + 0.5).unwrap();
        assert!((cc(&a, &b).unwrap() - cc(&scaled, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nss_single_fixation_is_z_score() {
        let pred = map(2, 1, vec![0.0, 1.0]);
        let fix = FixationMap::from_points(2, 1, &[(1, 0)]).unwrap();
        // mean 0.5, population std 0.5, z = (1 - 0.5) / 0.5 = 1
        assert!((nss(&pred, &fix).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nss_over_all_pixels_is_zero() {
        let pred = map(2, 2, vec![0.1, 0.9, 0.4, 0.6]);
        let all: Vec<(usize, usize)> = (0..2).flat_map(|y| (0..2).map(move |x| (x, y))).collect();
        let fix = FixationMap::from_points(2, 2, &all).unwrap();
        assert!(nss(&pred, &fix).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nss_is_invariant_under_positive_affine() {
        let pred = map(3, 1, vec![0.1, 0.7, 0.3]);
        let fix = FixationMap::from_points(3, 1, &[(1, 0)]).unwrap();
        let scaled = pred.map_values(|v| 7.0 * v + 2.0).unwrap();
        assert!((nss(&pred, &fix).unwrap() - nss(&scaled, &fix).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn nss_rejects_zero_fixations_and_constant_pred() {
        let pred = map(2, 1, vec![0.0, 1.0]);
        let none = FixationMap::from_points(2, 1, &[]).unwrap();
        assert!(matches!(nss(&pred, &none), Err(Error::UndefinedMetric(_))));
        let constant = map(2, 1, vec![0.5, 0.5]);
        let fix = FixationMap::from_points(2, 1, &[(0, 0)]).unwrap();
        assert!(matches!(nss(&constant, &fix), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn sim_of_identical_maps_is_one() {
        let m = map(2, 2, vec![0.1, 0.4, 0.2, 0.3]);
        assert!((sim(&m, &m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sim_of_disjoint_supports_is_zero() {
        let a = map(2, 1, vec![1.0, 0.0]);
        let b = map(2, 1, vec![0.0, 1.0]);
        assert_eq!(sim(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn sim_hand_case() {
        // Already-normalized distributions {0.5, 0.5} and {0.25, 0.75}.
        let a = map(2, 1, vec![0.5, 0.5]);
        let b = map(2, 1, vec![0.25, 0.75]);
        assert!((sim(&a, &b).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sim_is_symmetric() {
        let a = map(2, 2, vec![0.1, 0.5, 0.0, 0.4]);
        let b = map(2, 2, vec![0.3, 0.1, 0.4, 0.2]);
        assert!((sim(&a, &b).unwrap() - sim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let pred = map(2, 2, vec![0.9, 0.1, 0.2, 0.8]);
        let fix = FixationMap::from_points(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(auc_judd(&pred, &fix).unwrap(), 1.0);
    }

    #[test]
    fn auc_constant_prediction_is_half() {
        let pred = map(3, 1, vec![0.5, 0.5, 0.5]);
        let fix = FixationMap::from_points(3, 1, &[(1, 0)]).unwrap();
        assert!((auc_judd(&pred, &fix).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_all_pixels_fixated() {
        let pred = map(2, 1, vec![0.5, 0.6]);
        let fix = FixationMap::from_points(2, 1, &[(0, 0), (1, 0)]).unwrap();
        assert!(matches!(auc_judd(&pred, &fix), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let pred = map(4, 4, (0..16).map(|i| (i * 7 % 16) as f64 / 16.0).collect());
        let fix = FixationMap::from_points(4, 4, &[(0, 0), (3, 2), (1, 3)]).unwrap();
        let warped = pred.map_values(|v| (4.0 * v).exp()).unwrap();
        assert!((auc_judd(&pred, &fix).unwrap() - auc_judd(&warped, &fix).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spearman_identity_and_reversal() {
        assert!((spearman(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1, 2, 3, 4], &[4, 3, 2, 1]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_case() {
        assert!((spearman(&[1, 2, 3], &[1, 3, 2]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_needs_two_pairs() {
        assert!(matches!(spearman(&[1], &[1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn spearman_average_ranks_for_ties() {
        // Ties in the first list: values (1, 1, 2) get ranks (1.5, 1.5, 3).
        let r = average_ranks(&[1, 1, 2]);
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn report_csv_layout() {
        let mut report = MetricReport::default();
        report.push(
            "clip0/0",
            FrameMetrics {
                auc_j: Some(0.5),
                cc: None,
                sim: Some(1.0),
                nss: Some(2.0),
            },
        );
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "frame,auc_j,cc,sim,nss");
        assert_eq!(lines[1], "clip0/0,0.500000,undefined,1.000000,2.000000");
        assert!(lines[2].starts_with("mean,0.500000,undefined,"));
    }
}
