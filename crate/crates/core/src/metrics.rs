//! Point-wise instance segmentation scores and trait regression errors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LabeledPointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceOverlap {
    pub intersection: usize,
    pub pred_size: usize,
    pub truth_size: usize,
}

impl InstanceOverlap {
    pub fn union(&self) -> usize {
        self.pred_size + self.truth_size - self.intersection
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub pred_id: i32,
    pub truth_id: i32,
    #[serde(flatten)]
    pub overlap: InstanceOverlap,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Pairs supplied by the caller.
    Explicit,
    /// Pairs chosen by [`greedy_iou_matching`].
    GreedyIou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub matching: Matching,
    pub instances: Vec<InstanceScores>,
    pub miou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

fn labels(cloud: &LabeledPointCloud) -> Vec<i32> {
    cloud.instance_ids.clone().unwrap_or_else(|| vec![-1; cloud.len()])
}

struct Counts {
    joint: BTreeMap<(i32, i32), usize>,
    pred: BTreeMap<i32, usize>,
    truth: BTreeMap<i32, usize>,
}

fn count(pred: &LabeledPointCloud, truth: &LabeledPointCloud) -> Result<Counts> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} points, ground truth {}",
            pred.len(),
            truth.len()
        )));
    }
    let (p, t) = (labels(pred), labels(truth));
    let mut c = Counts {
        joint: BTreeMap::new(),
        pred: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    for (&a, &b) in p.iter().zip(&t) {
        *c.joint.entry((a, b)).or_default() += 1;
        *c.pred.entry(a).or_default() += 1;
        *c.truth.entry(b).or_default() += 1;
    }
    Ok(c)
}

fn overlap(c: &Counts, pred_id: i32, truth_id: i32) -> InstanceOverlap {
    InstanceOverlap {
        intersection: c.joint.get(&(pred_id, truth_id)).copied().unwrap_or(0),
        pred_size: c.pred.get(&pred_id).copied().unwrap_or(0),
        truth_size: c.truth.get(&truth_id).copied().unwrap_or(0),
    }
}

/// Scores for one overlap. Ratios with an empty denominator are 0.
pub fn instance_scores(o: InstanceOverlap) -> (f64, f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let iou = ratio(o.intersection, o.union());
    let precision = ratio(o.intersection, o.pred_size);
    let recall = ratio(o.intersection, o.truth_size);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (iou, precision, recall, f1)
}

/// Per-pair IoU, precision, recall and F1 plus their mean IoU. `pred` and
/// `truth` must label the same points in the same order.
pub fn segmentation_metrics(pred: &LabeledPointCloud, truth: &LabeledPointCloud, id_map: &[(i32, i32)]) -> Result<SegmentationReport> {
    score_pairs(&count(pred, truth)?, id_map, Matching::Explicit)
}

fn score_pairs(c: &Counts, id_map: &[(i32, i32)], matching: Matching) -> Result<SegmentationReport> {
    if id_map.is_empty() {
        return Err(Error::invalid("no instance pairs to evaluate"));
    }
    let mut instances = Vec::with_capacity(id_map.len());
    for &(pred_id, truth_id) in id_map {
        let o = overlap(c, pred_id, truth_id);
        if o.pred_size == 0 && o.truth_size == 0 {
            return Err(Error::invalid(format!(
                "pair ({pred_id}, {truth_id}) is empty on both sides"
            )));
        }
        let (iou, precision, recall, f1) = instance_scores(o);
        instances.push(InstanceScores {
            pred_id,
            truth_id,
            overlap: o,
            iou,
            precision,
            recall,
            f1,
        });
    }
    let miou = instances.iter().map(|s| s.iou).sum::<f64>() / instances.len() as f64;
    Ok(SegmentationReport {
        matching,
        instances,
        miou,
    })
}

/// One-to-one pairing by descending IoU over labels other than `-1`; ties go
/// to the smaller (pred, truth) ids. Pairs with zero overlap are not formed.
pub fn greedy_iou_matching(pred: &LabeledPointCloud, truth: &LabeledPointCloud) -> Result<Vec<(i32, i32)>> {
    let c = count(pred, truth)?;
    Ok(greedy_pairs(&c))
}

fn greedy_pairs(c: &Counts) -> Vec<(i32, i32)> {
    let mut cand: Vec<(f64, i32, i32)> = c
        .joint
        .keys()
        .filter(|(a, b)| *a >= 0 && *b >= 0)
        .map(|&(a, b)| (instance_scores(overlap(c, a, b)).0, a, b))
        .filter(|(iou, _, _)| *iou > 0.0)
        .collect();
    cand.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_p, mut used_t) = (BTreeSet::new(), BTreeSet::new());
    let mut pairs = Vec::new();
    for (_, a, b) in cand {
        if used_p.contains(&a) || used_t.contains(&b) {
            continue;
        }
        used_p.insert(a);
        used_t.insert(b);
        pairs.push((a, b));
    }
    pairs.sort_unstable_by_key(|&(_, b)| b);
    pairs
}

/// [`segmentation_metrics`] over the pairs of [`greedy_iou_matching`].
/// Ground-truth instances left unmatched are scored against an empty
/// prediction (id `-2`, never a valid label).
pub fn segmentation_metrics_greedy(pred: &LabeledPointCloud, truth: &LabeledPointCloud) -> Result<SegmentationReport> {
    let c = count(pred, truth)?;
    let mut pairs = greedy_pairs(&c);
    for &t in c.truth.keys().filter(|&&t| t >= 0) {
        if !pairs.iter().any(|&(_, b)| b == t) {
            pairs.push((-2, t));
        }
    }
    pairs.sort_unstable_by_key(|&(_, b)| b);
    score_pairs(&c, &pairs, Matching::GreedyIou)
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch(format!("{} truths vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("regression metrics need at least one pair"));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression values must be finite"));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² is undefined for constant ground truth"));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    let mae = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(RegressionMetrics {
        rmse: (ss_res / n).sqrt(),
        mae,
        r2: 1.0 - ss_res / ss_tot,
    })
}

/// Mean of per-run wall times in seconds.
pub fn avg_inference_time(durations: &[f64]) -> Result<f64> {
    if durations.is_empty() {
        return Err(Error::invalid("no durations given"));
    }
    if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::invalid(format!("duration {d} is not a positive time")));
    }
    Ok(durations.iter().sum::<f64>() / durations.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeled(ids: Vec<i32>) -> LabeledPointCloud {
        let n = ids.len();
        LabeledPointCloud::new(vec![Point3::origin(); n], None, Some(ids)).unwrap()
    }

    #[test]
    fn identical_sets_score_one() {
        let ids = vec![0, 0, 1, -1, 1, 1];
        let r = segmentation_metrics(&labeled(ids.clone()), &labeled(ids), &[(0, 0), (1, 1)]).unwrap();
        for s in &r.instances {
            assert_eq!((s.iou, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        }
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.matching, Matching::Explicit);
    }

    #[test]
    fn half_overlap() {
        // |P| = |T| = 10, |P∩T| = 5 over 15 points.
        let pred: Vec<i32> = (0..15).map(|i| if i < 10 { 3 } else { -1 }).collect();
        let truth: Vec<i32> = (0..15).map(|i| if i >= 5 { 7 } else { -1 }).collect();
        let r = segmentation_metrics(&labeled(pred), &labeled(truth), &[(3, 7)]).unwrap();
        let s = &r.instances[0];
        assert_eq!(s.overlap, InstanceOverlap { intersection: 5, pred_size: 10, truth_size: 10 });
        assert_eq!(s.iou, 1.0 / 3.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_prediction_and_errors() {
        let r = segmentation_metrics(&labeled(vec![-1, -1, 2]), &labeled(vec![0, 0, -1]), &[(1, 0)]).unwrap();
        let s = &r.instances[0];
        assert_eq!((s.iou, s.precision, s.recall, s.f1), (0.0, 0.0, 0.0, 0.0));
        assert!(segmentation_metrics(&labeled(vec![0]), &labeled(vec![0, 0]), &[(0, 0)]).is_err());
        assert!(segmentation_metrics(&labeled(vec![0]), &labeled(vec![0]), &[(5, 6)]).is_err());
        assert!(segmentation_metrics(&labeled(vec![0]), &labeled(vec![0]), &[]).is_err());
    }

    /// Set-algebra oracle over explicit index sets.
    fn oracle(pred: &[i32], truth: &[i32], a: i32, b: i32) -> (f64, f64, f64) {
        let p: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == a).collect();
        let t: BTreeSet<usize> = (0..truth.len()).filter(|&i| truth[i] == b).collect();
        let inter = p.intersection(&t).count() as f64;
        let union = p.union(&t).count() as f64;
        (inter / union, inter / p.len() as f64, inter / t.len() as f64)
    }

    #[test]
    fn random_labeling_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let pred: Vec<i32> = (0..500).map(|_| rng.gen_range(-1..4)).collect();
        let truth: Vec<i32> = (0..500).map(|_| rng.gen_range(-1..4)).collect();
        let map: Vec<(i32, i32)> = (0..4).map(|i| (i, (i + 1) % 4)).collect();
        let r = segmentation_metrics(&labeled(pred.clone()), &labeled(truth.clone()), &map).unwrap();
        for s in &r.instances {
            let (iou, p, rc) = oracle(&pred, &truth, s.pred_id, s.truth_id);
            assert_eq!((s.iou, s.precision, s.recall), (iou, p, rc));
        }
        let mean = r.instances.iter().map(|s| s.iou).sum::<f64>() / 4.0;
        assert_eq!(r.miou, mean);
    }

    #[test]
    fn greedy_matching_recovers_permutation() {
        let truth: Vec<i32> = (0..300).map(|i| (i % 3) as i32).collect();
        let pred: Vec<i32> = truth.iter().enumerate().map(|(i, &t)| if i % 17 == 0 { -1 } else { [5, 9, 2][t as usize] }).collect();
        let pairs = greedy_iou_matching(&labeled(pred.clone()), &labeled(truth.clone())).unwrap();
        assert_eq!(pairs, vec![(5, 0), (9, 1), (2, 2)]);
        let r = segmentation_metrics_greedy(&labeled(pred), &labeled(truth)).unwrap();
        assert_eq!(r.matching, Matching::GreedyIou);
        assert!(r.miou > 0.9);
        // An unmatched truth instance scores zero.
        let r = segmentation_metrics_greedy(&labeled(vec![0, 0, -1]), &labeled(vec![0, 0, 1])).unwrap();
        assert_eq!(r.instances.len(), 2);
        assert_eq!(r.instances[1].iou, 0.0);
        assert_eq!(r.miou, 0.5);
    }

    #[test]
    fn regression_cases() {
        let y = [1.0, 2.5, -3.0];
        assert_eq!(regression_metrics(&y, &y).unwrap(), RegressionMetrics { rmse: 0.0, mae: 0.0, r2: 1.0 });
        assert_eq!(regression_metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), RegressionMetrics { rmse: 1.0, mae: 1.0, r2: 0.0 });
        assert!(regression_metrics(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(regression_metrics(&[], &[]).is_err());
    }

    #[test]
    fn regression_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let t: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p: Vec<f64> = t.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
        let m = regression_metrics(&t, &p).unwrap();
        let n = 50.0;
        let mut sq = 0.0;
        let mut ab = 0.0;
        for i in 0..50 {
            sq += (t[i] - p[i]) * (t[i] - p[i]);
            ab += (t[i] - p[i]).abs();
        }
        let mean = t.iter().sum::<f64>() / n;
        let var: f64 = t.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!((m.rmse - (sq / n).sqrt()).abs() < 1e-12);
        assert!((m.mae - ab / n).abs() < 1e-12);
        assert!((m.r2 - (1.0 - sq / var)).abs() < 1e-12);
    }

    #[test]
    fn average_time() {
        assert_eq!(avg_inference_time(&[2.0]).unwrap(), 2.0);
        assert_eq!(avg_inference_time(&[1.0, 3.0]).unwrap(), 2.0);
        assert!(avg_inference_time(&[]).is_err());
        assert!(avg_inference_time(&[1.0, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn score_bounds(seed in any::<u64>(), n in 1usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pred: Vec<i32> = (0..n).map(|_| rng.gen_range(-1..3)).collect();
            let truth: Vec<i32> = (0..n).map(|_| rng.gen_range(-1..3)).collect();
            let c = count(&labeled(pred), &labeled(truth)).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let o = overlap(&c, a, b);
                    if o.pred_size + o.truth_size == 0 { continue; }
                    let (iou, p, r, f1) = instance_scores(o);
                    prop_assert!(o.intersection <= o.pred_size.min(o.truth_size));
                    prop_assert!((0.0..=1.0).contains(&iou) && (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
                    prop_assert!(iou <= p.min(r) + 1e-15);
                    prop_assert!(f1 >= p.min(r) - 1e-15 && f1 <= p.max(r) + 1e-15);
                }
            }
            let y: Vec<f64> = (0..n + 2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let yp: Vec<f64> = (0..n + 2).map(|_| rng.gen_range(-10.0..10.0)).collect();
            if let Ok(m) = regression_metrics(&y, &yp) {
                prop_assert!(m.r2 <= 1.0);
            }
        }

        #[test]
        fn miou_ignores_pair_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pred: Vec<i32> = (0..200).map(|_| rng.gen_range(0..4)).collect();
            let truth: Vec<i32> = (0..200).map(|_| rng.gen_range(0..4)).collect();
            let map: Vec<(i32, i32)> = (0..4).map(|i| (i, i)).collect();
            let mut rev = map.clone();
            rev.reverse();
            let a = segmentation_metrics(&labeled(pred.clone()), &labeled(truth.clone()), &map).unwrap().miou;
            let b = segmentation_metrics(&labeled(pred), &labeled(truth), &rev).unwrap().miou;
            prop_assert!((a - b).abs() < 1e-15);
        }
    }
}
