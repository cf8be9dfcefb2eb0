//! Classification metrics over verdicts and trajectory error metrics.

use crate::align::{align, AlignmentMode, PointCloudPair, MIN_POINTS};
use crate::error::{Error, Result};
use crate::graph::Trajectory;
use crate::io::VerdictRow;
use crate::verifier::VerdictRecord;

/// A labeled confidence; higher means more likely a true loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredLabel {
    pub confidence: f64,
    pub label: bool,
}

impl ScoredLabel {
    /// `confidence` must be finite or negative infinity.
    pub fn new(confidence: f64, label: bool) -> Result<Self> {
        if confidence.is_nan() || confidence == f64::INFINITY {
            return Err(Error::InvalidConfig(format!("confidence must be finite or -inf, got {confidence}")));
        }
        Ok(Self { confidence, label })
    }

    /// Negated change score; a missing score ranks below everything.
    pub fn from_score(score: Option<f64>, converged: bool, label: bool) -> Self {
        let confidence = match score {
            Some(s) if converged && s.is_finite() => -s,
            _ => f64::NEG_INFINITY,
        };
        Self { confidence, label }
    }

    /// `None` when the candidate carries no ground-truth label.
    pub fn from_verdict(v: &VerdictRecord) -> Option<Self> {
        v.candidate.label.map(|l| Self::from_score(v.score, v.converged, l))
    }

    pub fn from_row(row: &VerdictRow) -> Option<Self> {
        row.label.map(|l| Self::from_score(row.score, row.converged, l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    /// Items with confidence at or above this are accepted.
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn class_counts(items: &[ScoredLabel]) -> Result<(usize, usize)> {
    let positives = items.iter().filter(|i| i.label).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    if let Some(bad) = items.iter().find(|i| i.confidence.is_nan() || i.confidence == f64::INFINITY) {
        return Err(Error::InvalidConfig(format!("invalid confidence {}", bad.confidence)));
    }
    Ok((positives, negatives))
}

/// One point per distinct finite confidence, from most to least confident.
/// Tied items enter together; items at `-inf` are never accepted.
pub fn pr_curve(items: &[ScoredLabel]) -> Result<Vec<PrPoint>> {
    let (positives, _) = class_counts(items)?;
    let mut sorted: Vec<ScoredLabel> = items.to_vec();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < sorted.len() {
        let c = sorted[k].confidence;
        if c == f64::NEG_INFINITY {
            break;
        }
        while k < sorted.len() && sorted[k].confidence == c {
            if sorted[k].label {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(PrPoint {
            threshold: c,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// `Σ (R_k − R_{k−1}) · P_k` over the curve, in `[0, 1]`.
pub fn average_precision(items: &[ScoredLabel]) -> Result<f64> {
    Ok(ap_of_curve(&pr_curve(items)?))
}

fn ap_of_curve(curve: &[PrPoint]) -> f64 {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in curve {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    ap
}

/// Largest recall reached with precision exactly 1, or 0.
pub fn max_recall_at_full_precision(items: &[ScoredLabel]) -> Result<f64> {
    Ok(mr_of_curve(&pr_curve(items)?))
}

fn mr_of_curve(curve: &[PrPoint]) -> f64 {
    curve
        .iter()
        .filter(|p| p.precision == 1.0)
        .map(|p| p.recall)
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub curve: Vec<PrPoint>,
    pub average_precision: f64,
    pub max_recall: f64,
    pub positives: usize,
    pub negatives: usize,
}

pub fn classification_report(items: &[ScoredLabel]) -> Result<ClassificationReport> {
    let (positives, negatives) = class_counts(items)?;
    let curve = pr_curve(items)?;
    Ok(ClassificationReport {
        average_precision: ap_of_curve(&curve),
        max_recall: mr_of_curve(&curve),
        curve,
        positives,
        negatives,
    })
}

/// A fraction as a percentage with two decimals, e.g. `1.0` → `"100.00"`.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", 100.0 * fraction)
}

fn check_corresponded(estimate: &Trajectory, ground_truth: &Trajectory) -> Result<()> {
    if estimate.len() != ground_truth.len() {
        return Err(Error::Misaligned(format!(
            "estimate has {} keyframes, ground truth {}",
            estimate.len(),
            ground_truth.len()
        )));
    }
    for (i, (a, b)) in estimate.timestamps().zip(ground_truth.timestamps()).enumerate() {
        if (a - b).abs() > 1e-6 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::Misaligned(format!(
                "keyframe {i} is stamped {a} in the estimate and {b} in the ground truth"
            )));
        }
    }
    Ok(())
}

fn prefix_ate(estimate: &Trajectory, ground_truth: &Trajectory, len: usize, mode: AlignmentMode) -> Result<f64> {
    let e = estimate.positions();
    let g = ground_truth.positions();
    let pair = PointCloudPair::new(g[..len].to_vec(), e[..len].to_vec())?;
    Ok(align(&pair, mode)?.rmse)
}

/// Translational RMSE after aligning the estimate onto the ground truth.
pub fn ate_rmse(estimate: &Trajectory, ground_truth: &Trajectory, mode: AlignmentMode) -> Result<f64> {
    check_corresponded(estimate, ground_truth)?;
    prefix_ate(estimate, ground_truth, estimate.len(), mode)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAte {
    /// Checkpoint times `t_0 .. t_{k-1}`; the last is the final timestamp.
    pub checkpoint_times: Vec<f64>,
    /// ATE of the prefix ending at each checkpoint.
    pub checkpoint_ate: Vec<f64>,
    /// Root mean square of `checkpoint_ate`.
    pub tate: f64,
}

impl TemporalAte {
    /// `t0 .. t{k-1}, tATE`.
    pub fn column_names(&self) -> Vec<String> {
        (0..self.checkpoint_ate.len())
            .map(|i| format!("t{i}"))
            .chain(std::iter::once("tATE".to_string()))
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = self.checkpoint_ate.clone();
        v.push(self.tate);
        v
    }
}

/// Splits the time span into `k` equal intervals and evaluates the ATE of
/// the prefix ending at each interval's end.
pub fn temporal_ate(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    k: usize,
    mode: AlignmentMode,
) -> Result<TemporalAte> {
    if k == 0 {
        return Err(Error::InvalidConfig("tATE needs at least one checkpoint".into()));
    }
    check_corresponded(estimate, ground_truth)?;
    let stamps: Vec<f64> = ground_truth.timestamps().collect();
    let (first, last) = match (stamps.first(), stamps.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::TooFewPoints { needed: MIN_POINTS, got: 0 }),
    };
    let span = last - first;
    let mut checkpoint_times = Vec::with_capacity(k);
    let mut checkpoint_ate = Vec::with_capacity(k);
    for i in 0..k {
        let (t, len) = if i + 1 == k {
            (last, stamps.len())
        } else {
            let t = first + span * (i + 1) as f64 / k as f64;
            (t, stamps.partition_point(|&s| s <= t))
        };
        if len < MIN_POINTS {
            return Err(Error::TooFewPoints { needed: MIN_POINTS, got: len });
        }
        checkpoint_times.push(t);
        checkpoint_ate.push(prefix_ate(estimate, ground_truth, len, mode)?);
    }
    let tate = (checkpoint_ate.iter().map(|e| e * e).sum::<f64>() / k as f64).sqrt();
    Ok(TemporalAte {
        checkpoint_times,
        checkpoint_ate,
        tate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, SimTransform};
    use nalgebra::{UnitQuaternion, Vector3};

    fn items(v: &[(f64, bool)]) -> Vec<ScoredLabel> {
        v.iter().map(|&(c, l)| ScoredLabel::new(c, l).unwrap()).collect()
    }

    #[test]
    fn perfect_separation() {
        let it = items(&[(0.9, true), (0.8, true), (0.3, false), (0.1, false)]);
        let curve = pr_curve(&it).unwrap();
        assert!(curve.iter().any(|p| p.precision == 1.0 && p.recall == 1.0));
        assert_eq!(percent(average_precision(&it).unwrap()), "100.00");
        assert_eq!(percent(max_recall_at_full_precision(&it).unwrap()), "100.00");
    }

    #[test]
    fn single_positive_ranked_last() {
        let mut v: Vec<(f64, bool)> = (0..9).map(|i| (10.0 - i as f64, false)).collect();
        v.push((0.0, true));
        let curve = pr_curve(&items(&v)).unwrap();
        let last = curve.last().unwrap();
        assert_eq!(last.recall, 1.0);
        assert!((last.precision - 0.1).abs() < 1e-15);
        assert_eq!(max_recall_at_full_precision(&items(&v)).unwrap(), 0.0);
    }

    #[test]
    fn top_false_positive_zeroes_mr() {
        let it = items(&[(0.9, false), (0.8, true), (0.7, true), (0.1, false)]);
        assert_eq!(percent(max_recall_at_full_precision(&it).unwrap()), "0.00");
    }

    #[test]
    fn six_item_ranking_by_hand() {
        // ranking T F T T F F: precision at each recall step 1, 2/3, 3/4
        let it = items(&[(6.0, true), (5.0, false), (4.0, true), (3.0, true), (2.0, false), (1.0, false)]);
        let ap = average_precision(&it).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 0.75) / 3.0).abs() < 1e-15);
        assert!((max_recall_at_full_precision(&it).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_enter_together() {
        let it = items(&[(1.0, true), (0.5, true), (0.5, false), (0.0, false)]);
        let curve = pr_curve(&it).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[1].precision, 2.0 / 3.0);
        assert_eq!(curve[1].recall, 1.0);
    }

    #[test]
    fn nonconverged_items_are_never_accepted() {
        let it = vec![
            ScoredLabel::from_score(Some(0.01), true, true),
            ScoredLabel::from_score(None, false, true),
            ScoredLabel::from_score(Some(5.0), true, false),
        ];
        let curve = pr_curve(&it).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve.last().unwrap().recall, 0.5);
        assert_eq!(max_recall_at_full_precision(&it).unwrap(), 0.5);
    }

    #[test]
    fn one_class_is_an_error() {
        assert!(matches!(pr_curve(&items(&[(1.0, true), (0.0, true)])), Err(Error::SingleClass)));
        assert!(matches!(average_precision(&[]), Err(Error::SingleClass)));
        assert!(ScoredLabel::new(f64::NAN, true).is_err());
        assert!(ScoredLabel::new(f64::INFINITY, true).is_err());
    }

    fn wiggle(n: usize) -> Trajectory {
        Trajectory::from_poses(
            (0..n).map(|i| {
                let t = i as f64 * 0.3;
                Pose::from_yaw(t, Vector3::new(t.cos() * 4.0, t.sin() * 3.0, 0.2 * t))
            }),
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn ate_of_identical_and_transformed_copies() {
        let gt = wiggle(30);
        assert!(ate_rmse(&gt, &gt, AlignmentMode::Sim3).unwrap() < 1e-12);
        let s = SimTransform::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0), 2.5)
            .unwrap();
        let moved: Vec<Pose> = gt
            .poses()
            .map(|p| Pose::new(*p.rotation(), s.apply(p.translation())))
            .collect();
        let est = gt.with_poses(&moved).unwrap();
        assert!(ate_rmse(&est, &gt, AlignmentMode::Sim3).unwrap() < 1e-9);
        assert!(ate_rmse(&est, &gt, AlignmentMode::Se3).unwrap() > 0.1);
    }

    #[test]
    fn single_displaced_point_bound() {
        let gt = wiggle(25);
        let d = 0.7;
        let mut poses: Vec<Pose> = gt.poses().copied().collect();
        poses[12] = Pose::new(*poses[12].rotation(), poses[12].translation() + Vector3::new(0.0, 0.0, d));
        let est = gt.with_poses(&poses).unwrap();
        for mode in [AlignmentMode::Sim3, AlignmentMode::Se3] {
            let ate = ate_rmse(&est, &gt, mode).unwrap();
            assert!(ate > 0.0 && ate <= d / 5.0 + 1e-12, "{ate}");
        }
    }

    #[test]
    fn misaligned_inputs() {
        let gt = wiggle(20);
        assert!(matches!(ate_rmse(&gt.prefix(10), &gt, AlignmentMode::Sim3), Err(Error::Misaligned(_))));
        let shifted = Trajectory::from_poses(gt.poses().copied(), 0.5, 1.0).unwrap();
        assert!(matches!(ate_rmse(&shifted, &gt, AlignmentMode::Sim3), Err(Error::Misaligned(_))));
    }

    #[test]
    fn temporal_ate_layout() {
        let gt = wiggle(40);
        let mut poses: Vec<Pose> = gt.poses().copied().collect();
        for (i, p) in poses.iter_mut().enumerate() {
            *p = Pose::new(*p.rotation(), p.translation() + Vector3::new(0.0, 0.01 * (i * i) as f64 / 40.0, 0.0));
        }
        let est = gt.with_poses(&poses).unwrap();
        let t = temporal_ate(&est, &gt, 5, AlignmentMode::Sim3).unwrap();
        assert_eq!(t.column_names(), ["t0", "t1", "t2", "t3", "t4", "tATE"]);
        assert_eq!(t.values().len(), 6);
        let full = ate_rmse(&est, &gt, AlignmentMode::Sim3).unwrap();
        assert!((t.checkpoint_ate[4] - full).abs() < 1e-12);
        assert_eq!(t.checkpoint_times[4], 39.0);
        assert!((t.checkpoint_times[0] - 7.8).abs() < 1e-12);

        let zero = temporal_ate(&gt, &gt, 5, AlignmentMode::Sim3).unwrap();
        assert!(zero.checkpoint_ate.iter().all(|&e| e < 1e-12) && zero.tate < 1e-12);
    }

    #[test]
    fn temporal_ate_needs_populated_prefixes() {
        let gt = wiggle(10);
        assert!(matches!(
            temporal_ate(&gt, &gt, 5, AlignmentMode::Sim3),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(temporal_ate(&gt, &gt, 0, AlignmentMode::Sim3).is_err());
        assert!(temporal_ate(&gt, &gt, 3, AlignmentMode::Sim3).is_ok());
    }
}
