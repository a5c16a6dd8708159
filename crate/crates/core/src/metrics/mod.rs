//! Evaluation metrics: PCKh and its AUC, Procrustes-aligned MPJPE, and
//! average precision for outlier scoring.

mod report;

pub use report::{read_report, render_report, write_report, ReportRow};

use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::{procrustes_align, Landmarks2D, Shape3D};

/// Joint names, bones, and the bone that normalizes PCKh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDef {
    pub joint_names: Vec<String>,
    pub bones: Vec<(usize, usize)>,
    pub head_bone: usize,
}

impl SkeletonDef {
    pub fn new(joint_names: Vec<String>, bones: Vec<(usize, usize)>, head_bone: usize) -> Result<Self> {
        let s = Self {
            joint_names,
            bones,
            head_bone,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.joint_names.len();
        if p == 0 {
            return Err(MbwError::InvalidConfig("skeleton has no joints".into()));
        }
        if self.bones.iter().any(|&(a, b)| a >= p || b >= p || a == b) {
            return Err(MbwError::InvalidConfig("bone index out of range".into()));
        }
        if self.head_bone >= self.bones.len() {
            return Err(MbwError::InvalidConfig("head bone index out of range".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joint_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joint_names.is_empty()
    }

    /// Twelve-joint upper-body-and-legs skeleton; the head bone is head-neck.
    pub fn human12() -> Self {
        let names = [
            "head", "neck", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
            "r_wrist", "l_hip", "r_hip", "l_knee", "r_knee",
        ];
        let bones = vec![
            (0, 1),
            (1, 2),
            (1, 3),
            (2, 4),
            (3, 5),
            (4, 6),
            (5, 7),
            (2, 8),
            (3, 9),
            (8, 9),
            (8, 10),
            (9, 11),
        ];
        Self {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            bones,
            head_bone: 0,
        }
    }

    /// Simple chain `0-1-2-...` with the first link as head bone.
    pub fn chain(joints: usize) -> Self {
        Self {
            joint_names: (0..joints).map(|i| format!("j{i}")).collect(),
            bones: (1..joints).map(|i| (i - 1, i)).collect(),
            head_bone: 0,
        }
    }

    /// Length of the head bone in `gt`.
    pub fn head_bone_length(&self, gt: &Landmarks2D) -> Result<f64> {
        let (a, b) = self.bones[self.head_bone];
        match (gt.point(a), gt.point(b)) {
            (Some(pa), Some(pb)) => {
                let len = (pa - pb).norm();
                if len > 0.0 {
                    Ok(len)
                } else {
                    Err(MbwError::degenerate("head bone has zero length"))
                }
            }
            _ => Err(MbwError::MissingHeadBone),
        }
    }
}

/// Per-joint errors normalized by the head bone, for joints present in both.
fn normalized_errors(pred: &Landmarks2D, gt: &Landmarks2D, skeleton: &SkeletonDef) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || gt.len() != skeleton.len() {
        return Err(MbwError::ShapeMismatch(format!(
            "pred {} / gt {} / skeleton {} joints",
            pred.len(),
            gt.len(),
            skeleton.len()
        )));
    }
    let head = skeleton.head_bone_length(gt)?;
    Ok((0..gt.len())
        .filter_map(|i| match (pred.point(i), gt.point(i)) {
            (Some(a), Some(b)) => Some((a - b).norm() / head),
            _ => None,
        })
        .collect())
}

fn fraction_within(errors: &[f64], threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
}

/// Fraction of joints whose head-normalized error is at most `threshold`.
pub fn pckh(pred: &Landmarks2D, gt: &Landmarks2D, skeleton: &SkeletonDef, threshold: f64) -> Result<f64> {
    Ok(fraction_within(&normalized_errors(pred, gt, skeleton)?, threshold))
}

/// 50 evenly spaced thresholds on `[0, 1]`.
pub fn default_grid() -> Vec<f64> {
    (0..50).map(|i| i as f64 / 49.0).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(MbwError::BadGrid("need at least two thresholds".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(MbwError::BadGrid("thresholds must be finite and ascending".into()));
    }
    if !(grid[grid.len() - 1] > grid[0]) {
        return Err(MbwError::BadGrid("grid has zero span".into()));
    }
    Ok(())
}

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let area: f64 = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (v[0] + v[1]) * (g[1] - g[0]))
        .sum();
    area / (grid[grid.len() - 1] - grid[0])
}

/// Area under the PCKh curve over `grid`, normalized by the grid span.
pub fn pck_auc(pred: &Landmarks2D, gt: &Landmarks2D, skeleton: &SkeletonDef, grid: &[f64]) -> Result<f64> {
    pck_auc_pooled(&[(pred, gt)], skeleton, grid)
}

/// PCKh with the joints of every `(pred, gt)` pair pooled together.
pub fn pckh_pooled(
    pairs: &[(&Landmarks2D, &Landmarks2D)],
    skeleton: &SkeletonDef,
    threshold: f64,
) -> Result<f64> {
    let errors = pooled_errors(pairs, skeleton)?;
    Ok(fraction_within(&errors, threshold))
}

/// [`pck_auc`] with the joints of every pair pooled together.
pub fn pck_auc_pooled(
    pairs: &[(&Landmarks2D, &Landmarks2D)],
    skeleton: &SkeletonDef,
    grid: &[f64],
) -> Result<f64> {
    check_grid(grid)?;
    let errors = pooled_errors(pairs, skeleton)?;
    let curve: Vec<f64> = grid.iter().map(|&t| fraction_within(&errors, t)).collect();
    Ok(trapezoid(grid, &curve))
}

/// PCKh at each threshold of `grid`, joints of all pairs pooled.
pub fn pck_curve(
    pairs: &[(&Landmarks2D, &Landmarks2D)],
    skeleton: &SkeletonDef,
    grid: &[f64],
) -> Result<Vec<f64>> {
    check_grid(grid)?;
    let errors = pooled_errors(pairs, skeleton)?;
    Ok(grid.iter().map(|&t| fraction_within(&errors, t)).collect())
}

fn pooled_errors(pairs: &[(&Landmarks2D, &Landmarks2D)], skeleton: &SkeletonDef) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    for (pred, gt) in pairs {
        all.extend(normalized_errors(pred, gt, skeleton)?);
    }
    Ok(all)
}

/// Mean per-joint distance after similarity alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &Shape3D, gt: &Shape3D) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(MbwError::ShapeMismatch("pred and gt joint counts differ".into()));
    }
    let (aligned, _) = procrustes_align(pred, gt)?;
    Ok(aligned
        .points
        .iter()
        .zip(&gt.points)
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / gt.len() as f64)
}

/// Mean [`pa_mpjpe`] over a sequence of reconstructions.
///
/// A weak-perspective reconstruction is only determined up to a depth
/// reflection, which no rotation can undo. The whole sequence is evaluated
/// once as predicted and once mirrored, and the lower mean is returned.
pub fn pa_mpjpe_sequence(preds: &[Shape3D], gts: &[Shape3D]) -> Result<f64> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(MbwError::ShapeMismatch("need equally many, non-zero predictions and groundtruths".into()));
    }
    let mut direct = 0.0;
    let mut mirrored = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        direct += pa_mpjpe(p, g)?;
        mirrored += pa_mpjpe(&p.reflected(), g)?;
    }
    Ok(direct.min(mirrored) / preds.len() as f64)
}

/// Average precision of ranking outliers first by descending score.
///
/// Tied scores form one group: the group's positives are credited at the
/// precision reached after the whole group.
pub fn pr_auc(scores: &[f64], is_outlier: &[bool]) -> Result<f64> {
    Ok(pr_steps(scores, is_outlier)?.0)
}

/// Precision-recall points after each tie group, by descending score.
pub fn pr_curve(scores: &[f64], is_outlier: &[bool]) -> Result<Vec<(f64, f64)>> {
    Ok(pr_steps(scores, is_outlier)?.1)
}

fn pr_steps(scores: &[f64], is_outlier: &[bool]) -> Result<(f64, Vec<(f64, f64)>)> {
    if scores.len() != is_outlier.len() {
        return Err(MbwError::ShapeMismatch("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MbwError::InvalidConfig("scores must not be NaN".into()));
    }
    let positives = is_outlier.iter().filter(|&&o| o).count();
    if positives == 0 {
        return Err(MbwError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut curve = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut group_tp = 0;
        while i < order.len() && scores[order[i]] == s {
            if is_outlier[order[i]] {
                group_tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        tp += group_tp;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += group_tp as f64 / positives as f64 * precision;
        curve.push((tp as f64 / positives as f64, precision));
    }
    Ok((ap, curve))
}
