use nalgebra::{Matrix3, Vector3};

use super::types::{Shape3D, SimilarityTransform};
use crate::error::{MbwError, Result};

/// Aligns `pred` onto `reference` with the least-squares similarity
/// transform (rotation, isotropic scale, translation).
pub fn procrustes_align(
    pred: &Shape3D,
    reference: &Shape3D,
) -> Result<(Shape3D, SimilarityTransform)> {
    if pred.len() != reference.len() {
        return Err(MbwError::ShapeMismatch(format!(
            "{} predicted vs {} reference points",
            pred.len(),
            reference.len()
        )));
    }
    if pred.len() < 3 {
        return Err(MbwError::degenerate("alignment needs at least 3 points"));
    }
    let mu_p = pred.centroid();
    let mu_r = reference.centroid();

    let mut cross = Matrix3::zeros();
    let mut var_p = 0.0;
    let mut var_r = 0.0;
    for (p, r) in pred.points.iter().zip(&reference.points) {
        let pc = p - mu_p;
        let rc = r - mu_r;
        cross += rc * pc.transpose();
        var_p += pc.norm_squared();
        var_r += rc.norm_squared();
    }
    if !(var_r > 0.0) {
        return Err(MbwError::degenerate("reference points are coincident"));
    }
    if !(var_p > 0.0) {
        return Err(MbwError::degenerate("predicted points are coincident"));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut sv: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .copied()
        .zip(0..)
        .collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    if sv[1].0 <= 1e-12 * sv[0].0 {
        return Err(MbwError::degenerate(
            "cross-covariance has rank < 2; rotation is ambiguous",
        ));
    }
    let d = (u * v_t).determinant().signum();
    // flip the direction of the smallest singular value
    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    signs[sv[2].1] = d;
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let trace: f64 = (0..3).map(|k| svd.singular_values[k] * signs[k]).sum();
    let scale = trace / var_p;
    if !(scale > 0.0) {
        return Err(MbwError::degenerate("alignment scale is not positive"));
    }
    let transform = SimilarityTransform {
        rotation,
        scale,
        translation: mu_r - rotation * mu_p * scale,
    };
    Ok((transform.apply(pred), transform))
}
