use super::model::PriorModel;
use super::train::loss_and_gradient;
use crate::error::Result;
use crate::geometry::{project, Landmarks2D, WeakPerspectiveCamera};

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Fixed-camera reprojection objective for one frame: the summed squared
/// distance between each view and the projection of the decoded shape.
pub fn fixed_camera_loss(
    model: &PriorModel,
    sample: &[Landmarks2D],
    cams: &[WeakPerspectiveCamera],
) -> Result<f64> {
    let shape = model.decode(&model.encode(sample)?)?;
    Ok(sample
        .iter()
        .zip(cams)
        .map(|(w, cam)| w.frobenius_distance(&project(&shape, cam)).powi(2))
        .sum())
}

/// Analytic parameter gradient of [`fixed_camera_loss`].
pub fn fixed_camera_gradient(
    model: &PriorModel,
    sample: &[Landmarks2D],
    cams: &[WeakPerspectiveCamera],
) -> Result<Vec<f64>> {
    let frames = [sample.to_vec()];
    let cams = [cams.to_vec()];
    Ok(loss_and_gradient(model, &frames, Some(&cams))?.1)
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step [`FD_STEP`].
///
/// Each component is compared as `|a - n| / max(|a|, |n|, floor)` where
/// `floor = 1e-3 * max(1, max_i |a_i|)`, so components that are tiny next to
/// the largest one are judged on an absolute scale.
pub fn gradient_check(
    model: &PriorModel,
    sample: &[Landmarks2D],
    cams: &[WeakPerspectiveCamera],
) -> Result<f64> {
    let analytic = fixed_camera_gradient(model, sample, cams)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut numeric = vec![0.0; base.len()];
    let mut shifted = base.clone();
    for i in 0..base.len() {
        shifted[i] = base[i] + FD_STEP;
        probe.set_params(&shifted);
        let plus = fixed_camera_loss(&probe, sample, cams)?;
        shifted[i] = base[i] - FD_STEP;
        probe.set_params(&shifted);
        let minus = fixed_camera_loss(&probe, sample, cams)?;
        shifted[i] = base[i];
        numeric[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    let gmax = analytic.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let floor = 1e-3 * gmax;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max))
}
