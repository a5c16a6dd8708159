use nalgebra::{Matrix2x3, Matrix2x4, Matrix3, Matrix4, SymmetricEigen, Vector2, Vector3, Vector4};

use super::rotation_from_axis_angle;
use super::types::{Landmarks2D, Shape3D, WeakPerspectiveCamera};
use crate::error::{MbwError, Result};

/// Orthographic-N-point: recovers the weak-perspective camera that maps
/// `shape` onto the present points of `obs`.
///
/// Both point sets are centered, the 2x3 affine map is fitted by least
/// squares, and its SVD is snapped to a scaled pair of orthonormal rows.
/// The third rotation row is their cross product, so `det = +1`. That fit is
/// then refined by Gauss-Newton on rotation and scale, so the residual is a
/// local least-squares minimum. Returns the camera and the Frobenius residual
/// over the present points.
pub fn solve_onp(obs: &Landmarks2D, shape: &Shape3D) -> Result<(WeakPerspectiveCamera, f64)> {
    if obs.len() != shape.len() {
        return Err(MbwError::ShapeMismatch(format!(
            "{} observed points vs {} shape points",
            obs.len(),
            shape.len()
        )));
    }
    let usable: Vec<(Vector2<f64>, Vector3<f64>)> =
        obs.present().map(|(i, w)| (w, shape.points[i])).collect();
    if usable.len() < 3 {
        return Err(MbwError::degenerate(format!(
            "OnP needs at least 3 observed points, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let w_mean = usable.iter().map(|(w, _)| *w).sum::<Vector2<f64>>() / n;
    let x_mean = usable.iter().map(|(_, x)| *x).sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut cross = Matrix2x3::zeros();
    for (w, x) in &usable {
        let xc = x - x_mean;
        cov += xc * xc.transpose();
        cross += (w - w_mean) * xc.transpose();
    }

    let eig = SymmetricEigen::new(cov);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    if !(vals[0] > 0.0) || vals[1] <= 1e-12 * vals[0] {
        return Err(MbwError::degenerate(
            "shape points are collinear or coincident; OnP is ill-posed",
        ));
    }
    // pseudo-inverse of the shape covariance so planar shapes still work
    let mut inv = Matrix3::zeros();
    for k in 0..3 {
        let lambda = eig.eigenvalues[k];
        if lambda > 1e-12 * vals[0] {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / lambda;
        }
    }
    let affine = cross * inv;

    let svd = affine.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let scale = 0.5 * (svd.singular_values[0] + svd.singular_values[1]);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MbwError::degenerate(
            "observed points are coincident; camera scale is undefined",
        ));
    }
    let rows = u * v_t;
    let r1 = rows.row(0).transpose();
    let r2 = rows.row(1).transpose();
    let r3 = r1.cross(&r2);
    let rotation = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r3.transpose()]);

    let centered: Vec<(Vector2<f64>, Vector3<f64>)> = usable.iter().map(|(w, x)| (w - w_mean, x - x_mean)).collect();
    let (rotation, scale) = refine(&centered, rotation, scale);
    let translation = w_mean - scale * rotation.fixed_rows::<2>(0) * x_mean;
    let cam = WeakPerspectiveCamera {
        rotation,
        scale,
        translation,
    };

    let residual = usable
        .iter()
        .map(|(w, x)| (w - cam.project_point(x)).norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok((cam, residual))
}

fn centered_cost(pts: &[(Vector2<f64>, Vector3<f64>)], rotation: &Matrix3<f64>, scale: f64) -> f64 {
    let rows = rotation.fixed_rows::<2>(0);
    pts.iter().map(|(w, x)| (w - scale * rows * x).norm_squared()).sum()
}

/// Damped Gauss-Newton on rotation and log-scale, started from the
/// closed-form fit, which is not itself a least-squares minimizer. Steps are
/// taken only when they lower the cost.
fn refine(pts: &[(Vector2<f64>, Vector3<f64>)], mut rotation: Matrix3<f64>, mut scale: f64) -> (Matrix3<f64>, f64) {
    let mut cost = centered_cost(pts, &rotation, scale);
    let mut damping = 1e-3;
    for _ in 0..30 {
        if !(cost > 0.0) {
            break;
        }
        let rows = rotation.fixed_rows::<2>(0).into_owned();
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (w, x) in pts {
            let pred = scale * rows * x;
            let r = w - pred;
            // R exp(ω) x ≈ R (x + ω × x), and ω × x = -[x]× ω
            let d_omega = -scale * rows * x.cross_matrix();
            let mut j = Matrix2x4::zeros();
            j.fixed_columns_mut::<3>(0).copy_from(&d_omega);
            j.set_column(3, &pred);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut improved = false;
        while damping < 1e8 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += damping * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                damping *= 10.0;
                continue;
            };
            let cand_r = rotation * rotation_from_axis_angle(&Vector3::new(step[0], step[1], step[2]));
            let cand_s = scale * step[3].exp();
            let cand_cost = centered_cost(pts, &cand_r, cand_s);
            if cand_cost < cost {
                let gain = cost - cand_cost;
                rotation = cand_r;
                scale = cand_s;
                cost = cand_cost;
                damping = (damping * 0.1).max(1e-9);
                improved = gain > 1e-14 * cost;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (rotation, scale)
}
