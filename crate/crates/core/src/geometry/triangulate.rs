use nalgebra::{DMatrix, DVector, Vector3};

use super::types::{Landmarks2D, Shape3D, WeakPerspectiveCamera};
use crate::error::{MbwError, Result};

/// Per-point linear least-squares triangulation under weak-perspective
/// cameras. Each view that observes a point contributes the two equations
/// `s R[0..2] X = w - t`.
pub fn triangulate(views: &[(Landmarks2D, WeakPerspectiveCamera)]) -> Result<Shape3D> {
    if views.len() < 2 {
        return Err(MbwError::degenerate(format!(
            "triangulation needs at least 2 views, got {}",
            views.len()
        )));
    }
    let p = views[0].0.len();
    if views.iter().any(|(w, _)| w.len() != p) {
        return Err(MbwError::ShapeMismatch("views disagree on point count".into()));
    }

    let mut points = Vec::with_capacity(p);
    for i in 0..p {
        let observing: Vec<_> = views
            .iter()
            .filter_map(|(w, cam)| w.point(i).map(|pt| (pt, cam)))
            .collect();
        if observing.len() < 2 {
            return Err(MbwError::degenerate(format!(
                "point {i} is observed by {} view(s), need 2",
                observing.len()
            )));
        }
        let mut a = DMatrix::zeros(2 * observing.len(), 3);
        let mut b = DVector::zeros(2 * observing.len());
        for (k, (pt, cam)) in observing.iter().enumerate() {
            let rows = cam.projection_rows();
            for r in 0..2 {
                for c in 0..3 {
                    a[(2 * k + r, c)] = rows[(r, c)];
                }
                b[2 * k + r] = pt[r] - cam.translation[r];
            }
        }
        let sv = a.singular_values();
        if !(sv.min() > 1e-9 * sv.max()) {
            return Err(MbwError::degenerate(format!(
                "point {i}: stacked projection rows are rank deficient"
            )));
        }
        // QR is accurate to rounding here; the iterative SVD solve is not
        let qr = a.qr();
        let x = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * b))
            .ok_or_else(|| MbwError::degenerate(format!("point {i}: singular triangular factor")))?;
        points.push(Vector3::new(x[0], x[1], x[2]));
    }
    Ok(Shape3D::new(points))
}
