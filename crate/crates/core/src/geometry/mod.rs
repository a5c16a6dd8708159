//! Closed-form weak-perspective multi-view geometry.
//!
//! Everything here is pure and stateless: projection, orthographic-N-point
//! camera recovery, similarity Procrustes alignment, linear triangulation and
//! rigid Tomasi-Kanade factorization.

mod onp;
mod procrustes;
mod tomasi_kanade;
mod triangulate;
mod types;

pub use onp::solve_onp;
pub use procrustes::procrustes_align;
pub use tomasi_kanade::{tomasi_kanade, TkReconstruction};
pub use triangulate::triangulate;
pub use types::{Landmarks2D, Shape3D, SimilarityTransform, WeakPerspectiveCamera};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Projects every point of `shape` through `cam`.
pub fn project(shape: &Shape3D, cam: &WeakPerspectiveCamera) -> Landmarks2D {
    let rows = cam.projection_rows();
    Landmarks2D::new(
        shape
            .points
            .iter()
            .map(|x| rows * x + cam.translation)
            .collect(),
    )
}

/// Closest proper rotation to `m` in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Thin SVD with singular values sorted descending and each left singular
/// vector's largest-magnitude entry made positive.
pub(crate) fn canonical_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut u_out = DMatrix::zeros(u.nrows(), order.len());
    let mut v_out = DMatrix::zeros(order.len(), v_t.ncols());
    let mut s_out = DVector::zeros(order.len());
    for (k, &i) in order.iter().enumerate() {
        let col = u.column(i);
        let (mut best, mut sign) = (0.0, 1.0);
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        u_out.set_column(k, &(col * sign));
        v_out.set_row(k, &(v_t.row(i) * sign));
        s_out[k] = s[i];
    }
    (u_out, s_out, v_out)
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn rotation_from_axis_angle(w: &Vector3<f64>) -> Matrix3<f64> {
    nalgebra::Rotation3::new(*w).into_inner()
}
