use nalgebra::{DMatrix, Matrix3, RowVector3, SymmetricEigen, Vector3};

use super::canonical_svd;
use super::onp::solve_onp;
use super::types::{Landmarks2D, Shape3D, WeakPerspectiveCamera};
use super::project;
use crate::error::{MbwError, Result};

/// Rigid factorization result: one shape, a camera and a reprojection
/// residual (Frobenius) for every frame-view, indexed `[frame][view]`.
#[derive(Debug, Clone)]
pub struct TkReconstruction {
    pub shape: Shape3D,
    pub cameras: Vec<Vec<WeakPerspectiveCamera>>,
    pub residuals: Vec<Vec<f64>>,
    /// Singular values of the centered measurement matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Coefficients of `aᵀ L b` in the six unknowns of a symmetric 3x3 `L`.
fn gram_row(a: &RowVector3<f64>, b: &RowVector3<f64>) -> [f64; 6] {
    [
        a[0] * b[0],
        a[0] * b[1] + a[1] * b[0],
        a[0] * b[2] + a[2] * b[0],
        a[1] * b[1],
        a[1] * b[2] + a[2] * b[1],
        a[2] * b[2],
    ]
}

/// Weak-perspective Tomasi-Kanade factorization of a rigid object seen in
/// every frame-view of `stacked` (indexed `[frame][view]`).
///
/// The centered `2F x P` measurement matrix is factored at rank 3 and
/// upgraded to a metric frame by solving the orthonormality constraints for
/// the corrective Gram matrix in least squares. A Gram matrix that is not
/// positive definite is reported as a degenerate configuration.
pub fn tomasi_kanade(stacked: &[Vec<Landmarks2D>]) -> Result<TkReconstruction> {
    let flat: Vec<&Landmarks2D> = stacked.iter().flatten().collect();
    let f = flat.len();
    if f < 3 {
        return Err(MbwError::degenerate(format!(
            "factorization needs at least 3 frame-views, got {f}"
        )));
    }
    let p = flat[0].len();
    if p < 4 {
        return Err(MbwError::degenerate(format!(
            "factorization needs at least 4 points, got {p}"
        )));
    }
    if flat.iter().any(|w| w.len() != p) {
        return Err(MbwError::ShapeMismatch("frame-views disagree on point count".into()));
    }
    if flat.iter().any(|w| !w.is_complete()) {
        return Err(MbwError::IncompleteInput(
            "factorization requires every point in every frame-view".into(),
        ));
    }

    let mut meas = DMatrix::zeros(2 * f, p);
    for (k, w) in flat.iter().enumerate() {
        let c = w.centroid().expect("complete view");
        for (i, pt) in w.points().iter().enumerate() {
            meas[(2 * k, i)] = pt.x - c.x;
            meas[(2 * k + 1, i)] = pt.y - c.y;
        }
    }

    let (u, s, v_t) = canonical_svd(&meas);
    if s.len() < 3 || !(s[2] > 1e-12 * s[0]) {
        return Err(MbwError::degenerate("measurement matrix has rank < 3"));
    }
    let mut motion = DMatrix::zeros(2 * f, 3);
    let mut structure = DMatrix::zeros(3, p);
    for k in 0..3 {
        let root = s[k].sqrt();
        motion.set_column(k, &(u.column(k) * root));
        structure.set_row(k, &(v_t.row(k) * root));
    }

    // aᵀLa - bᵀLb = 0 and aᵀLb = 0 for each frame-view
    let mut system = DMatrix::zeros(2 * f, 6);
    for k in 0..f {
        let a = motion.fixed_view::<1, 3>(2 * k, 0).into_owned();
        let b = motion.fixed_view::<1, 3>(2 * k + 1, 0).into_owned();
        let aa = gram_row(&a, &a);
        let bb = gram_row(&b, &b);
        let ab = gram_row(&a, &b);
        for j in 0..6 {
            system[(2 * k, j)] = aa[j] - bb[j];
            system[(2 * k + 1, j)] = ab[j];
        }
    }
    let (_, gs, gv_t) = canonical_svd(&system);
    if gs.len() < 6 {
        return Err(MbwError::degenerate("too few orthonormality constraints"));
    }
    if !(gs[4] > 1e-9 * gs[0]) {
        return Err(MbwError::degenerate(
            "orthonormality constraints do not determine the Gram matrix",
        ));
    }
    let l = gv_t.row(5);
    let mut gram = Matrix3::new(l[0], l[1], l[2], l[1], l[3], l[4], l[2], l[4], l[5]);
    if gram.trace() < 0.0 {
        gram = -gram;
    }
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-12 * lmax) {
        return Err(MbwError::degenerate(format!(
            "corrective Gram matrix is not positive definite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    let sqrt_diag = Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let q = eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let q_inv = q
        .try_inverse()
        .ok_or_else(|| MbwError::degenerate("corrective transform is singular"))?;

    let metric = q_inv * structure.fixed_rows::<3>(0);
    let shape = Shape3D::new(
        (0..p)
            .map(|i| Vector3::new(metric[(0, i)], metric[(1, i)], metric[(2, i)]))
            .collect(),
    );

    let mut cameras = Vec::with_capacity(stacked.len());
    let mut residuals = Vec::with_capacity(stacked.len());
    for views in stacked {
        let mut cams = Vec::with_capacity(views.len());
        let mut res = Vec::with_capacity(views.len());
        for w in views {
            let (cam, r) = solve_onp(w, &shape)?;
            cams.push(cam);
            res.push(r);
        }
        cameras.push(cams);
        residuals.push(res);
    }
    Ok(TkReconstruction {
        shape,
        cameras,
        residuals,
        singular_values: s.iter().copied().collect(),
    })
}

impl TkReconstruction {
    /// Reprojection of the recovered shape into frame-view `(frame, view)`.
    pub fn reproject(&self, frame: usize, view: usize) -> Landmarks2D {
        project(&self.shape, &self.cameras[frame][view])
    }

    /// Frobenius norm of all residuals together.
    pub fn total_residual(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt()
    }
}
