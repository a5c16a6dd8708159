use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::Landmarks2D;
use crate::pipeline::LabelSet;
use crate::seed::rng_for;

/// Fixed-length summary of one frame-view, standing in for image content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDescriptor {
    pub values: Vec<f64>,
}

impl FrameDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `mix * vec(landmarks) + N(0, eta_sigma^2)`. Missing coordinates count as 0.
pub fn make_descriptor(
    landmarks: &Landmarks2D,
    mix: &DMatrix<f64>,
    eta_sigma: f64,
    seed: u64,
) -> Result<FrameDescriptor> {
    if mix.ncols() != 2 * landmarks.len() {
        return Err(MbwError::ShapeMismatch(format!(
            "mix has {} columns for {} landmarks",
            mix.ncols(),
            landmarks.len()
        )));
    }
    let noise = Normal::new(0.0, eta_sigma)
        .map_err(|_| MbwError::InvalidConfig("descriptor noise must be >= 0".into()))?;
    let flat = DVector::from_iterator(
        mix.ncols(),
        landmarks.to_flat().into_iter().map(|x| if x.is_nan() { 0.0 } else { x }),
    );
    let mut rng = rng_for(seed, &[]);
    let values = (mix * flat).iter().map(|v| v + noise.sample(&mut rng)).collect();
    Ok(FrameDescriptor { values })
}

/// Affine map from a descriptor to flattened landmarks.
///
/// `weights` is `(D + 1) x 2P`; the last row is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub weights: DMatrix<f64>,
    pub ridge_lambda: f64,
}

impl DetectorModel {
    pub fn descriptor_dim(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn joints(&self) -> usize {
        self.weights.ncols() / 2
    }
}

/// Predicts landmarks for `descriptor`.
pub fn detect(model: &DetectorModel, descriptor: &FrameDescriptor) -> Result<Landmarks2D> {
    let d = model.descriptor_dim();
    if descriptor.len() != d {
        return Err(MbwError::ShapeMismatch(format!(
            "descriptor has length {}, detector expects {d}",
            descriptor.len()
        )));
    }
    let mut out = model.weights.row(d).transpose();
    for (i, x) in descriptor.values.iter().enumerate() {
        out.axpy(*x, &model.weights.row(i).transpose(), 1.0);
    }
    Ok(Landmarks2D::from_flat(out.as_slice()))
}

/// Ridge regression of `targets` on `inputs` with an unpenalized intercept.
pub fn fit_ridge(inputs: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<DetectorModel> {
    let (n, d) = inputs.shape();
    if n == 0 || targets.nrows() != n {
        return Err(MbwError::InsufficientLabels("no training rows for the detector".into()));
    }
    if !(lambda >= 0.0) {
        return Err(MbwError::InvalidConfig("ridge lambda must be >= 0".into()));
    }
    let x_mean = inputs.row_mean();
    let y_mean = targets.row_mean();
    let mut xc = inputs.clone();
    let mut yc = targets.clone();
    for mut r in xc.row_iter_mut() {
        r -= &x_mean;
    }
    for mut r in yc.row_iter_mut() {
        r -= &y_mean;
    }
    let mut gram = xc.transpose() * &xc;
    let rhs = xc.transpose() * &yc;
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.amax();
        if d > 0 && !(eig.eigenvalues.min() > 1e-12 * max.max(f64::MIN_POSITIVE)) {
            return Err(MbwError::SingularSystem(
                "descriptor design matrix is rank deficient and lambda is 0".into(),
            ));
        }
    }
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let coef = match gram.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            return Err(MbwError::SingularSystem("ridge normal equations not positive definite".into()))
        }
    };
    let intercept = y_mean - x_mean * &coef;
    let mut weights = DMatrix::zeros(d + 1, targets.ncols());
    weights.rows_mut(0, d).copy_from(&coef);
    weights.row_mut(d).copy_from(&intercept);
    Ok(DetectorModel {
        weights,
        ridge_lambda: lambda,
    })
}

/// Fits the detector on every complete label of `labels`, reading the
/// descriptor of `(frame, view)` from `descriptors[frame][view]`.
pub fn train_detector(
    labels: &LabelSet,
    descriptors: &[Vec<FrameDescriptor>],
    ridge_lambda: f64,
) -> Result<DetectorModel> {
    let rows: Vec<(&FrameDescriptor, &Landmarks2D)> = labels
        .iter()
        .filter(|(_, e)| e.points.is_complete())
        .map(|(&(n, v), e)| {
            descriptors
                .get(n)
                .and_then(|views| views.get(v))
                .map(|d| (d, &e.points))
                .ok_or_else(|| MbwError::ShapeMismatch(format!("no descriptor for frame {n} view {v}")))
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(MbwError::InsufficientLabels("no complete labels to train the detector".into()));
    }
    let d = rows[0].0.len();
    let p2 = 2 * rows[0].1.len();
    if rows.iter().any(|(x, y)| x.len() != d || 2 * y.len() != p2) {
        return Err(MbwError::ShapeMismatch("inconsistent descriptor or label sizes".into()));
    }
    let inputs = DMatrix::from_fn(rows.len(), d, |r, c| rows[r].0.values[c]);
    let flat: Vec<Vec<f64>> = rows.iter().map(|(_, y)| y.to_flat()).collect();
    let targets = DMatrix::from_fn(rows.len(), p2, |r, c| flat[r][c]);
    fit_ridge(&inputs, &targets, ridge_lambda)
}

/// Ridge objective `|Y - [X 1] W|^2 + lambda |W without intercept|^2`.
pub fn ridge_objective(model: &DetectorModel, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let d = model.descriptor_dim();
    let mut pred = inputs * model.weights.rows(0, d);
    for mut r in pred.row_iter_mut() {
        r += model.weights.row(d);
    }
    (targets - pred).norm_squared() + model.ridge_lambda * model.weights.rows(0, d).norm_squared()
}
