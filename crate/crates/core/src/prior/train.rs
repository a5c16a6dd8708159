use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{input_scale_for, Activation, PriorModel};
use crate::error::{MbwError, Result};
use crate::geometry::{solve_onp, Landmarks2D, WeakPerspectiveCamera};
use crate::pipeline::LabelSet;

/// Optimizer settings for [`train_prior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Frames per step; `None` is full batch.
    pub batch: Option<usize>,
    pub code_dim: usize,
    /// Hidden width of both networks; `None` means `10 * code_dim`.
    pub hidden: Option<usize>,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            steps: 10000,
            seed: 0,
            batch: None,
            code_dim: 8,
            hidden: None,
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    pub fn hidden_width(&self) -> usize {
        self.hidden.unwrap_or(10 * self.code_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.steps == 0 || self.code_dim == 0 {
            return Err(MbwError::InvalidConfig(
                "prior training needs learning_rate > 0, steps >= 1 and code_dim >= 1".into(),
            ));
        }
        if self.batch == Some(0) {
            return Err(MbwError::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Sum over frame-views of the squared reprojection error with the given
/// cameras, and its gradient with respect to the flat model parameters.
///
/// When `cameras` is `None` each view's camera is solved by OnP against the
/// current decoded shape and treated as a constant.
pub(crate) fn loss_and_gradient(
    model: &PriorModel,
    frames: &[Vec<Landmarks2D>],
    cameras: Option<&[Vec<WeakPerspectiveCamera>]>,
) -> Result<(f64, Vec<f64>)> {
    let p = model.joints;
    let (fwd, owner) = model.forward(frames)?;
    let b = frames.len();

    let finite = fwd
        .shapes
        .iter()
        .all(|s| s.points.iter().all(|x| x.iter().all(|c| c.is_finite())));
    let mut loss = if finite { 0.0 } else { f64::NAN };
    let mut d_shape = DMatrix::zeros(b, 3 * p);
    for (n, views) in frames.iter().enumerate() {
        let shape = &fwd.shapes[n];
        for (v, w) in views.iter().enumerate() {
            let cam = match cameras {
                Some(c) => c[n][v].clone(),
                None if !finite => continue,
                None => match solve_onp(w, shape) {
                    Ok((cam, _)) => cam,
                    // a degenerate decoded shape contributes nothing this step
                    Err(MbwError::DegenerateConfiguration(_)) => continue,
                    Err(e) => return Err(e),
                },
            };
            let rows = cam.projection_rows();
            for i in 0..p {
                let x = &shape.points[i];
                let r = w.points()[i] - (rows * x + cam.translation);
                loss += r.norm_squared();
                let g: Vector3<f64> = rows.transpose() * r * -2.0;
                for c in 0..3 {
                    d_shape[(n, 3 * i + c)] += g[c];
                }
            }
        }
    }

    // backward through the centering of the decoder output
    for n in 0..b {
        for c in 0..3 {
            let mean = (0..p).map(|i| d_shape[(n, 3 * i + c)]).sum::<f64>() / p as f64;
            for i in 0..p {
                d_shape[(n, 3 * i + c)] -= mean;
            }
        }
    }

    let act = model.activation;
    let dw4 = d_shape.transpose() * &fwd.dec_hidden;
    let db4 = column_sums(&d_shape);
    let mut dz3 = &d_shape * &model.decoder_out.weights;
    dz3.zip_apply(&fwd.dec_hidden, |g, y| *g *= act.derivative_from_output(y));
    let dw3 = dz3.transpose() * &fwd.codes;
    let db3 = column_sums(&dz3);
    let d_codes = &dz3 * &model.decoder_hidden.weights;

    let mut d_view_codes = DMatrix::zeros(owner.len(), model.code_dim);
    for (r, &n) in owner.iter().enumerate() {
        let weight = 1.0 / frames[n].len() as f64;
        d_view_codes.set_row(r, &(d_codes.row(n) * weight));
    }
    let dw2 = d_view_codes.transpose() * &fwd.enc_hidden;
    let db2 = column_sums(&d_view_codes);
    let mut dz1 = &d_view_codes * &model.encoder_out.weights;
    dz1.zip_apply(&fwd.enc_hidden, |g, y| *g *= act.derivative_from_output(y));
    let dw1 = dz1.transpose() * &fwd.x;
    let db1 = column_sums(&dz1);

    let mut grad = Vec::with_capacity(model.param_count());
    for (w, bias) in [(dw1, db1), (dw2, db2), (dw3, db3), (dw4, db4)] {
        for r in 0..w.nrows() {
            for c in 0..w.ncols() {
                grad.push(w[(r, c)]);
            }
        }
        grad.extend(bias);
    }
    Ok((loss, grad))
}

fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|c| m.column(c).sum()).collect()
}

/// Adam state for a flat parameter vector.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Trains the shape prior on every labeled frame of `labels`.
///
/// Each step solves the cameras by OnP against the current reconstruction,
/// holds them fixed, and takes one optimizer step on the network parameters
/// using the reverse-mode gradient of the summed squared reprojection error.
/// Returns the model and the objective recorded at every step.
pub fn train_prior(
    labels: &LabelSet,
    config: &TrainConfig,
    init: Option<&PriorModel>,
) -> Result<(PriorModel, Vec<f64>)> {
    train_prior_on_frames(&labels.training_frames(), config, init)
}

/// [`train_prior`] on explicit frames, each a list of complete views.
pub fn train_prior_on_frames(
    frames: &[Vec<Landmarks2D>],
    config: &TrainConfig,
    init: Option<&PriorModel>,
) -> Result<(PriorModel, Vec<f64>)> {
    config.validate()?;
    let frames: Vec<Vec<Landmarks2D>> = frames
        .iter()
        .map(|views| views.iter().filter(|v| v.is_complete()).cloned().collect::<Vec<_>>())
        .filter(|views| !views.is_empty())
        .collect();
    let view_count: usize = frames.iter().map(Vec::len).sum();
    if view_count < 2 {
        return Err(MbwError::InsufficientLabels(format!(
            "need at least 2 fully labeled frame-views, got {view_count}"
        )));
    }
    if !frames.iter().any(|v| v.len() >= 2) {
        return Err(MbwError::InsufficientLabels(
            "need at least one frame labeled in two or more views".into(),
        ));
    }
    let joints = frames[0][0].len();

    let mut model = match init {
        Some(m) => {
            if m.joints != joints {
                return Err(MbwError::ShapeMismatch(format!(
                    "initial model has {} joints, labels have {joints}",
                    m.joints
                )));
            }
            m.clone()
        }
        None => {
            let all: Vec<&Landmarks2D> = frames.iter().flatten().collect();
            PriorModel::new_random(
                joints,
                config.code_dim,
                config.hidden_width(),
                config.activation,
                input_scale_for(&all),
                config.seed,
            )
        }
    };

    let mut params = model.params();
    let mut adam = Adam::new(config.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let batch = config.batch.unwrap_or(frames.len()).min(frames.len());
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut cursor = frames.len();

    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grad) = if batch == frames.len() {
            loss_and_gradient(&model, &frames, None)?
        } else {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let chunk: Vec<Vec<Landmarks2D>> = order[cursor..cursor + batch]
                .iter()
                .map(|&i| frames[i].clone())
                .collect();
            cursor += batch;
            loss_and_gradient(&model, &chunk, None)?
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(MbwError::NonFiniteLoss { step });
        }
        trace.push(loss);
        adam.step(&mut params, &grad);
        model.set_params(&params);
    }
    Ok((model, trace))
}
