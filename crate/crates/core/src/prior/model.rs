use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::{project, solve_onp, Landmarks2D, Shape3D, WeakPerspectiveCamera};

pub(crate) const MAGIC: &[u8; 9] = b"MBWPRIOR1";

/// Elementwise nonlinearity between the two affine layers of each network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    /// Linear network; used to check gradients against an exactly
    /// polynomial objective.
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            other => Err(MbwError::InvalidModel(format!("unknown activation code {other}"))),
        }
    }
}

/// Affine layer `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    /// Uniform in `[-a, a]` with `a = fan_in^(-1/2)`.
    fn random(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (input as f64).powf(-0.5);
        Self {
            weights: DMatrix::from_fn(output, input, |_, _| rng.random_range(-a..=a)),
            bias: DVector::from_fn(output, |_, _| rng.random_range(-a..=a)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Row-major weights followed by the bias.
    fn write_params(&self, out: &mut Vec<f64>) {
        for r in 0..self.weights.nrows() {
            for c in 0..self.weights.ncols() {
                out.push(self.weights[(r, c)]);
            }
        }
        out.extend(self.bias.iter());
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let (rows, cols) = self.weights.shape();
        for r in 0..rows {
            for c in 0..cols {
                self.weights[(r, c)] = src[r * cols + c];
            }
        }
        let off = rows * cols;
        for k in 0..self.bias.len() {
            self.bias[k] = src[off + k];
        }
        off + self.bias.len()
    }

    /// Batched forward pass on row-major samples (`batch x in`).
    pub(crate) fn forward_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z
    }
}

/// Low-dimensional shape code.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCode {
    pub values: DVector<f64>,
}

/// The learned geometric constraint: a per-view encoder shared across views,
/// mean pooling of the per-view codes, and a decoder to a centered
/// canonical 3D shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub joints: usize,
    pub code_dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    /// Dataset-level divisor applied after centering each input view.
    pub input_scale: f64,
    pub encoder_hidden: Dense,
    pub encoder_out: Dense,
    pub decoder_hidden: Dense,
    pub decoder_out: Dense,
}

/// Output of [`PriorModel::reconstruct`] for one frame.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub shape: Shape3D,
    pub cameras: Vec<WeakPerspectiveCamera>,
    /// Frobenius reprojection error per view, in image units.
    pub scores: Vec<f64>,
}

impl Reconstruction {
    pub fn reprojection(&self, view: usize) -> Landmarks2D {
        project(&self.shape, &self.cameras[view])
    }
}

/// Intermediate activations of a batched forward pass.
pub(crate) struct Forward {
    pub x: DMatrix<f64>,
    pub enc_hidden: DMatrix<f64>,
    pub codes: DMatrix<f64>,
    pub dec_hidden: DMatrix<f64>,
    pub shapes: Vec<Shape3D>,
}

impl PriorModel {
    pub fn new_random(
        joints: usize,
        code_dim: usize,
        hidden: usize,
        activation: Activation,
        input_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            joints,
            code_dim,
            hidden,
            activation,
            input_scale,
            encoder_hidden: Dense::random(2 * joints, hidden, &mut rng),
            encoder_out: Dense::random(hidden, code_dim, &mut rng),
            decoder_hidden: Dense::random(code_dim, hidden, &mut rng),
            decoder_out: Dense::random(hidden, 3 * joints, &mut rng),
        }
    }

    pub fn zeros(joints: usize, code_dim: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            joints,
            code_dim,
            hidden,
            activation,
            input_scale: 1.0,
            encoder_hidden: Dense::zeros(2 * joints, hidden),
            encoder_out: Dense::zeros(hidden, code_dim),
            decoder_hidden: Dense::zeros(code_dim, hidden),
            decoder_out: Dense::zeros(hidden, 3 * joints),
        }
    }

    fn layers(&self) -> [&Dense; 4] {
        [
            &self.encoder_hidden,
            &self.encoder_out,
            &self.decoder_hidden,
            &self.decoder_out,
        ]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 4] {
        [
            &mut self.encoder_hidden,
            &mut self.encoder_out,
            &mut self.decoder_hidden,
            &mut self.decoder_out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Flat parameter vector in serialization order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut off = 0;
        for layer in self.layers_mut() {
            off += layer.read_params(&params[off..]);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.joints;
        let dims = [
            (self.encoder_hidden.input_dim(), 2 * p),
            (self.encoder_hidden.output_dim(), self.hidden),
            (self.encoder_out.input_dim(), self.hidden),
            (self.encoder_out.output_dim(), self.code_dim),
            (self.decoder_hidden.input_dim(), self.code_dim),
            (self.decoder_hidden.output_dim(), self.hidden),
            (self.decoder_out.input_dim(), self.hidden),
            (self.decoder_out.output_dim(), 3 * p),
        ];
        if dims.iter().any(|(a, b)| a != b) {
            return Err(MbwError::InvalidModel("layer shapes are inconsistent".into()));
        }
        if !(self.input_scale > 0.0) || self.params().iter().any(|x| !x.is_finite()) {
            return Err(MbwError::InvalidModel("non-finite parameters".into()));
        }
        Ok(())
    }

    /// Centered and scale-normalized flattening of one view.
    pub fn normalize_view(&self, view: &Landmarks2D) -> Result<DVector<f64>> {
        if view.len() != self.joints {
            return Err(MbwError::ShapeMismatch(format!(
                "view has {} points, model expects {}",
                view.len(),
                self.joints
            )));
        }
        if !view.is_complete() {
            return Err(MbwError::IncompleteInput(
                "shape prior inputs must have every point present".into(),
            ));
        }
        let c = view.centroid().expect("complete view");
        Ok(DVector::from_iterator(
            2 * self.joints,
            view.points()
                .iter()
                .flat_map(|p| [(p.x - c.x) / self.input_scale, (p.y - c.y) / self.input_scale]),
        ))
    }

    fn activate(&self, mut z: DMatrix<f64>) -> DMatrix<f64> {
        let act = self.activation;
        z.apply(|x| *x = act.apply(*x));
        z
    }

    /// Batched forward pass over `frames`, each a list of views. Returns the
    /// intermediate activations needed for backpropagation.
    pub(crate) fn forward(&self, frames: &[Vec<Landmarks2D>]) -> Result<(Forward, Vec<usize>)> {
        let total: usize = frames.iter().map(Vec::len).sum();
        if frames.iter().any(Vec::is_empty) {
            return Err(MbwError::IncompleteInput("a frame has no views".into()));
        }
        let mut x = DMatrix::zeros(total, 2 * self.joints);
        let mut owner = Vec::with_capacity(total);
        let mut row = 0;
        for (n, views) in frames.iter().enumerate() {
            for v in views {
                let nv = self.normalize_view(v)?;
                x.set_row(row, &nv.transpose());
                owner.push(n);
                row += 1;
            }
        }
        let enc_hidden = self.activate(self.encoder_hidden.forward_rows(&x));
        let view_codes = self.encoder_out.forward_rows(&enc_hidden);

        let mut codes = DMatrix::zeros(frames.len(), self.code_dim);
        for (r, &n) in owner.iter().enumerate() {
            let weight = 1.0 / frames[n].len() as f64;
            let mut dst = codes.row_mut(n);
            dst += view_codes.row(r) * weight;
        }
        let (dec_hidden, shapes) = self.decode_rows(&codes);
        Ok((
            Forward {
                x,
                enc_hidden,
                codes,
                dec_hidden,
                shapes,
            },
            owner,
        ))
    }

    fn decode_rows(&self, codes: &DMatrix<f64>) -> (DMatrix<f64>, Vec<Shape3D>) {
        let dec_hidden = self.activate(self.decoder_hidden.forward_rows(codes));
        let raw = self.decoder_out.forward_rows(&dec_hidden);
        let shapes = raw
            .row_iter()
            .map(|r| {
                let flat: Vec<f64> = r.iter().copied().collect();
                Shape3D::from_flat(&flat).centered()
            })
            .collect();
        (dec_hidden, shapes)
    }

    /// Pools the per-view codes of `views` into one code.
    pub fn encode(&self, views: &[Landmarks2D]) -> Result<ShapeCode> {
        if views.is_empty() {
            return Err(MbwError::IncompleteInput("no views to encode".into()));
        }
        let (fwd, _) = self.forward(std::slice::from_ref(&views.to_vec()))?;
        Ok(ShapeCode {
            values: fwd.codes.row(0).transpose(),
        })
    }

    /// Canonical shape for `code`, centered at the origin.
    pub fn decode(&self, code: &ShapeCode) -> Result<Shape3D> {
        if code.values.len() != self.code_dim {
            return Err(MbwError::ShapeMismatch(format!(
                "code has length {}, model expects {}",
                code.values.len(),
                self.code_dim
            )));
        }
        let (_, mut shapes) = self.decode_rows(&DMatrix::from_row_slice(1, code.values.len(), code.values.as_slice()));
        Ok(shapes.remove(0))
    }

    /// Shape, per-view OnP cameras and per-view uncertainty scores.
    pub fn reconstruct(&self, views: &[Landmarks2D]) -> Result<Reconstruction> {
        let mut out = self.reconstruct_batch(std::slice::from_ref(&views.to_vec()))?;
        Ok(out.remove(0))
    }

    /// [`PriorModel::reconstruct`] over many frames with one batched pass.
    pub fn reconstruct_batch(&self, frames: &[Vec<Landmarks2D>]) -> Result<Vec<Reconstruction>> {
        let (fwd, _) = self.forward(frames)?;
        frames
            .iter()
            .zip(fwd.shapes)
            .map(|(views, shape)| {
                let mut cameras = Vec::with_capacity(views.len());
                let mut scores = Vec::with_capacity(views.len());
                for v in views {
                    let (cam, _) = solve_onp(v, &shape)?;
                    // score over all P points, not only the ones OnP used
                    scores.push(v.frobenius_distance(&project(&shape, &cam)));
                    cameras.push(cam);
                }
                Ok(Reconstruction {
                    shape,
                    cameras,
                    scores,
                })
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for dim in [
            self.joints as u64,
            self.code_dim as u64,
            self.hidden as u64,
            self.activation.code(),
        ] {
            w.write_all(&dim.to_le_bytes())?;
        }
        w.write_all(&self.input_scale.to_le_bytes())?;
        for x in self.params() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |e: std::io::Error| MbwError::InvalidModel(format!("truncated model: {e}"));
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(MbwError::InvalidModel("bad magic header".into()));
        }
        let mut word = [0u8; 8];
        let mut dims = [0u64; 4];
        for d in &mut dims {
            r.read_exact(&mut word).map_err(bad)?;
            *d = u64::from_le_bytes(word);
        }
        if dims[..3].iter().any(|&d| d == 0 || d > 1 << 20) {
            return Err(MbwError::InvalidModel(format!("implausible dimensions {dims:?}")));
        }
        let mut model = PriorModel::zeros(
            dims[0] as usize,
            dims[1] as usize,
            dims[2] as usize,
            Activation::from_code(dims[3])?,
        );
        r.read_exact(&mut word).map_err(bad)?;
        model.input_scale = f64::from_le_bytes(word);
        let mut params = vec![0.0; model.param_count()];
        for x in &mut params {
            r.read_exact(&mut word).map_err(bad)?;
            *x = f64::from_le_bytes(word);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(bad)?;
        if !rest.is_empty() {
            return Err(MbwError::InvalidModel(format!("{} trailing bytes", rest.len())));
        }
        model.set_params(&params);
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| MbwError::io(path, e))?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| MbwError::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

/// Root-mean-square distance of points from their view centroid, over all
/// given views. Used as the model's input normalization constant.
pub fn input_scale_for(views: &[&Landmarks2D]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in views {
        if let Some(c) = v.centroid() {
            for (_, p) in v.present() {
                sum += (p - c).norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 || sum == 0.0 {
        1.0
    } else {
        (sum / count as f64).sqrt()
    }
}
