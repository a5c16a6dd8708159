use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MbwError, Result};

/// `P` image points with a per-point missing marker.
///
/// Missing coordinates are stored as NaN so that accidental use shows up
/// immediately in downstream arithmetic.
#[derive(Debug, Clone)]
pub struct Landmarks2D {
    points: Vec<Vector2<f64>>,
    missing: Vec<bool>,
}

impl Landmarks2D {
    /// All points present.
    pub fn new(points: Vec<Vector2<f64>>) -> Self {
        let missing = vec![false; points.len()];
        Self { points, missing }
    }

    pub fn from_xy(xy: &[[f64; 2]]) -> Self {
        Self::new(xy.iter().map(|p| Vector2::new(p[0], p[1])).collect())
    }

    /// Builds landmarks from optional points; `None` marks a missing point.
    pub fn from_options(points: Vec<Option<Vector2<f64>>>) -> Self {
        let missing = points.iter().map(Option::is_none).collect();
        let points = points
            .into_iter()
            .map(|p| p.unwrap_or_else(|| Vector2::new(f64::NAN, f64::NAN)))
            .collect();
        Self { points, missing }
    }

    /// `P` points, all missing.
    pub fn all_missing(len: usize) -> Self {
        Self::from_options(vec![None; len])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Option<Vector2<f64>> {
        (!self.missing[i]).then(|| self.points[i])
    }

    /// Raw point storage, NaN where missing.
    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    pub fn present_count(&self) -> usize {
        self.missing.iter().filter(|&&m| !m).count()
    }

    /// Iterates `(index, point)` over present points.
    pub fn present(&self) -> impl Iterator<Item = (usize, Vector2<f64>)> + '_ {
        self.points
            .iter()
            .zip(&self.missing)
            .enumerate()
            .filter(|(_, (_, &m))| !m)
            .map(|(i, (p, _))| (i, *p))
    }

    pub fn set_missing(&mut self, i: usize) {
        self.missing[i] = true;
        self.points[i] = Vector2::new(f64::NAN, f64::NAN);
    }

    pub fn set_point(&mut self, i: usize, p: Vector2<f64>) {
        self.missing[i] = false;
        self.points[i] = p;
    }

    pub fn centroid(&self) -> Option<Vector2<f64>> {
        let n = self.present_count();
        if n == 0 {
            return None;
        }
        Some(self.present().map(|(_, p)| p).sum::<Vector2<f64>>() / n as f64)
    }

    /// Row-major flattening `[x0, y0, x1, y1, ...]`. NaN where missing.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self::new(flat.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect())
    }

    /// Frobenius norm of the difference over points present in both.
    pub fn frobenius_distance(&self, other: &Landmarks2D) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .enumerate()
            .filter(|(i, _)| !self.missing[*i] && !other.missing[*i])
            .map(|(_, (a, b))| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Mean per-point Euclidean distance over points present in both.
    pub fn mean_point_distance(&self, other: &Landmarks2D) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.len() {
            if let (Some(a), Some(b)) = (self.point(i), other.point(i)) {
                sum += (a - b).norm();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Largest distance between any two present points.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<_> = self.present().map(|(_, p)| p).collect();
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max((pts[i] - pts[j]).norm());
            }
        }
        best
    }
}

impl PartialEq for Landmarks2D {
    /// Equal when the same points are missing and every present point matches.
    fn eq(&self, other: &Self) -> bool {
        self.missing == other.missing
            && (0..self.len()).all(|i| self.missing[i] || self.points[i] == other.points[i])
    }
}

impl Serialize for Landmarks2D {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Option<[f64; 2]>> = (0..self.len())
            .map(|i| self.point(i).map(|p| [p.x, p.y]))
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Landmarks2D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Option<[f64; 2]>> = Vec::deserialize(d)?;
        Ok(Landmarks2D::from_options(
            rows.into_iter()
                .map(|r| r.map(|p| Vector2::new(p[0], p[1])))
                .collect(),
        ))
    }
}

/// `P` points of a 3D structure in the canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape3D {
    pub points: Vec<Vector3<f64>>,
}

impl Shape3D {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn from_xyz(xyz: &[[f64; 3]]) -> Self {
        Self::new(xyz.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self::new(
            flat.chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len().max(1) as f64
    }

    pub fn centered(&self) -> Shape3D {
        let c = self.centroid();
        Shape3D::new(self.points.iter().map(|p| p - c).collect())
    }

    /// Mirror image through the canonical `z = 0` plane.
    pub fn reflected(&self) -> Shape3D {
        Shape3D::new(
            self.points
                .iter()
                .map(|p| Vector3::new(p.x, p.y, -p.z))
                .collect(),
        )
    }

    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.max((self.points[i] - self.points[j]).norm());
            }
        }
        best
    }
}

/// Rotation, isotropic scale and image translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspectiveCamera {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector2<f64>,
}

impl WeakPerspectiveCamera {
    pub fn new(rotation: Matrix3<f64>, scale: f64, translation: Vector2<f64>) -> Result<Self> {
        let cam = Self {
            rotation,
            scale,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            scale: 1.0,
            translation: Vector2::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-9) || self.rotation.determinant() < 0.0 {
            return Err(MbwError::InvalidConfig(format!(
                "camera rotation is not a proper rotation (orthogonality error {ortho:e})"
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(MbwError::InvalidConfig(format!(
                "camera scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// `scale` times the first two rotation rows.
    pub fn projection_rows(&self) -> Matrix2x3<f64> {
        self.rotation.fixed_rows::<2>(0).into_owned() * self.scale
    }

    pub fn project_point(&self, x: &Vector3<f64>) -> Vector2<f64> {
        self.projection_rows() * x + self.translation
    }
}

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            scale: 1.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, shape: &Shape3D) -> Shape3D {
        Shape3D::new(
            shape
                .points
                .iter()
                .map(|p| self.rotation * p * self.scale + self.translation)
                .collect(),
        )
    }
}
