//! Seeded multi-view articulated data with full groundtruth.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::{project, rotation_from_axis_angle, Landmarks2D, Shape3D, WeakPerspectiveCamera};
use crate::metrics::SkeletonDef;
use crate::perception::{make_descriptor, FrameDescriptor};
use crate::seed::{derive_seed, rng_for};

/// Error model for the simulated landmark detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorNoise {
    /// Per-axis noise on visible points (image units).
    pub sigma_base: f64,
    /// Per-axis noise on occluded points.
    pub sigma_occluded: f64,
    /// Probability that a point is teleported.
    pub outlier_rate: f64,
    /// Range of teleport distances.
    pub outlier_offset: [f64; 2],
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            sigma_base: 0.2,
            sigma_occluded: 1.0,
            outlier_rate: 0.05,
            outlier_offset: [30.0, 80.0],
        }
    }
}

impl DetectorNoise {
    pub fn none() -> Self {
        Self {
            sigma_base: 0.0,
            sigma_occluded: 0.0,
            outlier_rate: 0.0,
            outlier_offset: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_base >= 0.0) || !(self.sigma_occluded >= self.sigma_base) {
            return Err(MbwError::InvalidConfig(
                "detector noise needs 0 <= sigma_base <= sigma_occluded".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(MbwError::InvalidConfig("outlier rate must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.outlier_offset;
        if !(0.0 <= lo && lo <= hi) {
            return Err(MbwError::InvalidConfig("outlier offsets need 0 <= min <= max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub joints: usize,
    pub frames: usize,
    pub views: usize,
    /// Rank of the shape deformation space.
    pub latent_rank: usize,
    /// Exponential smoothing factor of the latent trajectory.
    pub latent_smoothness: f64,
    /// Per-coordinate standard deviation of the basis shapes.
    pub deformation: f64,
    /// Per-coordinate jitter added to the skeleton template.
    pub template_jitter: f64,
    /// Per-frame standard deviation of the camera rotation walk (radians).
    pub camera_motion_sigma: f64,
    /// Yaw between consecutive views (degrees).
    pub view_separation_deg: f64,
    /// Each view's elevation is drawn uniformly from +- this (degrees).
    pub elevation_jitter_deg: f64,
    /// Pixels per world unit, before the per-view jitter of +-10%.
    pub image_scale: f64,
    pub occlusion_rate: f64,
    pub detector: DetectorNoise,
    pub descriptor_dim: usize,
    pub descriptor_noise: f64,
    /// Permit views closer than 30 degrees (negative tests only).
    pub allow_narrow_baseline: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            joints: 12,
            frames: 300,
            views: 2,
            latent_rank: 5,
            latent_smoothness: 0.995,
            deformation: 0.05,
            template_jitter: 0.02,
            camera_motion_sigma: 0.01,
            view_separation_deg: 45.0,
            elevation_jitter_deg: 15.0,
            image_scale: 100.0,
            occlusion_rate: 0.1,
            detector: DetectorNoise::default(),
            descriptor_dim: 48,
            descriptor_noise: 0.1,
            allow_narrow_baseline: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Views only a few degrees apart.
    pub fn narrow_baseline() -> Self {
        Self {
            view_separation_deg: 3.0,
            elevation_jitter_deg: 0.0,
            allow_narrow_baseline: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.frames == 0 || self.views == 0 {
            return Err(MbwError::InvalidConfig("joints, frames and views must be positive".into()));
        }
        if self.latent_rank > 2 * self.joints {
            return Err(MbwError::InvalidConfig("latent rank may not exceed 2P".into()));
        }
        if !(0.0..1.0).contains(&self.latent_smoothness) {
            return Err(MbwError::InvalidConfig("latent smoothness must lie in [0, 1)".into()));
        }
        if !(self.camera_motion_sigma >= 0.0)
            || !(self.deformation >= 0.0)
            || !(self.template_jitter >= 0.0)
            || !(self.descriptor_noise >= 0.0)
            || !(self.image_scale > 0.0)
        {
            return Err(MbwError::InvalidConfig("scales and noise levels must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return Err(MbwError::InvalidConfig("occlusion rate must lie in [0, 1]".into()));
        }
        if self.views > 1 && !self.allow_narrow_baseline && !(self.view_separation_deg >= 30.0) {
            return Err(MbwError::InvalidConfig(
                "views must be at least 30 degrees apart".into(),
            ));
        }
        self.detector.validate()
    }
}

/// Generator internals kept for oracles; the pipeline never reads these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthHidden {
    pub mean_shape: Shape3D,
    pub basis: Vec<Shape3D>,
    /// Latent coordinates per frame.
    pub latents: Vec<Vec<f64>>,
    /// Descriptor mixing matrix, `descriptor_dim x 2P`.
    pub mix: DMatrix<f64>,
}

/// Corrupted landmarks per frame-view with the injected teleports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedLandmarks {
    pub points: Vec<Vec<Landmarks2D>>,
    /// `[frame][view][point]`: the point was teleported.
    pub outliers: Vec<Vec<Vec<bool>>>,
}

impl CorruptedLandmarks {
    pub fn has_outlier(&self, frame: usize, view: usize) -> bool {
        self.outliers[frame][view].iter().any(|&o| o)
    }

    /// Adds this field's offset from `gt` to `pred`, point by point.
    pub fn perturb(&self, frame: usize, view: usize, gt: &Landmarks2D, pred: &Landmarks2D) -> Landmarks2D {
        let field = &self.points[frame][view];
        Landmarks2D::new(
            (0..pred.len())
                .map(|i| pred.points()[i] + (field.points()[i] - gt.points()[i]))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub gt_shapes: Vec<Shape3D>,
    /// `[frame][view]`.
    pub gt_cams: Vec<Vec<WeakPerspectiveCamera>>,
    pub gt_2d: Vec<Vec<Landmarks2D>>,
    pub descriptors: Vec<Vec<FrameDescriptor>>,
    /// `[frame][view][point]`.
    pub occluded: Vec<Vec<Vec<bool>>>,
    pub skeleton: SkeletonDef,
    /// Per frame-view detector error field: groundtruth corrupted by the
    /// detector noise model. A trained detector's output is shifted by this
    /// field, so hard frames stay hard whatever the regression learns.
    pub detector_field: CorruptedLandmarks,
    pub hidden: SynthHidden,
}

impl SynthDataset {
    pub fn frames(&self) -> usize {
        self.gt_shapes.len()
    }

    pub fn views(&self) -> usize {
        self.config.views
    }

    pub fn joints(&self) -> usize {
        self.config.joints
    }

    /// Groundtruth trajectory of one view.
    pub fn view_sequence(&self, view: usize) -> Vec<Landmarks2D> {
        self.gt_2d.iter().map(|f| f[view].clone()).collect()
    }

    /// Median 2D diameter of the groundtruth skeleton over all frame-views.
    pub fn median_diameter(&self) -> f64 {
        let mut d: Vec<f64> = self.gt_2d.iter().flatten().map(Landmarks2D::diameter).collect();
        median(&mut d)
    }

    /// Median 3D diameter of the groundtruth shapes.
    pub fn median_shape_diameter(&self) -> f64 {
        let mut d: Vec<f64> = self.gt_shapes.iter().map(Shape3D::diameter).collect();
        median(&mut d)
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

const HUMAN12: [[f64; 3]; 12] = [
    [0.0, 0.85, 0.0],
    [0.0, 0.6, 0.0],
    [0.25, 0.55, 0.0],
    [-0.25, 0.55, 0.0],
    [0.35, 0.2, 0.05],
    [-0.35, 0.2, 0.05],
    [0.38, -0.1, 0.15],
    [-0.38, -0.1, 0.15],
    [0.15, -0.1, 0.0],
    [-0.15, -0.1, 0.0],
    [0.17, -0.55, 0.05],
    [-0.17, -0.55, 0.05],
];

fn gaussian_shape(rng: &mut impl Rng, p: usize, sigma: f64) -> Shape3D {
    let n = Normal::new(0.0, sigma).expect("non-negative sigma");
    Shape3D::new(
        (0..p)
            .map(|_| Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
            .collect(),
    )
}

fn template(cfg: &SynthConfig) -> (Shape3D, SkeletonDef) {
    let mut rng = rng_for(cfg.seed, &[1]);
    let (base, skeleton) = if cfg.joints == 12 {
        // stretched so the figure is about two units tall
        (
            Shape3D::new(HUMAN12.iter().map(|p| Vector3::new(p[0], p[1], p[2]) * 1.43).collect()),
            SkeletonDef::human12(),
        )
    } else {
        (gaussian_shape(&mut rng, cfg.joints, 0.6), SkeletonDef::chain(cfg.joints))
    };
    let jitter = gaussian_shape(&mut rng, cfg.joints, cfg.template_jitter);
    let mean = Shape3D::new(base.points.iter().zip(&jitter.points).map(|(a, b)| a + b).collect()).centered();
    (mean, skeleton)
}

/// Exponentially smoothed white noise, rescaled to unit stationary variance.
fn latent_trajectory(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = rng_for(cfg.seed, &[2]);
    let a = cfg.latent_smoothness;
    let gain = ((1.0 + a) / (1.0 - a)).sqrt();
    let mut state: Vec<f64> = (0..cfg.latent_rank)
        .map(|_| rng.sample::<f64, _>(StandardNormal) / gain)
        .collect();
    (0..cfg.frames)
        .map(|_| {
            for s in state.iter_mut() {
                *s = a * *s + (1.0 - a) * rng.sample::<f64, _>(StandardNormal);
            }
            state.iter().map(|s| s * gain).collect()
        })
        .collect()
}

fn camera_tracks(cfg: &SynthConfig) -> Vec<Vec<WeakPerspectiveCamera>> {
    let mut per_view = Vec::with_capacity(cfg.views);
    for v in 0..cfg.views {
        let mut rng = rng_for(cfg.seed, &[3, v as u64]);
        let yaw = (v as f64 * cfg.view_separation_deg).to_radians();
        let elev_range = cfg.elevation_jitter_deg.to_radians();
        let elev = if elev_range > 0.0 {
            rng.random_range(-elev_range..elev_range)
        } else {
            0.0
        };
        let roll = rng.random_range(-0.05..0.05);
        let mut rotation: Matrix3<f64> = rotation_from_axis_angle(&Vector3::new(0.0, 0.0, roll))
            * rotation_from_axis_angle(&Vector3::new(elev, 0.0, 0.0))
            * rotation_from_axis_angle(&Vector3::new(0.0, yaw, 0.0));
        let scale = cfg.image_scale * rng.random_range(0.9..1.1);
        let mut translation = Vector2::new(320.0 + rng.random_range(-20.0..20.0), 240.0 + rng.random_range(-20.0..20.0));
        let step = Normal::new(0.0, cfg.camera_motion_sigma).expect("validated sigma");
        let shift = Normal::new(0.0, 0.5).expect("constant sigma");
        let mut track = Vec::with_capacity(cfg.frames);
        for n in 0..cfg.frames {
            if n > 0 && cfg.camera_motion_sigma > 0.0 {
                let w = Vector3::new(step.sample(&mut rng), step.sample(&mut rng), step.sample(&mut rng));
                rotation = crate::geometry::nearest_rotation(&(rotation_from_axis_angle(&w) * rotation));
                translation += Vector2::new(shift.sample(&mut rng), shift.sample(&mut rng));
            }
            track.push(WeakPerspectiveCamera {
                rotation,
                scale,
                translation,
            });
        }
        per_view.push(track);
    }
    (0..cfg.frames)
        .map(|n| per_view.iter().map(|t| t[n].clone()).collect())
        .collect()
}

/// Builds a dataset from `cfg`. Equal configs give identical datasets.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let p = cfg.joints;
    let (mean_shape, skeleton) = template(cfg);
    let mut basis_rng = rng_for(cfg.seed, &[4]);
    let basis: Vec<Shape3D> = (0..cfg.latent_rank)
        .map(|_| gaussian_shape(&mut basis_rng, p, cfg.deformation).centered())
        .collect();
    let latents = latent_trajectory(cfg);
    let gt_shapes: Vec<Shape3D> = latents
        .iter()
        .map(|z| {
            let mut pts = mean_shape.points.clone();
            for (zd, b) in z.iter().zip(&basis) {
                for (x, bx) in pts.iter_mut().zip(&b.points) {
                    *x += *zd * bx;
                }
            }
            Shape3D::new(pts)
        })
        .collect();
    let gt_cams = camera_tracks(cfg);
    let gt_2d: Vec<Vec<Landmarks2D>> = gt_shapes
        .iter()
        .zip(&gt_cams)
        .map(|(s, cams)| cams.iter().map(|c| project(s, c)).collect())
        .collect();

    let mut occ_rng = rng_for(cfg.seed, &[5]);
    let occluded: Vec<Vec<Vec<bool>>> = (0..cfg.frames)
        .map(|_| {
            (0..cfg.views)
                .map(|_| (0..p).map(|_| occ_rng.random_bool(cfg.occlusion_rate)).collect())
                .collect()
        })
        .collect();

    let mut mix_rng = rng_for(cfg.seed, &[6]);
    let mix_scale = (2.0 * p as f64).sqrt().recip();
    let mix = DMatrix::from_fn(cfg.descriptor_dim, 2 * p, |_, _| {
        mix_scale * mix_rng.sample::<f64, _>(StandardNormal)
    });

    let mut ds = SynthDataset {
        config: cfg.clone(),
        gt_shapes,
        gt_cams,
        gt_2d,
        descriptors: Vec::new(),
        occluded,
        skeleton,
        detector_field: CorruptedLandmarks {
            points: Vec::new(),
            outliers: Vec::new(),
        },
        hidden: SynthHidden {
            mean_shape,
            basis,
            latents,
            mix,
        },
    };
    ds.detector_field = corrupt_for_detector(&ds, &cfg.detector, derive_seed(cfg.seed, &[7]))?;
    ds.descriptors = ds
        .gt_2d
        .iter()
        .enumerate()
        .map(|(n, views)| {
            views
                .iter()
                .enumerate()
                .map(|(v, w)| {
                    make_descriptor(w, &ds.hidden.mix, cfg.descriptor_noise, derive_seed(cfg.seed, &[8, n as u64, v as u64]))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds)
}

/// Groundtruth landmarks with per-point Gaussian noise (larger where
/// occluded) and teleported outliers.
pub fn corrupt_for_detector(ds: &SynthDataset, noise: &DetectorNoise, seed: u64) -> Result<CorruptedLandmarks> {
    noise.validate()?;
    let base = Normal::new(0.0, noise.sigma_base).expect("validated");
    let occl = Normal::new(0.0, noise.sigma_occluded).expect("validated");
    let mut points = Vec::with_capacity(ds.frames());
    let mut outliers = Vec::with_capacity(ds.frames());
    for (n, views) in ds.gt_2d.iter().enumerate() {
        let mut pf = Vec::with_capacity(views.len());
        let mut of = Vec::with_capacity(views.len());
        for (v, gt) in views.iter().enumerate() {
            let mut rng = rng_for(seed, &[n as u64, v as u64]);
            let mut w = gt.clone();
            let mut out = vec![false; gt.len()];
            for i in 0..gt.len() {
                let dist = if ds.occluded[n][v][i] { &occl } else { &base };
                let mut q = gt.points()[i] + Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng));
                if rng.random_bool(noise.outlier_rate) {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let [lo, hi] = noise.outlier_offset;
                    let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
                    q += Vector2::new(angle.cos(), angle.sin()) * r;
                    out[i] = true;
                }
                w.set_point(i, q);
            }
            pf.push(w);
            of.push(out);
        }
        points.push(pf);
        outliers.push(of);
    }
    Ok(CorruptedLandmarks { points, outliers })
}

/// Projection residual of `shape` onto the affine span of the generator's
/// mean and basis.
pub fn subspace_residual(hidden: &SynthHidden, shape: &Shape3D) -> f64 {
    let m = hidden.basis.len();
    let target = DVector::from_vec(
        shape
            .to_flat()
            .iter()
            .zip(hidden.mean_shape.to_flat())
            .map(|(a, b)| a - b)
            .collect(),
    );
    if m == 0 {
        return target.norm();
    }
    let b = DMatrix::from_fn(target.len(), m, |r, c| hidden.basis[c].to_flat()[r]);
    let coef = b
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .expect("svd computed with both factors");
    (target - b * coef).norm()
}
