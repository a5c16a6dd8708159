use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::perception::TrackerConfig;
use crate::prior::TrainConfig;

/// How frame-views are scored and denoised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Learned shape prior with OnP cameras.
    Mbw,
    /// Per-frame triangulation with the groundtruth cameras.
    Triangulation,
    /// Rigid factorization over a sliding window of frames.
    Tk,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mbw => "mbw",
            Method::Triangulation => "triangulation",
            Method::Tk => "tk",
        }
    }
}

/// Which labels the detector is retrained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorLabels {
    /// Reprojections of the reconstruction (the default).
    Denoised,
    /// The detector's own raw outputs for inliers.
    Raw,
}

/// Source of the 2D predictions in each self-training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Ridge regression on frame descriptors.
    Ridge,
    /// Groundtruth landmarks; a perfect detector for testing.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Outlier threshold on the uncertainty score. `None` uses 5% of the
    /// median 2D diameter of the manual labels.
    pub tau: Option<f64>,
    pub iterations: usize,
    pub label_fraction: f64,
    /// Forward/backward threshold. `None` scales with each track's length.
    pub fb_epsilon: Option<f64>,
    pub bbox_pad: f64,
    pub seed: u64,
    pub prior: TrainConfig,
    /// Optimizer steps when retraining the prior in later iterations.
    pub prior_retrain_steps: usize,
    pub ridge_lambda: f64,
    pub tracker: TrackerConfig,
    /// Disable label propagation; the flow stage then returns the manual set.
    pub use_tracker: bool,
    /// Frames on each side of the scored frame in the factorization window.
    pub tk_half_window: usize,
    pub detector_labels: DetectorLabels,
    pub detector: DetectorKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: None,
            iterations: 3,
            label_fraction: 0.02,
            fb_epsilon: None,
            bbox_pad: 10.0,
            seed: 0,
            prior: TrainConfig::default(),
            prior_retrain_steps: 1500,
            ridge_lambda: 1.0,
            tracker: TrackerConfig::default(),
            use_tracker: true,
            tk_half_window: 5,
            detector_labels: DetectorLabels::Denoised,
            detector: DetectorKind::Ridge,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(MbwError::InvalidConfig("tau must be positive".into()));
            }
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(MbwError::InvalidConfig("label fraction must lie in (0, 1]".into()));
        }
        if self.fb_epsilon.is_some_and(|e| !(e >= 0.0)) {
            return Err(MbwError::InvalidConfig("fb epsilon must be >= 0".into()));
        }
        if !(self.bbox_pad >= 0.0) {
            return Err(MbwError::InvalidConfig("bbox pad must be >= 0".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(MbwError::InvalidConfig("ridge lambda must be >= 0".into()));
        }
        if self.prior_retrain_steps == 0 {
            return Err(MbwError::InvalidConfig("prior retrain steps must be >= 1".into()));
        }
        self.prior.validate()?;
        self.tracker.validate()
    }
}
