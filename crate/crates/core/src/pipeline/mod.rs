//! The bootstrapping loop: manual seeds, label propagation, and rounds of
//! detector and prior retraining with outlier rejection and denoising.

mod config;
mod labels;
mod run;
mod stages;

pub use config::{DetectorKind, DetectorLabels, Method, PipelineConfig};
pub use labels::{LabelEntry, LabelSet, LabelSource};
pub use run::{
    label_error_2d, reconstruction_error, run_baseline_tk, run_baseline_triangulation, run_method, run_pipeline,
    DatasetSummary, FrameRecord, Manifest, RunFailure, RunOutput, StageRecord,
};
pub use stages::{
    compute_bbox, default_tau, denoise_inliers, flow_stage, flow_stage_with, init_label_set, score_frames,
    select_inliers, select_manual_frames, self_train_iteration, train_initial_prior, BBox, FlowOutcome, FrameScore,
    IterationOutcome, ScoredView, Scorer,
};
