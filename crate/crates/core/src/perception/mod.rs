//! Stand-ins for the point tracker and the landmark detector, the
//! forward/backward consistency check, and the external plugin protocol.

mod detector;
pub mod plugin;
mod tracker;

pub use detector::{
    detect, fit_ridge, make_descriptor, ridge_objective, train_detector, DetectorModel, FrameDescriptor,
};
pub use tracker::{fb_consistency_check, track_labels, TrackCandidate, TrackerConfig};
