use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::Landmarks2D;
use crate::seed::rng_for;

/// Parameters of the synthetic point tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Standard deviation of the per-step displacement error, per axis.
    pub noise_sigma: f64,
    /// Probability that a tracked point is teleported at a frame.
    pub outlier_rate: f64,
    /// Probability that a teleported point's backward track still returns
    /// to the seed.
    pub consistent_error_rate: f64,
    /// Systematic displacement error per step, along the image diagonal.
    pub drift_per_step: f64,
    /// Range of teleport distances.
    pub outlier_offset: [f64; 2],
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.5,
            outlier_rate: 0.05,
            consistent_error_rate: 0.3,
            drift_per_step: 0.02,
            outlier_offset: [30.0, 80.0],
            seed: 0,
        }
    }
}

impl TrackerConfig {
    /// Tracker that reproduces the groundtruth motion exactly.
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            outlier_rate: 0.0,
            consistent_error_rate: 0.0,
            drift_per_step: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if !(self.noise_sigma >= 0.0) || !(self.drift_per_step >= 0.0) {
            return Err(MbwError::InvalidConfig("tracker noise and drift must be >= 0".into()));
        }
        if !rate(self.outlier_rate) || !rate(self.consistent_error_rate) {
            return Err(MbwError::InvalidConfig("tracker rates must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.outlier_offset;
        if !(lo <= hi) || lo < 20.0 * self.noise_sigma {
            return Err(MbwError::InvalidConfig(
                "outlier offsets need min <= max and min >= 20 * noise_sigma".into(),
            ));
        }
        Ok(())
    }

    /// Default forward/backward threshold for a track `path_len` frames from
    /// its seed: three standard deviations of the round-trip noise, which
    /// accumulates over `2 * path_len` steps.
    pub fn default_fb_epsilon(&self, path_len: usize) -> f64 {
        3.0 * self.noise_sigma * (2.0 * path_len as f64).sqrt()
    }
}

/// Tracker output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackCandidate {
    pub frame: usize,
    pub seed_frame: usize,
    pub path_len: usize,
    /// Propagated landmarks at `frame`.
    pub forward: Landmarks2D,
    /// Where the backward track from `forward` lands at the seed frame.
    pub backward: Landmarks2D,
    /// Points teleported at this frame.
    pub outliers: Vec<bool>,
    /// Teleported points whose backward track returns to the seed anyway.
    pub consistent: Vec<bool>,
}

impl TrackCandidate {
    pub fn has_outlier(&self) -> bool {
        self.outliers.iter().any(|&o| o)
    }
}

/// Seed serving each frame: nearest by frame distance, ties to the lower
/// seed frame.
fn assign_seeds(frames: usize, seed_frames: &[usize]) -> Vec<usize> {
    (0..frames)
        .map(|k| {
            *seed_frames
                .iter()
                .min_by_key(|&&s| (s.abs_diff(k), s))
                .expect("at least one seed")
        })
        .collect()
}

/// Propagates seed labels through a view's frame sequence.
///
/// `sequence` holds the groundtruth landmarks for every frame; the stand-in
/// tracker follows the true motion with chained Gaussian error and drift,
/// teleports points at `outlier_rate`, and reports where a backward track
/// returns. Returns one candidate per frame; seed frames are returned
/// unchanged.
pub fn track_labels(
    sequence: &[Landmarks2D],
    seeds: &[(usize, Landmarks2D)],
    cfg: &TrackerConfig,
) -> Result<Vec<TrackCandidate>> {
    if seeds.is_empty() {
        return Err(MbwError::NoSeeds);
    }
    cfg.validate()?;
    let n = sequence.len();
    let p = sequence.first().map_or(0, Landmarks2D::len);
    for (s, w) in seeds {
        if *s >= n {
            return Err(MbwError::InvalidConfig(format!(
                "seed frame {s} outside a sequence of {n} frames"
            )));
        }
        if w.len() != p {
            return Err(MbwError::ShapeMismatch("seed and sequence point counts differ".into()));
        }
    }
    if sequence.iter().any(|w| !w.is_complete() || w.len() != p) {
        return Err(MbwError::IncompleteInput("tracker groundtruth must be complete".into()));
    }

    let seed_frames: Vec<usize> = seeds.iter().map(|(s, _)| *s).collect();
    let owner = assign_seeds(n, &seed_frames);
    let step_noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let drift = Vector2::new(cfg.drift_per_step, cfg.drift_per_step) / std::f64::consts::SQRT_2;

    let mut out: Vec<Option<TrackCandidate>> = vec![None; n];
    for (s, seed_pts) in seeds {
        let s = *s;
        if out[s].is_some() {
            continue;
        }
        // error of the seed itself relative to groundtruth
        let seed_err: Vec<Vector2<f64>> = (0..p)
            .map(|i| match seed_pts.point(i) {
                Some(q) => q - sequence[s].points()[i],
                None => Vector2::zeros(),
            })
            .collect();
        out[s] = Some(TrackCandidate {
            frame: s,
            seed_frame: s,
            path_len: 0,
            forward: seed_pts.clone(),
            backward: seed_pts.clone(),
            outliers: vec![false; p],
            consistent: vec![false; p],
        });
        for (dir, tag) in [(1isize, 0u64), (-1, 1)] {
            let mut rng = rng_for(cfg.seed, &[s as u64, tag]);
            let mut acc = vec![Vector2::zeros(); p];
            let mut k = s as isize + dir;
            let mut len = 1;
            while k >= 0 && (k as usize) < n && owner[k as usize] == s {
                let frame = k as usize;
                for a in acc.iter_mut() {
                    *a += Vector2::new(step_noise.sample(&mut rng), step_noise.sample(&mut rng)) + drift;
                }
                out[frame] = Some(step_candidate(
                    &sequence[frame],
                    seed_pts,
                    &seed_err,
                    &acc,
                    s,
                    frame,
                    len,
                    cfg,
                    drift,
                    &mut rng,
                ));
                k += dir;
                len += 1;
            }
        }
    }
    Ok(out.into_iter().map(|c| c.expect("every frame has a seed")).collect())
}

#[allow(clippy::too_many_arguments)]
fn step_candidate(
    gt: &Landmarks2D,
    seed_pts: &Landmarks2D,
    seed_err: &[Vector2<f64>],
    acc: &[Vector2<f64>],
    seed_frame: usize,
    frame: usize,
    len: usize,
    cfg: &TrackerConfig,
    drift: Vector2<f64>,
    rng: &mut ChaCha8Rng,
) -> TrackCandidate {
    let p = gt.len();
    let back_noise = Normal::new(0.0, cfg.noise_sigma * (len as f64).sqrt()).expect("validated sigma");
    let mut forward = Landmarks2D::all_missing(p);
    let mut backward = Landmarks2D::all_missing(p);
    let mut outliers = vec![false; p];
    let mut consistent = vec![false; p];
    for i in 0..p {
        let teleport = rng.random_bool(cfg.outlier_rate);
        let mut offset = Vector2::zeros();
        if teleport {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let [lo, hi] = cfg.outlier_offset;
            let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
            offset = Vector2::new(angle.cos(), angle.sin()) * r;
            consistent[i] = rng.random_bool(cfg.consistent_error_rate);
        }
        outliers[i] = teleport;
        let b = Vector2::new(back_noise.sample(rng), back_noise.sample(rng)) + drift * len as f64;
        let Some(seed_point) = seed_pts.point(i) else {
            continue;
        };
        forward.set_point(i, gt.points()[i] + (seed_err[i] + acc[i] + offset));
        let returned = if teleport && !consistent[i] {
            acc[i] + b + offset
        } else {
            acc[i] + b
        };
        backward.set_point(i, seed_point + returned);
    }
    TrackCandidate {
        frame,
        seed_frame,
        path_len: len,
        forward,
        backward,
        outliers,
        consistent,
    }
}

/// Per-point pass mask: a point passes when its round trip lands within
/// `epsilon` of the seed (inclusive). Missing points fail.
pub fn fb_consistency_check(returned: &Landmarks2D, seed: &Landmarks2D, epsilon: f64) -> Vec<bool> {
    (0..seed.len())
        .map(|i| match (returned.point(i), seed.point(i)) {
            (Some(a), Some(b)) => (a - b).norm() <= epsilon,
            _ => false,
        })
        .collect()
}
