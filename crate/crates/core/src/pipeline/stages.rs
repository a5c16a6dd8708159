use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{DetectorKind, DetectorLabels, Method, PipelineConfig};
use super::labels::{LabelEntry, LabelSet, LabelSource};
use crate::error::{MbwError, Result};
use crate::geometry::{project, tomasi_kanade, triangulate, Landmarks2D, Shape3D, WeakPerspectiveCamera};
use crate::perception::{detect, fb_consistency_check, track_labels, train_detector, DetectorModel, TrackerConfig};
use crate::prior::{train_prior, PriorModel, TrainConfig};
use crate::seed::{derive_seed, rng_for};
use crate::synth::{median, SynthDataset};

/// Axis-aligned box in image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }
}

/// Bounds of the present points, grown by `pad` on every side.
pub fn compute_bbox(preds: &Landmarks2D, pad: f64) -> Result<BBox> {
    let mut it = preds.present().map(|(_, p)| p);
    let first = it.next().ok_or(MbwError::AllMissing)?;
    let mut b = BBox {
        x_min: first.x,
        y_min: first.y,
        x_max: first.x,
        y_max: first.y,
    };
    for p in it {
        b.x_min = b.x_min.min(p.x);
        b.y_min = b.y_min.min(p.y);
        b.x_max = b.x_max.max(p.x);
        b.y_max = b.y_max.max(p.y);
    }
    Ok(BBox {
        x_min: b.x_min - pad,
        y_min: b.y_min - pad,
        x_max: b.x_max + pad,
        y_max: b.y_max + pad,
    })
}

/// Replaces a prediction with the reprojection of the reconstruction.
pub fn denoise_inliers(_raw: &Landmarks2D, shape: &Shape3D, cam: &WeakPerspectiveCamera) -> Landmarks2D {
    project(shape, cam)
}

/// Frame indices for the manual labels: `ceil(fraction * n)` of them,
/// evenly spaced from a seeded offset.
pub fn select_manual_frames(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let count = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if count < 2 || count > n {
        return Err(MbwError::TooFewFrames(format!(
            "a fraction of {fraction} of {n} frames selects {count}; need at least 2"
        )));
    }
    let step = n as f64 / count as f64;
    let offset = rng_for(seed, &[10]).random_range(0.0..step);
    Ok((0..count).map(|i| ((offset + i as f64 * step).floor() as usize).min(n - 1)).collect())
}

/// Manual labels copied from the groundtruth at evenly spaced frames, the
/// same frames in every view.
pub fn init_label_set(ds: &SynthDataset, fraction: f64, seed: u64) -> Result<LabelSet> {
    let mut s = LabelSet::new();
    for n in select_manual_frames(ds.frames(), fraction, seed)? {
        for v in 0..ds.views() {
            s.insert_manual(n, v, ds.gt_2d[n][v].clone());
        }
    }
    Ok(s)
}

/// Default outlier threshold: 5% of the median 2D diameter of the manual
/// labels.
pub fn default_tau(s0: &LabelSet) -> f64 {
    let mut d: Vec<f64> = s0
        .iter()
        .filter(|(_, e)| e.source == LabelSource::Manual)
        .map(|(_, e)| e.points.diameter())
        .collect();
    0.05 * median(&mut d)
}

/// Result of scoring one frame: per-view uncertainty, per-view denoised
/// landmarks, and the 3D reconstruction when the scorer produces one.
#[derive(Debug, Clone)]
pub struct FrameScore {
    pub scores: Vec<f64>,
    pub reprojections: Vec<Landmarks2D>,
    pub shape: Option<Shape3D>,
}

impl FrameScore {
    fn degenerate(views: &[Landmarks2D]) -> Self {
        Self {
            scores: vec![f64::INFINITY; views.len()],
            reprojections: views.to_vec(),
            shape: None,
        }
    }
}

/// The geometric check used to score candidate labels.
#[derive(Debug, Clone)]
pub enum Scorer<'a> {
    Prior(&'a PriorModel),
    Triangulation(&'a [Vec<WeakPerspectiveCamera>]),
    Tk { half_window: usize },
}

/// Scores every frame of `candidates` (frame -> complete views).
///
/// A frame whose reconstruction is degenerate gets infinite scores and
/// keeps its raw landmarks; if every frame is degenerate the error is
/// returned instead.
pub fn score_frames(
    scorer: &Scorer,
    candidates: &BTreeMap<usize, Vec<Landmarks2D>>,
) -> Result<BTreeMap<usize, FrameScore>> {
    let mut out = BTreeMap::new();
    let mut last_err = None;
    let mut degenerate = 0;
    match scorer {
        Scorer::Prior(model) => {
            let frames: Vec<Vec<Landmarks2D>> = candidates.values().cloned().collect();
            if frames.is_empty() {
                return Ok(out);
            }
            // batch for speed, fall back to single frames if one is degenerate
            match model.reconstruct_batch(&frames) {
                Ok(recs) => {
                    for ((&n, views), rec) in candidates.iter().zip(recs) {
                        let reprojections = (0..views.len()).map(|v| rec.reprojection(v)).collect();
                        out.insert(
                            n,
                            FrameScore {
                                scores: rec.scores,
                                reprojections,
                                shape: Some(rec.shape),
                            },
                        );
                    }
                }
                Err(MbwError::DegenerateConfiguration(_)) => {
                    for (&n, views) in candidates {
                        let fs = match model.reconstruct(views) {
                            Ok(rec) => FrameScore {
                                reprojections: (0..views.len()).map(|v| rec.reprojection(v)).collect(),
                                scores: rec.scores,
                                shape: Some(rec.shape),
                            },
                            Err(e @ MbwError::DegenerateConfiguration(_)) => {
                                degenerate += 1;
                                last_err = Some(e);
                                FrameScore::degenerate(views)
                            }
                            Err(e) => return Err(e),
                        };
                        out.insert(n, fs);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Scorer::Triangulation(cams) => {
            for (&n, views) in candidates {
                let pairs: Vec<(Landmarks2D, WeakPerspectiveCamera)> =
                    views.iter().cloned().zip(cams[n].iter().cloned()).collect();
                let fs = match triangulate(&pairs) {
                    Ok(shape) => {
                        let reprojections: Vec<Landmarks2D> = cams[n].iter().map(|c| project(&shape, c)).collect();
                        FrameScore {
                            scores: views.iter().zip(&reprojections).map(|(w, r)| w.frobenius_distance(r)).collect(),
                            reprojections,
                            shape: Some(shape),
                        }
                    }
                    Err(e @ MbwError::DegenerateConfiguration(_)) => {
                        degenerate += 1;
                        last_err = Some(e);
                        FrameScore::degenerate(views)
                    }
                    Err(e) => return Err(e),
                };
                out.insert(n, fs);
            }
        }
        Scorer::Tk { half_window } => {
            let keys: Vec<usize> = candidates.keys().copied().collect();
            for (&n, views) in candidates {
                // the 2h+1 nearest candidate frames, so gaps left by rejected
                // frames do not shrink the window
                let mut window = keys.clone();
                window.sort_by_key(|&k| (k.abs_diff(n), k));
                window.truncate(2 * half_window + 1);
                window.sort_unstable();
                let stacked: Vec<Vec<Landmarks2D>> = window.iter().map(|k| candidates[k].clone()).collect();
                let row = window.iter().position(|&k| k == n).expect("frame inside its window");
                let fs = match tomasi_kanade(&stacked) {
                    Ok(tk) => {
                        let reprojections: Vec<Landmarks2D> = (0..views.len()).map(|v| tk.reproject(row, v)).collect();
                        FrameScore {
                            scores: views.iter().zip(&reprojections).map(|(w, r)| w.frobenius_distance(r)).collect(),
                            reprojections,
                            shape: Some(tk.shape.clone()),
                        }
                    }
                    Err(e @ MbwError::DegenerateConfiguration(_)) => {
                        degenerate += 1;
                        last_err = Some(e);
                        FrameScore::degenerate(views)
                    }
                    Err(e) => return Err(e),
                };
                out.insert(n, fs);
            }
        }
    }
    if degenerate > 0 && degenerate == candidates.len() {
        return Err(last_err.expect("recorded with the count"));
    }
    Ok(out)
}

/// Per frame-view outcome of a scoring pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredView {
    pub frame: usize,
    pub view: usize,
    /// `None` when the reconstruction was degenerate.
    pub score: Option<f64>,
    pub inlier: bool,
}

fn finite(s: f64) -> Option<f64> {
    s.is_finite().then_some(s)
}

/// Keys whose score is at most `tau`.
pub fn select_inliers(scores: &BTreeMap<(usize, usize), f64>, tau: f64) -> Vec<(usize, usize)> {
    scores.iter().filter(|(_, &s)| s <= tau).map(|(&k, _)| k).collect()
}

/// Output of [`flow_stage`].
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub labels: LabelSet,
    /// Landmarks that survived the forward/backward check, per frame-view.
    pub candidates: BTreeMap<(usize, usize), Landmarks2D>,
    /// Frame-views whose candidate carries an injected tracking outlier.
    pub injected: BTreeMap<(usize, usize), bool>,
    pub scored: Vec<ScoredView>,
    pub frame_scores: BTreeMap<usize, FrameScore>,
    pub fb_rejected_points: usize,
}

/// Propagates the manual labels by tracking, drops points failing the
/// forward/backward check, scores frames whose views all survive, and adds
/// views scoring at most `tau` as flow labels.
pub fn flow_stage(ds: &SynthDataset, s0: &LabelSet, prior: &PriorModel, cfg: &PipelineConfig) -> Result<LabelSet> {
    let tau = cfg.tau.unwrap_or_else(|| default_tau(s0));
    Ok(flow_stage_with(ds, s0, &Scorer::Prior(prior), cfg, tau)?.labels)
}

/// [`flow_stage`] with an arbitrary scorer and explicit threshold.
pub fn flow_stage_with(
    ds: &SynthDataset,
    s0: &LabelSet,
    scorer: &Scorer,
    cfg: &PipelineConfig,
    tau: f64,
) -> Result<FlowOutcome> {
    let mut outcome = FlowOutcome {
        labels: s0.clone(),
        candidates: BTreeMap::new(),
        injected: BTreeMap::new(),
        scored: Vec::new(),
        frame_scores: BTreeMap::new(),
        fb_rejected_points: 0,
    };
    if !cfg.use_tracker {
        return Ok(outcome);
    }
    for v in 0..ds.views() {
        let seeds: Vec<(usize, Landmarks2D)> = s0
            .iter()
            .filter(|((_, view), e)| *view == v && e.source == LabelSource::Manual)
            .map(|(&(n, _), e)| (n, e.points.clone()))
            .collect();
        let tracker = TrackerConfig {
            seed: derive_seed(cfg.seed, &[20, cfg.tracker.seed, v as u64]),
            ..cfg.tracker.clone()
        };
        let cands = track_labels(&ds.view_sequence(v), &seeds, &tracker)?;
        for c in cands {
            let seed = &s0.get(c.seed_frame, v).expect("seed frame is labeled").points;
            let eps = cfg.fb_epsilon.unwrap_or_else(|| tracker.default_fb_epsilon(c.path_len));
            let pass = fb_consistency_check(&c.backward, seed, eps);
            let mut w = c.forward.clone();
            for (i, ok) in pass.iter().enumerate() {
                if !ok && !w.is_missing(i) {
                    w.set_missing(i);
                    outcome.fb_rejected_points += 1;
                }
            }
            outcome.injected.insert((c.frame, v), c.has_outlier());
            outcome.candidates.insert((c.frame, v), w);
        }
    }

    let views = ds.views();
    let frames: BTreeMap<usize, Vec<Landmarks2D>> = (0..ds.frames())
        .filter_map(|n| {
            let vs: Option<Vec<Landmarks2D>> = (0..views)
                .map(|v| outcome.candidates.get(&(n, v)).filter(|w| w.is_complete()).cloned())
                .collect();
            vs.map(|vs| (n, vs))
        })
        .collect();
    let scored = score_frames(scorer, &frames)?;
    for (&n, fs) in &scored {
        for v in 0..views {
            let s = fs.scores[v];
            let inlier = s <= tau;
            outcome.scored.push(ScoredView {
                frame: n,
                view: v,
                score: finite(s),
                inlier,
            });
            if inlier && !s0.is_manual(n, v) {
                outcome.labels.insert_pseudo(
                    n,
                    v,
                    LabelEntry {
                        points: frames[&n][v].clone(),
                        source: LabelSource::Flow,
                        denoised: false,
                        score: Some(s),
                    },
                )?;
            }
        }
    }
    outcome.frame_scores = scored;
    Ok(outcome)
}

/// Everything one self-training iteration produces.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub iteration: usize,
    pub labels: LabelSet,
    pub detector: Option<DetectorModel>,
    pub prior: Option<PriorModel>,
    pub loss_trace: Vec<f64>,
    /// Raw predictions `[frame][view]`.
    pub detections: Vec<Vec<Landmarks2D>>,
    pub frame_scores: BTreeMap<usize, FrameScore>,
    pub scored: Vec<ScoredView>,
}

impl IterationOutcome {
    pub fn inlier_count(&self) -> usize {
        self.scored.iter().filter(|s| s.inlier).count()
    }

    pub fn mean_score(&self) -> Option<f64> {
        let s: Vec<f64> = self.scored.iter().filter_map(|s| s.score).collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }
}

/// Prior training settings for iteration `t`, warm-started after the first.
fn prior_config(cfg: &PipelineConfig, t: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, &[30, cfg.prior.seed]),
        steps: if t <= 1 { cfg.prior.steps } else { cfg.prior_retrain_steps },
        ..cfg.prior.clone()
    }
}

/// Trains the initial prior on the manual labels.
pub fn train_initial_prior(s0: &LabelSet, cfg: &PipelineConfig) -> Result<(PriorModel, Vec<f64>)> {
    train_prior(s0, &prior_config(cfg, 0), None)
}

/// One round of retraining, prediction, scoring and label-set update.
///
/// The prior (for [`Method::Mbw`]) and the detector are trained on
/// `s_prev`; the detector is run on every frame-view; every frame is scored;
/// the new label set is the manual labels plus every other frame-view with
/// score at most `tau`, stored as its denoised reprojection.
#[allow(clippy::too_many_arguments)]
pub fn self_train_iteration(
    t: usize,
    s_prev: &LabelSet,
    ds: &SynthDataset,
    cfg: &PipelineConfig,
    method: Method,
    tau: f64,
    prev_prior: Option<&PriorModel>,
) -> Result<IterationOutcome> {
    for v in 0..ds.views() {
        if s_prev.count_in_view(v) == 0 {
            return Err(MbwError::InsufficientLabels(format!("no labels in view {v}")));
        }
    }
    let (prior, loss_trace) = match method {
        Method::Mbw => {
            let (g, trace) = train_prior(s_prev, &prior_config(cfg, t), prev_prior)?;
            (Some(g), trace)
        }
        _ => (None, Vec::new()),
    };

    let (detector, detections) = match cfg.detector {
        DetectorKind::Ridge => {
            let f = train_detector(s_prev, &ds.descriptors, cfg.ridge_lambda)?;
            let det = ds
                .descriptors
                .iter()
                .enumerate()
                .map(|(n, views)| {
                    views
                        .iter()
                        .enumerate()
                        .map(|(v, d)| Ok(ds.detector_field.perturb(n, v, &ds.gt_2d[n][v], &detect(&f, d)?)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(f), det)
        }
        DetectorKind::Oracle => (None, ds.gt_2d.clone()),
    };

    let frames: BTreeMap<usize, Vec<Landmarks2D>> = detections.iter().cloned().enumerate().collect();
    let scorer = match (method, prior.as_ref()) {
        (Method::Mbw, Some(g)) => Scorer::Prior(g),
        (Method::Triangulation, _) => Scorer::Triangulation(&ds.gt_cams),
        _ => Scorer::Tk {
            half_window: cfg.tk_half_window,
        },
    };
    let frame_scores = score_frames(&scorer, &frames)?;

    let mut labels = s_prev.manual_only();
    let mut scored = Vec::new();
    for (&n, fs) in &frame_scores {
        for v in 0..ds.views() {
            let s = fs.scores[v];
            let inlier = s <= tau;
            scored.push(ScoredView {
                frame: n,
                view: v,
                score: finite(s),
                inlier,
            });
            if inlier && !labels.is_manual(n, v) {
                let (points, denoised) = match cfg.detector_labels {
                    DetectorLabels::Denoised => (fs.reprojections[v].clone(), true),
                    DetectorLabels::Raw => (detections[n][v].clone(), false),
                };
                labels.insert_pseudo(
                    n,
                    v,
                    LabelEntry {
                        points,
                        source: LabelSource::Detector,
                        denoised,
                        score: Some(s),
                    },
                )?;
            }
        }
    }
    Ok(IterationOutcome {
        iteration: t,
        labels,
        detector,
        prior,
        loss_trace,
        detections,
        frame_scores,
        scored,
    })
}
