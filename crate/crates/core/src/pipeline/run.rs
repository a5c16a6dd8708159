use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Method, PipelineConfig};
use super::labels::{LabelSet, LabelSource};
use super::stages::{
    compute_bbox, default_tau, flow_stage_with, init_label_set, self_train_iteration, train_initial_prior, BBox,
    FrameScore, IterationOutcome, Scorer, ScoredView,
};
use crate::error::{MbwError, Result};
use crate::geometry::{Landmarks2D, Shape3D};
use crate::metrics::{default_grid, pa_mpjpe_sequence, pck_auc_pooled, pr_auc, ReportRow};
use crate::prior::PriorModel;
use crate::synth::SynthDataset;

/// Final annotation for one frame-view.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Manual annotation; all points missing where the frame was not
    /// hand-labeled.
    pub w_gt: Landmarks2D,
    pub w_predictions: Landmarks2D,
    pub s_pred: Option<Shape3D>,
    pub bbox: Option<BBox>,
    pub confidence: bool,
}

/// Summary of one stage for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub iteration: usize,
    pub loss_trace: Vec<f64>,
    pub label_count: usize,
    pub inlier_count: usize,
    pub mean_score: Option<f64>,
    /// Scores ordered by `(frame, view)`; `None` where degenerate.
    pub scores: Vec<ScoredView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub frames: usize,
    pub views: usize,
    pub joints: usize,
    pub seed: u64,
}

/// Run metadata written next to the annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub tau: Option<f64>,
    pub manual_frames: Vec<usize>,
    pub fb_rejected_points: usize,
    pub stages: Vec<StageRecord>,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

impl Manifest {
    /// JSON with the wall time zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Manifest {
        Manifest {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Everything a successful run returns.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `[frame][view]`.
    pub records: Vec<Vec<FrameRecord>>,
    pub manifest: Manifest,
    pub report: Vec<ReportRow>,
    /// Label set after the flow stage and after each iteration.
    pub label_sets: Vec<LabelSet>,
    pub iterations: Vec<IterationOutcome>,
    pub final_prior: Option<PriorModel>,
}

/// A failed run: the stage-tagged error and the manifest up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: MbwError,
    pub manifest: Manifest,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Full bootstrapping run: initialize, train the prior, propagate labels
/// once, then `cfg.iterations` rounds of self-training.
pub fn run_pipeline(ds: &SynthDataset, cfg: &PipelineConfig) -> Result<RunOutput, Box<RunFailure>> {
    run_method(ds, cfg, Method::Mbw)
}

/// The same loop with triangulation under the groundtruth cameras in place
/// of the shape prior.
pub fn run_baseline_triangulation(ds: &SynthDataset, cfg: &PipelineConfig) -> Result<RunOutput, Box<RunFailure>> {
    run_method(ds, cfg, Method::Triangulation)
}

/// The same loop with sliding-window rigid factorization in place of the
/// shape prior.
pub fn run_baseline_tk(ds: &SynthDataset, cfg: &PipelineConfig) -> Result<RunOutput, Box<RunFailure>> {
    run_method(ds, cfg, Method::Tk)
}

pub fn run_method(ds: &SynthDataset, cfg: &PipelineConfig, method: Method) -> Result<RunOutput, Box<RunFailure>> {
    let start = Instant::now();
    let mut manifest = Manifest {
        method,
        config: cfg.clone(),
        dataset: DatasetSummary {
            frames: ds.frames(),
            views: ds.views(),
            joints: ds.joints(),
            seed: ds.config.seed,
        },
        tau: None,
        manual_frames: Vec::new(),
        fb_rejected_points: 0,
        stages: Vec::new(),
        error: None,
        wall_time_secs: 0.0,
    };
    match run_stages(ds, cfg, method, &mut manifest) {
        Ok(mut out) => {
            manifest.wall_time_secs = start.elapsed().as_secs_f64();
            out.manifest = manifest;
            Ok(out)
        }
        Err(error) => {
            manifest.error = Some(error.to_string());
            manifest.wall_time_secs = start.elapsed().as_secs_f64();
            Err(Box::new(RunFailure { error, manifest }))
        }
    }
}

fn stage_record(stage: &str, iteration: usize, labels: &LabelSet, scored: &[ScoredView], loss: Vec<f64>) -> StageRecord {
    let finite: Vec<f64> = scored.iter().filter_map(|s| s.score).collect();
    StageRecord {
        stage: stage.into(),
        iteration,
        loss_trace: loss,
        label_count: labels.len(),
        inlier_count: scored.iter().filter(|s| s.inlier).count(),
        mean_score: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        scores: scored.to_vec(),
    }
}

fn run_stages(ds: &SynthDataset, cfg: &PipelineConfig, method: Method, manifest: &mut Manifest) -> Result<RunOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let s0 = init_label_set(ds, cfg.label_fraction, cfg.seed).map_err(|e| e.in_stage("init"))?;
    let mut manual: Vec<usize> = s0.iter().map(|(&(n, _), _)| n).collect();
    manual.dedup();
    manifest.manual_frames = manual;
    let tau = cfg.tau.unwrap_or_else(|| default_tau(&s0));
    manifest.tau = Some(tau);

    let (prior0, loss0) = match method {
        Method::Mbw => {
            let (g, trace) = train_initial_prior(&s0, cfg).map_err(|e| e.in_stage("prior"))?;
            (Some(g), trace)
        }
        _ => (None, Vec::new()),
    };
    let scorer = match (method, prior0.as_ref()) {
        (Method::Mbw, Some(g)) => Scorer::Prior(g),
        (Method::Triangulation, _) => Scorer::Triangulation(&ds.gt_cams),
        _ => Scorer::Tk {
            half_window: cfg.tk_half_window,
        },
    };
    let flow = flow_stage_with(ds, &s0, &scorer, cfg, tau).map_err(|e| e.in_stage("flow"))?;
    manifest.fb_rejected_points = flow.fb_rejected_points;
    manifest
        .stages
        .push(stage_record("flow", 0, &flow.labels, &flow.scored, loss0));

    let mut label_sets = vec![flow.labels.clone()];
    let mut iterations: Vec<IterationOutcome> = Vec::new();
    let mut prior = prior0;
    for t in 1..=cfg.iterations {
        let prev = label_sets.last().expect("flow labels");
        let it = self_train_iteration(t, prev, ds, cfg, method, tau, prior.as_ref())
            .map_err(|e| e.in_stage(format!("iteration {t}")))?;
        manifest.stages.push(stage_record(
            "self_train",
            t,
            &it.labels,
            &it.scored,
            it.loss_trace.clone(),
        ));
        if it.prior.is_some() {
            prior = it.prior.clone();
        }
        label_sets.push(it.labels.clone());
        iterations.push(it);
    }

    let records = match iterations.last() {
        Some(last) => final_records(ds, &s0, last.labels.clone(), &last.detections, &last.frame_scores, &last.scored, 0.0),
        None => {
            let detections: Vec<Vec<Landmarks2D>> = (0..ds.frames())
                .map(|_| vec![Landmarks2D::all_missing(ds.joints()); ds.views()])
                .collect();
            final_records(ds, &s0, flow.labels.clone(), &detections, &flow.frame_scores, &flow.scored, cfg.bbox_pad)
        }
    };
    let report = evaluate(ds, &flow.labels, &flow.frame_scores, &iterations, &records)
        .map_err(|e| e.in_stage("evaluate"))?;
    Ok(RunOutput {
        records,
        manifest: manifest.clone(),
        report,
        label_sets,
        iterations,
        final_prior: prior,
    })
}

fn final_records(
    ds: &SynthDataset,
    s0: &LabelSet,
    labels: LabelSet,
    detections: &[Vec<Landmarks2D>],
    frame_scores: &BTreeMap<usize, FrameScore>,
    scored: &[ScoredView],
    pad: f64,
) -> Vec<Vec<FrameRecord>> {
    let score_of: BTreeMap<(usize, usize), bool> = scored.iter().map(|s| ((s.frame, s.view), s.inlier)).collect();
    (0..ds.frames())
        .map(|n| {
            (0..ds.views())
                .map(|v| {
                    let w_gt = s0
                        .get(n, v)
                        .map(|e| e.points.clone())
                        .unwrap_or_else(|| Landmarks2D::all_missing(ds.joints()));
                    let w_predictions = labels
                        .get(n, v)
                        .map(|e| e.points.clone())
                        .unwrap_or_else(|| detections[n][v].clone());
                    let bbox = compute_bbox(&w_predictions, pad).ok();
                    FrameRecord {
                        w_gt,
                        w_predictions,
                        s_pred: frame_scores.get(&n).and_then(|f| f.shape.clone()),
                        bbox,
                        confidence: score_of.get(&(n, v)).copied().unwrap_or(false),
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean per-point error of the machine labels against groundtruth.
pub fn label_error_2d(ds: &SynthDataset, labels: &LabelSet) -> Option<f64> {
    let errs: Vec<f64> = labels
        .iter()
        .filter(|(_, e)| e.source != LabelSource::Manual)
        .map(|(&(n, v), e)| e.points.mean_point_distance(&ds.gt_2d[n][v]))
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

/// PA-MPJPE over the frames that have a reconstruction.
pub fn reconstruction_error(ds: &SynthDataset, frame_scores: &BTreeMap<usize, FrameScore>) -> Result<Option<f64>> {
    let (preds, gts): (Vec<Shape3D>, Vec<Shape3D>) = frame_scores
        .iter()
        .filter_map(|(&n, f)| f.shape.clone().map(|s| (s, ds.gt_shapes[n].clone())))
        .unzip();
    if preds.is_empty() {
        return Ok(None);
    }
    pa_mpjpe_sequence(&preds, &gts).map(Some)
}

fn evaluate(
    ds: &SynthDataset,
    flow_labels: &LabelSet,
    flow_scores: &BTreeMap<usize, FrameScore>,
    iterations: &[IterationOutcome],
    records: &[Vec<FrameRecord>],
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let grid = default_grid();
    rows.push(ReportRow::new("label_count", 0, None, flow_labels.len() as f64));
    if let Some(e) = label_error_2d(ds, flow_labels) {
        rows.push(ReportRow::new("label_error_2d", 0, None, e));
    }
    if let Some(e) = reconstruction_error(ds, flow_scores)? {
        rows.push(ReportRow::new("pa_mpjpe", 0, None, e));
    }
    for it in iterations {
        let t = it.iteration;
        rows.push(ReportRow::new("label_count", t, None, it.labels.len() as f64));
        rows.push(ReportRow::new("inliers", t, None, it.inlier_count() as f64));
        if let Some(e) = label_error_2d(ds, &it.labels) {
            rows.push(ReportRow::new("label_error_2d", t, None, e));
        }
        if let Some(e) = reconstruction_error(ds, &it.frame_scores)? {
            rows.push(ReportRow::new("pa_mpjpe", t, None, e));
        }
        for v in 0..ds.views() {
            let pairs: Vec<(&Landmarks2D, &Landmarks2D)> =
                (0..ds.frames()).map(|n| (&it.detections[n][v], &ds.gt_2d[n][v])).collect();
            rows.push(ReportRow::new("detector_pck_auc", t, Some(v), pck_auc_pooled(&pairs, &ds.skeleton, &grid)?));
            let (scores, truth): (Vec<f64>, Vec<bool>) = it
                .scored
                .iter()
                .filter(|s| s.view == v)
                .map(|s| (s.score.unwrap_or(f64::INFINITY), ds.detector_field.has_outlier(s.frame, v)))
                .unzip();
            if truth.iter().any(|&b| b) {
                rows.push(ReportRow::new("pr_auc", t, Some(v), pr_auc(&scores, &truth)?));
            }
        }
    }
    let final_iter = iterations.last().map_or(0, |i| i.iteration);
    for v in 0..ds.views() {
        let pairs: Vec<(&Landmarks2D, &Landmarks2D)> = (0..ds.frames())
            .filter(|&n| records[n][v].w_predictions.present_count() > 0)
            .map(|n| (&records[n][v].w_predictions, &ds.gt_2d[n][v]))
            .collect();
        if !pairs.is_empty() {
            rows.push(ReportRow::new("pck_auc", final_iter, Some(v), pck_auc_pooled(&pairs, &ds.skeleton, &grid)?));
        }
    }
    let all: Vec<(&Landmarks2D, &Landmarks2D)> = (0..ds.frames())
        .flat_map(|n| (0..ds.views()).map(move |v| (n, v)))
        .filter(|&(n, v)| records[n][v].w_predictions.present_count() > 0)
        .map(|(n, v)| (&records[n][v].w_predictions, &ds.gt_2d[n][v]))
        .collect();
    if !all.is_empty() {
        rows.push(ReportRow::new("pck_auc", final_iter, None, pck_auc_pooled(&all, &ds.skeleton, &grid)?));
    }
    Ok(rows)
}
