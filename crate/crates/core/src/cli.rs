//! Command-line front end: `synth`, `run`, `eval` and `report`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{MbwError, Result};
use crate::geometry::Landmarks2D;
use crate::io::{group_by_frame, load_annotations, load_json, save_annotations, save_json, write_atomic};
use crate::metrics::{
    default_grid, pa_mpjpe_sequence, pck_auc_pooled, pck_curve, pckh_pooled, pr_curve, write_report, ReportRow,
    SkeletonDef,
};
use crate::pipeline::{compute_bbox, run_method, FrameRecord, Manifest, Method, PipelineConfig};
use crate::synth::{generate, SynthConfig, SynthDataset};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for failures while running a valid command.
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "MBW_SEED";

pub const DATASET_FILE: &str = "dataset.json";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.csv";
pub const PRIOR_FILE: &str = "prior.bin";

#[derive(Debug, Parser)]
#[command(name = "mbw", version, about = "Bootstrap sparse 2D landmark labels across views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    None,
    Triangulation,
    Tk,
}

impl Baseline {
    fn method(self) -> Method {
        match self {
            Baseline::None => Method::Mbw,
            Baseline::Triangulation => Method::Triangulation,
            Baseline::Tk => Method::Tk,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its groundtruth annotations.
    Synth {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        /// Falls back to MBW_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the bootstrapping pipeline or one of its baselines.
    Run {
        /// Dataset written by `synth`; a fresh one is generated when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Views of the generated dataset.
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(long, default_value_t = 0.02)]
        label_fraction: f64,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        /// Outlier threshold in pixels; derived from the manual labels when absent.
        #[arg(long)]
        tau: Option<f64>,
        /// Falls back to MBW_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Baseline::None)]
        baseline: Baseline,
    },
    /// Score predicted annotations against groundtruth annotations.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2)]
        views: usize,
        /// Report destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot data (PCK curves, PR curves, loss traces) for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the dataset file inside the run directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Curve destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), executes the command and
/// returns the process exit status.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let seed_flag = match &cli.command {
        Command::Synth { seed, .. } | Command::Run { seed, .. } => *seed,
        _ => None,
    };
    let seed = match resolve_seed(seed_flag) {
        Ok(s) => s,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    match execute(cli.command, seed, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV}={text:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

fn execute(command: Command, seed: u64, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth { out, views, frames, .. } => {
            let cfg = SynthConfig {
                views,
                frames,
                seed,
                ..SynthConfig::default()
            };
            let ds = generate(&cfg)?;
            ensure_dir(&out)?;
            save_json(&ds, &out.join(DATASET_FILE))?;
            save_annotations(&groundtruth_records(&ds)?, &out.join(GROUNDTRUTH_FILE))
        }
        Command::Run {
            dataset,
            out,
            views,
            label_fraction,
            iterations,
            tau,
            baseline,
            ..
        } => {
            ensure_dir(&out)?;
            let ds = match dataset {
                Some(path) => load_json::<SynthDataset>(&path)?,
                None => {
                    let ds = generate(&SynthConfig {
                        views,
                        seed,
                        ..SynthConfig::default()
                    })?;
                    save_json(&ds, &out.join(DATASET_FILE))?;
                    ds
                }
            };
            let cfg = PipelineConfig {
                tau,
                iterations,
                label_fraction,
                seed,
                ..PipelineConfig::default()
            };
            match run_method(&ds, &cfg, baseline.method()) {
                Ok(run) => {
                    let flat: Vec<FrameRecord> = run.records.into_iter().flatten().collect();
                    save_annotations(&flat, &out.join(ANNOTATIONS_FILE))?;
                    save_json(&run.manifest, &out.join(MANIFEST_FILE))?;
                    write_report(&run.report, &out.join(REPORT_FILE))?;
                    if let Some(prior) = &run.final_prior {
                        prior.save(&out.join(PRIOR_FILE))?;
                    }
                    Ok(())
                }
                Err(failure) => {
                    save_json(&failure.manifest, &out.join(MANIFEST_FILE))?;
                    Err(failure.error)
                }
            }
        }
        Command::Eval { pred, gt, views, out } => {
            let pred = group_by_frame(load_annotations(&pred)?, views)?;
            let gt = group_by_frame(load_annotations(&gt)?, views)?;
            let rows = evaluate_annotations(&pred, &gt)?;
            match out {
                Some(path) => write_report(&rows, &path),
                None => {
                    let text = crate::metrics::render_report(&rows)?;
                    stdout.write_all(&text).map_err(|e| MbwError::io("<stdout>", e))
                }
            }
        }
        Command::Report { run, dataset, out } => {
            let ds: SynthDataset = load_json(&dataset.unwrap_or_else(|| run.join(DATASET_FILE)))?;
            let manifest: Manifest = load_json(&run.join(MANIFEST_FILE))?;
            let records = group_by_frame(load_annotations(&run.join(ANNOTATIONS_FILE))?, ds.views())?;
            let text = render_curves(&curve_rows(&ds, &manifest, &records)?)?;
            match out {
                Some(path) => write_atomic(&path, &text),
                None => stdout.write_all(&text).map_err(|e| MbwError::io("<stdout>", e)),
            }
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MbwError::io(dir, e))
}

/// Annotation records holding the groundtruth of every frame-view.
pub fn groundtruth_records(ds: &SynthDataset) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::with_capacity(ds.frames() * ds.views());
    for (n, views) in ds.gt_2d.iter().enumerate() {
        for w in views {
            out.push(FrameRecord {
                w_gt: w.clone(),
                w_predictions: w.clone(),
                s_pred: Some(ds.gt_shapes[n].clone()),
                bbox: Some(compute_bbox(w, 0.0)?),
                confidence: true,
            });
        }
    }
    Ok(out)
}

/// Skeleton assumed for annotation files, which carry no joint names.
pub fn skeleton_for(joints: usize) -> SkeletonDef {
    if joints == 12 {
        SkeletonDef::human12()
    } else {
        SkeletonDef::chain(joints)
    }
}

/// PCK AUC (per view and pooled), PCKh@0.5 and PA-MPJPE of `pred` against
/// the predictions stored in `gt`. Frames are `[frame][view]`.
pub fn evaluate_annotations(pred: &[Vec<FrameRecord>], gt: &[Vec<FrameRecord>]) -> Result<Vec<ReportRow>> {
    if pred.len() != gt.len() || pred.iter().zip(gt).any(|(a, b)| a.len() != b.len()) {
        return Err(MbwError::ShapeMismatch("prediction and groundtruth files differ in size".into()));
    }
    let Some(first) = gt.first().and_then(|f| f.first()) else {
        return Err(MbwError::ShapeMismatch("annotation files are empty".into()));
    };
    let skeleton = skeleton_for(first.w_predictions.len());
    let grid = default_grid();
    let views = gt[0].len();
    let pairs = |view: Option<usize>| -> Vec<(&Landmarks2D, &Landmarks2D)> {
        pred.iter()
            .zip(gt)
            .flat_map(|(p, g)| p.iter().zip(g).enumerate())
            .filter(|(v, (p, _))| view.is_none_or(|want| want == *v) && p.w_predictions.present_count() > 0)
            .map(|(_, (p, g))| (&p.w_predictions, &g.w_predictions))
            .collect()
    };
    let mut rows = Vec::new();
    for v in 0..views {
        let pv = pairs(Some(v));
        if !pv.is_empty() {
            rows.push(ReportRow::new("pck_auc", 0, Some(v), pck_auc_pooled(&pv, &skeleton, &grid)?));
        }
    }
    let all = pairs(None);
    if !all.is_empty() {
        rows.push(ReportRow::new("pck_auc", 0, None, pck_auc_pooled(&all, &skeleton, &grid)?));
        rows.push(ReportRow::new("pckh_0.5", 0, None, pckh_pooled(&all, &skeleton, 0.5)?));
    }
    let (shapes, truth): (Vec<_>, Vec<_>) = pred
        .iter()
        .zip(gt)
        .filter_map(|(p, g)| Some((p.first()?.s_pred.clone()?, g.first()?.s_pred.clone()?)))
        .unzip();
    if !shapes.is_empty() {
        rows.push(ReportRow::new("pa_mpjpe", 0, None, pa_mpjpe_sequence(&shapes, &truth)?));
    }
    Ok(rows)
}

/// One point of a plotted curve.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurveRow {
    pub curve: String,
    pub iteration: usize,
    pub view: Option<usize>,
    pub x: f64,
    pub y: f64,
}

/// PCKh-vs-threshold of the final annotations, per-iteration PR curves of
/// the detector outlier scores, and every stage's loss trace.
pub fn curve_rows(ds: &SynthDataset, manifest: &Manifest, records: &[Vec<FrameRecord>]) -> Result<Vec<CurveRow>> {
    if records.len() != ds.frames() {
        return Err(MbwError::ShapeMismatch("annotations do not match the dataset".into()));
    }
    let grid = default_grid();
    let final_iter = manifest.stages.last().map_or(0, |s| s.iteration);
    let mut rows = Vec::new();
    let pairs: Vec<(&Landmarks2D, &Landmarks2D)> = records
        .iter()
        .enumerate()
        .flat_map(|(n, views)| views.iter().enumerate().map(move |(v, r)| (n, v, r)))
        .filter(|(_, _, r)| r.w_predictions.present_count() > 0)
        .map(|(n, v, r)| (&r.w_predictions, &ds.gt_2d[n][v]))
        .collect();
    if !pairs.is_empty() {
        for (x, y) in grid.iter().zip(pck_curve(&pairs, &ds.skeleton, &grid)?) {
            rows.push(CurveRow {
                curve: "pckh".into(),
                iteration: final_iter,
                view: None,
                x: *x,
                y,
            });
        }
    }
    for stage in manifest.stages.iter().filter(|s| s.stage == "self_train") {
        for v in 0..ds.views() {
            let (scores, truth): (Vec<f64>, Vec<bool>) = stage
                .scores
                .iter()
                .filter(|s| s.view == v)
                .map(|s| (s.score.unwrap_or(f64::INFINITY), ds.detector_field.has_outlier(s.frame, v)))
                .unzip();
            if !truth.iter().any(|&t| t) {
                continue;
            }
            for (recall, precision) in pr_curve(&scores, &truth)? {
                rows.push(CurveRow {
                    curve: "pr".into(),
                    iteration: stage.iteration,
                    view: Some(v),
                    x: recall,
                    y: precision,
                });
            }
        }
    }
    for stage in &manifest.stages {
        for (step, loss) in stage.loss_trace.iter().enumerate() {
            rows.push(CurveRow {
                curve: "loss".into(),
                iteration: stage.iteration,
                view: None,
                x: step as f64,
                y: *loss,
            });
        }
    }
    Ok(rows)
}

/// Renders curve points as `curve,iteration,view,x,y` text.
pub fn render_curves(rows: &[CurveRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| MbwError::InvalidConfig(e.to_string()))?;
    }
    w.into_inner().map_err(|e| MbwError::io("<curves>", e.into_error()))
}
