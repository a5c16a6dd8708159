//! Seeded invariant checks shared by the property suite and the acceptance
//! run. Each check draws its instance from `seed` and reports a violation as
//! an error message.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mbw::geometry::{
    procrustes_align, project, rotation_from_axis_angle, solve_onp, tomasi_kanade, triangulate, Landmarks2D, Shape3D,
    SimilarityTransform, WeakPerspectiveCamera,
};
use mbw::io::{parse_annotations, render_annotations};
use mbw::metrics::{default_grid, pa_mpjpe, pck_auc, pckh, pr_auc, SkeletonDef};
use mbw::perception::{
    fb_consistency_check, fit_ridge, make_descriptor, ridge_objective, track_labels, DetectorModel, TrackerConfig,
};
use mbw::pipeline::{run_pipeline, select_inliers, FrameRecord, LabelSource, PipelineConfig, RunOutput};
use mbw::prior::{gradient_check, train_prior_on_frames, Activation, PriorModel, TrainConfig};
use mbw::synth::{generate, subspace_residual, SynthConfig};
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = fn(u64) -> Result<(), String>;

/// Every invariant, by name.
pub const INVARIANTS: &[(&str, Check)] = &[
    ("project_linear_in_scale_and_rotation", project_linear_in_scale_and_rotation),
    ("onp_inverts_projection", onp_inverts_projection),
    ("procrustes_residual_similarity_invariant", procrustes_residual_similarity_invariant),
    ("triangulation_inverts_projection", triangulation_inverts_projection),
    ("factorization_reprojections_rank_three", factorization_reprojections_rank_three),
    ("geometry_deterministic", geometry_deterministic),
    ("score_obeys_triangle_inequality", score_obeys_triangle_inequality),
    ("encode_translation_invariant", encode_translation_invariant),
    ("decoded_shape_centered", decoded_shape_centered),
    ("prior_training_reproducible", prior_training_reproducible),
    ("unseen_poses_score_higher", unseen_poses_score_higher),
    ("gradient_matches_finite_differences", gradient_matches_finite_differences),
    ("noiseless_tracking_is_identity", noiseless_tracking_is_identity),
    ("fb_check_monotone_in_epsilon", fb_check_monotone_in_epsilon),
    ("ridge_beats_zero_weights", ridge_beats_zero_weights),
    ("perception_seeded", perception_seeded),
    ("manual_labels_immutable", manual_labels_immutable),
    ("inliers_monotone_in_tau", inliers_monotone_in_tau),
    ("confidence_matches_threshold", confidence_matches_threshold),
    ("full_run_deterministic", full_run_deterministic),
    ("pckh_monotone_in_threshold", pckh_monotone_in_threshold),
    ("pck_auc_bounded", pck_auc_bounded),
    ("pa_mpjpe_similarity_invariant", pa_mpjpe_similarity_invariant),
    ("pr_auc_monotone_invariant", pr_auc_monotone_invariant),
    ("synth_projection_exact", synth_projection_exact),
    ("synth_deterministic", synth_deterministic),
    ("synth_in_subspace", synth_in_subspace),
    ("annotation_round_trip", annotation_round_trip),
];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    rotation_from_axis_angle(&Vector3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    ))
}

pub fn random_shape(rng: &mut ChaCha8Rng, p: usize) -> Shape3D {
    Shape3D::new(
        (0..p)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect(),
    )
}

pub fn random_camera(rng: &mut ChaCha8Rng) -> WeakPerspectiveCamera {
    WeakPerspectiveCamera {
        rotation: random_rotation(rng),
        scale: rng.random_range(0.5..200.0),
        translation: Vector2::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0)),
    }
}

pub fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    SimilarityTransform {
        rotation: random_rotation(rng),
        scale: rng.random_range(0.1..10.0),
        translation: Vector3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        ),
    }
}

fn random_view(rng: &mut ChaCha8Rng, p: usize) -> Landmarks2D {
    Landmarks2D::new(
        (0..p)
            .map(|_| Vector2::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)))
            .collect(),
    )
}

fn jitter(w: &Landmarks2D, rng: &mut ChaCha8Rng, sigma: f64) -> Landmarks2D {
    Landmarks2D::new(
        w.points()
            .iter()
            .map(|p| p + Vector2::new(rng.random_range(-sigma..sigma), rng.random_range(-sigma..sigma)))
            .collect(),
    )
}

/// Largest point distance between two shapes over the norm of `reference`.
pub fn shape_rel_error(a: &Shape3D, reference: &Shape3D) -> f64 {
    let scale = reference.points.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt().max(1.0);
    a.points
        .iter()
        .zip(&reference.points)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

fn view_rel_error(a: &Landmarks2D, reference: &Landmarks2D) -> f64 {
    let scale = reference.points().iter().map(|p| p.norm_squared()).sum::<f64>().sqrt().max(1.0);
    a.points()
        .iter()
        .zip(reference.points())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Three cameras with distinct optical axes, so every point is triangulable.
pub fn generic_cameras(rng: &mut ChaCha8Rng, count: usize) -> Vec<WeakPerspectiveCamera> {
    loop {
        let cams: Vec<WeakPerspectiveCamera> = (0..count).map(|_| random_camera(rng)).collect();
        let axes: Vec<Vector3<f64>> = cams.iter().map(|c| c.rotation.row(2).transpose()).collect();
        let separated = (0..count).all(|i| (i + 1..count).all(|j| axes[i].dot(&axes[j]).abs() < 20f64.to_radians().cos()));
        if separated {
            return cams;
        }
    }
}

// geometry

pub fn project_linear_in_scale_and_rotation(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 8);
    let cam = random_camera(&mut r);
    let k = r.random_range(0.1..5.0);
    let scaled = WeakPerspectiveCamera { scale: cam.scale * k, ..cam.clone() };
    let base = project(&shape, &cam);
    let big = project(&shape, &scaled);
    for (b, s) in base.points().iter().zip(big.points()) {
        let expect = cam.translation + (b - cam.translation) * k;
        ensure((s - expect).norm() <= 1e-9 * expect.norm().max(1.0), || format!("scale linearity off by {}", (s - expect).norm()))?;
    }
    let r1 = random_rotation(&mut r);
    let r2 = random_rotation(&mut r);
    let composed = WeakPerspectiveCamera { rotation: r1 * r2, ..cam.clone() };
    let pre = Shape3D::new(shape.points.iter().map(|p| r2 * p).collect());
    let outer = WeakPerspectiveCamera { rotation: r1, ..cam };
    let e = view_rel_error(&project(&shape, &composed), &project(&pre, &outer));
    ensure(e <= 1e-12, || format!("rotation composition off by {e}"))
}

pub fn onp_inverts_projection(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 10);
    let cam = random_camera(&mut r);
    let obs = project(&shape, &cam);
    let (got, residual) = ok(solve_onp(&obs, &shape))?;
    let norm = obs.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt();
    ensure(residual <= 1e-8 * norm, || format!("residual {residual}"))?;
    let rot = (got.rotation - cam.rotation).abs().max();
    let scale = (got.scale - cam.scale).abs() / cam.scale;
    let t = (got.translation - cam.translation).norm() / cam.translation.norm().max(1.0);
    ensure(rot <= 1e-8 && scale <= 1e-8 && t <= 1e-8, || format!("camera off: rotation {rot}, scale {scale}, translation {t}"))
}

pub fn procrustes_residual_similarity_invariant(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let reference = random_shape(&mut r, 10);
    let pred = Shape3D::new(
        reference
            .points
            .iter()
            .map(|p| p + Vector3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), r.random_range(-0.2..0.2)))
            .collect(),
    );
    let residual = |s: &Shape3D| -> Result<f64, String> {
        let (aligned, _) = ok(procrustes_align(s, &reference))?;
        Ok(aligned.points.iter().zip(&reference.points).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt())
    };
    let base = residual(&pred)?;
    let moved = residual(&random_similarity(&mut r).apply(&pred))?;
    ensure((base - moved).abs() <= 1e-9 * base.max(1.0), || format!("residual {base} vs {moved}"))?;
    // the transform inverts an exact similarity
    let t = random_similarity(&mut r);
    let (aligned, _) = ok(procrustes_align(&t.apply(&reference), &reference))?;
    let e = shape_rel_error(&aligned, &reference);
    ensure(e <= 1e-8, || format!("exact alignment off by {e}"))
}

pub fn triangulation_inverts_projection(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 10);
    let views = r.random_range(2..=4);
    let cams = generic_cameras(&mut r, views);
    let obs: Vec<_> = cams.iter().map(|c| (project(&shape, c), c.clone())).collect();
    let out = ok(triangulate(&obs))?;
    let e = shape_rel_error(&out, &shape);
    ensure(e <= 1e-8, || format!("relative error {e}"))
}

pub fn factorization_reprojections_rank_three(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 10);
    let stacked: Vec<Vec<Landmarks2D>> = (0..6)
        .map(|_| vec![jitter(&project(&shape, &random_camera(&mut r)), &mut r, 0.5)])
        .collect();
    let tk = ok(tomasi_kanade(&stacked))?;
    let again: Vec<Vec<Landmarks2D>> = (0..stacked.len()).map(|f| vec![tk.reproject(f, 0)]).collect();
    let sv = ok(tomasi_kanade(&again))?.singular_values;
    ensure(sv.len() > 3 && sv[3] <= 1e-9 * sv[0], || format!("singular values {sv:?}"))
}

pub fn geometry_deterministic(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 8);
    let cams = generic_cameras(&mut r, 2);
    let obs: Vec<_> = cams.iter().map(|c| (jitter(&project(&shape, c), &mut r, 0.1), c.clone())).collect();
    let a = ok(triangulate(&obs))?;
    let b = ok(triangulate(&obs))?;
    ensure(a == b, || "triangulation differs between calls".into())?;
    let c = ok(solve_onp(&obs[0].0, &shape))?;
    let d = ok(solve_onp(&obs[0].0, &shape))?;
    ensure(c == d, || "OnP differs between calls".into())
}

// shape prior

fn constant_prior(shape: &Shape3D, seed: u64) -> PriorModel {
    let mut m = PriorModel::new_random(shape.len(), 4, 12, Activation::Tanh, 60.0, seed);
    m.decoder_out.weights.fill(0.0);
    m.decoder_out.bias = DVector::from_vec(shape.centered().to_flat());
    m
}

pub fn score_obeys_triangle_inequality(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 8);
    let m = constant_prior(&shape, seed);
    let cams = generic_cameras(&mut r, 2);
    let views: Vec<Landmarks2D> = cams.iter().map(|c| project(&shape, c)).collect();
    let before = ok(m.reconstruct(&views))?.scores;
    let delta = r.random_range(0.0..30.0);
    let angle: f64 = r.random_range(0.0..std::f64::consts::TAU);
    let i = r.random_range(0..8);
    let mut moved = views.clone();
    let p = moved[0].points()[i] + delta * Vector2::new(angle.cos(), angle.sin());
    moved[0].set_point(i, p);
    let after = ok(m.reconstruct(&moved))?.scores;
    ensure(after[0] >= 0.0 && after[0] <= before[0] + delta + 1e-9, || format!("score {} after moving {delta} from {}", after[0], before[0]))
}

pub fn encode_translation_invariant(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m = PriorModel::new_random(7, 4, 16, Activation::Tanh, 80.0, seed);
    let views: Vec<Landmarks2D> = (0..3).map(|_| random_view(&mut r, 7)).collect();
    let shifted: Vec<Landmarks2D> = views
        .iter()
        .map(|w| {
            let t = Vector2::new(r.random_range(-500.0..500.0), r.random_range(-500.0..500.0));
            Landmarks2D::new(w.points().iter().map(|p| p + t).collect())
        })
        .collect();
    let a = ok(m.encode(&views))?.values;
    let b = ok(m.encode(&shifted))?.values;
    ensure((a - &b).amax() <= 1e-9 * b.amax().max(1.0), || "code moved under translation".into())
}

pub fn decoded_shape_centered(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m = PriorModel::new_random(9, 5, 20, Activation::Tanh, 50.0, seed);
    let code = mbw::prior::ShapeCode {
        values: DVector::from_fn(5, |_, _| r.random_range(-5.0..5.0)),
    };
    let c = ok(m.decode(&code))?.centroid().norm();
    ensure(c <= 1e-12, || format!("centroid norm {c}"))
}

fn small_training_set(seed: u64) -> Vec<Vec<Landmarks2D>> {
    let mut r = rng(seed);
    let shape = random_shape(&mut r, 6);
    (0..4)
        .map(|_| {
            let cams = generic_cameras(&mut r, 2);
            cams.iter().map(|c| jitter(&project(&shape, c), &mut r, 2.0)).collect()
        })
        .collect()
}

pub fn prior_training_reproducible(seed: u64) -> Result<(), String> {
    let frames = small_training_set(seed);
    let cfg = TrainConfig { steps: 20, seed, code_dim: 3, ..TrainConfig::default() };
    let (a, la) = ok(train_prior_on_frames(&frames, &cfg, None))?;
    let (b, lb) = ok(train_prior_on_frames(&frames, &cfg, None))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.params()) == bits(&b.params()) && bits(&la) == bits(&lb), || "training is not bit-reproducible".into())
}

/// Trains on poses with a low first latent coordinate and compares held-out
/// scores there against poses with a high first latent coordinate.
pub fn unseen_poses_score_higher(seed: u64) -> Result<(), String> {
    let ds = ok(generate(&SynthConfig { frames: 200, deformation: 0.15, seed, ..SynthConfig::default() }))?;
    let mut order: Vec<usize> = (0..ds.frames()).collect();
    order.sort_by(|&a, &b| ds.hidden.latents[a][0].total_cmp(&ds.hidden.latents[b][0]));
    let region_a = &order[..80];
    let region_b = &order[order.len() - 40..];
    let train: Vec<Vec<Landmarks2D>> = region_a.iter().step_by(2).map(|&n| ds.gt_2d[n].clone()).collect();
    let cfg = TrainConfig { steps: 1500, seed, ..TrainConfig::default() };
    let (m, _) = ok(train_prior_on_frames(&train, &cfg, None))?;
    let mean_score = |frames: Vec<usize>| -> Result<f64, String> {
        let batch: Vec<Vec<Landmarks2D>> = frames.iter().map(|&n| ds.gt_2d[n].clone()).collect();
        let recs = ok(m.reconstruct_batch(&batch))?;
        Ok(recs.iter().flat_map(|r| r.scores.iter()).sum::<f64>() / (2 * recs.len()) as f64)
    };
    let held_out = mean_score(region_a.iter().skip(1).step_by(2).copied().collect())?;
    let unseen = mean_score(region_b.to_vec())?;
    ensure(unseen > held_out, || format!("unseen {unseen} vs held-out {held_out}"))
}

pub fn gradient_matches_finite_differences(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m = PriorModel::new_random(5, 3, 6, Activation::Tanh, 50.0, seed);
    let sample = vec![random_view(&mut r, 5), random_view(&mut r, 5)];
    let cams = vec![random_camera(&mut r), random_camera(&mut r)];
    let e = ok(gradient_check(&m, &sample, &cams))?;
    ensure(e <= 1e-4, || format!("relative error {e}"))
}

// perception

fn random_walk(r: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Landmarks2D> {
    let mut pts: Vec<Vector2<f64>> = (0..p)
        .map(|_| Vector2::new(r.random_range(0.0..300.0), r.random_range(0.0..300.0)))
        .collect();
    (0..n)
        .map(|_| {
            for q in pts.iter_mut() {
                *q += Vector2::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            }
            Landmarks2D::new(pts.clone())
        })
        .collect()
}

pub fn noiseless_tracking_is_identity(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let seq = random_walk(&mut r, 30, 6);
    let seeds = vec![(r.random_range(0..30), Landmarks2D::all_missing(0))];
    let seeds: Vec<(usize, Landmarks2D)> = seeds.into_iter().map(|(s, _)| (s, seq[s].clone())).collect();
    let cfg = TrackerConfig { seed, ..TrackerConfig::noiseless() };
    for c in ok(track_labels(&seq, &seeds, &cfg))? {
        ensure(c.forward == seq[c.frame], || format!("frame {} moved", c.frame))?;
        ensure(c.backward == seq[c.seed_frame], || format!("frame {} does not return", c.frame))?;
    }
    Ok(())
}

pub fn fb_check_monotone_in_epsilon(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let seed_pts = random_view(&mut r, 10);
    let returned = jitter(&seed_pts, &mut r, 5.0);
    let mut eps = [r.random_range(0.0..8.0), r.random_range(0.0..8.0)];
    eps.sort_by(f64::total_cmp);
    let lo = fb_consistency_check(&returned, &seed_pts, eps[0]);
    let hi = fb_consistency_check(&returned, &seed_pts, eps[1]);
    ensure(lo.iter().zip(&hi).all(|(a, b)| !a || *b), || "pass set shrank as epsilon grew".into())?;
    // a round trip of exactly epsilon passes
    let d = (returned.points()[0] - seed_pts.points()[0]).norm();
    ensure(fb_consistency_check(&returned, &seed_pts, d)[0], || "boundary is not inclusive".into())
}

pub fn ridge_beats_zero_weights(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (n, d, p2) = (r.random_range(3..30), r.random_range(1..10), 6);
    let x = DMatrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, p2, |_, _| r.random_range(-10.0..10.0));
    let lambda = r.random_range(0.0..5.0);
    let fitted = ok(fit_ridge(&x, &y, lambda))?;
    let zero = DetectorModel { weights: DMatrix::zeros(d + 1, p2), ridge_lambda: lambda };
    let (a, b) = (ridge_objective(&fitted, &x, &y), ridge_objective(&zero, &x, &y));
    ensure(a <= b + 1e-9 * b.max(1.0), || format!("objective {a} above zero-weight {b}"))
}

pub fn perception_seeded(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let seq = random_walk(&mut r, 20, 5);
    let seeds = vec![(3, seq[3].clone()), (15, seq[15].clone())];
    let cfg = TrackerConfig { seed, outlier_rate: 0.2, ..TrackerConfig::default() };
    ensure(ok(track_labels(&seq, &seeds, &cfg))? == ok(track_labels(&seq, &seeds, &cfg))?, || "tracker differs".into())?;
    let mix = DMatrix::from_fn(4, 10, |_, _| r.random_range(-1.0..1.0));
    let a = ok(make_descriptor(&seq[0], &mix, 0.3, seed))?;
    let b = ok(make_descriptor(&seq[0], &mix, 0.3, seed))?;
    ensure(a == b, || "descriptor differs".into())
}

// pipeline

/// A small, fast run: 60 frames, brief prior training, two iterations.
pub fn quick_run(seed: u64) -> Result<RunOutput, String> {
    let ds = ok(generate(&SynthConfig { frames: 60, seed, ..SynthConfig::default() }))?;
    let mut cfg = PipelineConfig { seed, iterations: 2, label_fraction: 0.1, prior_retrain_steps: 30, ..PipelineConfig::default() };
    cfg.prior.steps = 60;
    run_pipeline(&ds, &cfg).map_err(|e| e.to_string())
}

pub fn manual_labels_immutable(seed: u64) -> Result<(), String> {
    let out = quick_run(seed)?;
    let s0 = out.label_sets[0].manual_only();
    for (t, set) in out.label_sets.iter().enumerate() {
        ensure(set.manual_only() == s0, || format!("manual labels changed at stage {t}"))?;
        for (_, e) in set.iter() {
            ensure(e.source == LabelSource::Manual || e.points.is_complete(), || "incomplete pseudo-label".into())?;
            ensure(e.score.is_none_or(|s| s >= 0.0), || "negative score".into())?;
        }
    }
    Ok(())
}

pub fn inliers_monotone_in_tau(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let scores: BTreeMap<(usize, usize), f64> =
        (0..40).map(|k| ((k / 2, k % 2), r.random_range(0.0..10.0))).collect();
    let mut tau = [r.random_range(0.0..10.0), r.random_range(0.0..10.0)];
    tau.sort_by(f64::total_cmp);
    let lo = select_inliers(&scores, tau[0]);
    let hi = select_inliers(&scores, tau[1]);
    ensure(lo.iter().all(|k| hi.contains(k)), || "inlier set shrank as tau grew".into())
}

pub fn confidence_matches_threshold(seed: u64) -> Result<(), String> {
    let out = quick_run(seed)?;
    let tau = out.manifest.tau.ok_or("no tau in manifest")?;
    let last = out.manifest.stages.last().ok_or("no stages")?;
    let scores: BTreeMap<(usize, usize), Option<f64>> = last.scores.iter().map(|s| ((s.frame, s.view), s.score)).collect();
    for (n, views) in out.records.iter().enumerate() {
        for (v, rec) in views.iter().enumerate() {
            let passed = scores.get(&(n, v)).copied().flatten().is_some_and(|s| s <= tau);
            ensure(rec.confidence == passed, || format!("frame {n} view {v}: confidence {} vs score test {passed}", rec.confidence))?;
        }
    }
    Ok(())
}

fn flat_records(out: &RunOutput) -> Vec<FrameRecord> {
    out.records.iter().flatten().cloned().collect()
}

pub fn full_run_deterministic(seed: u64) -> Result<(), String> {
    let a = quick_run(seed)?;
    let b = quick_run(seed)?;
    ensure(render_annotations(&flat_records(&a)) == render_annotations(&flat_records(&b)), || "annotations differ".into())?;
    let ja = ok(serde_json::to_vec(&a.manifest.without_timing()))?;
    let jb = ok(serde_json::to_vec(&b.manifest.without_timing()))?;
    ensure(ja == jb, || "manifests differ".into())
}

// metrics

pub fn pckh_monotone_in_threshold(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let sk = SkeletonDef::human12();
    let gt = random_view(&mut r, 12);
    let pred = jitter(&gt, &mut r, 30.0);
    let mut prev = 0.0;
    for t in default_grid() {
        let v = ok(pckh(&pred, &gt, &sk, t))?;
        ensure(v >= prev, || format!("pckh fell at threshold {t}"))?;
        prev = v;
    }
    Ok(())
}

pub fn pck_auc_bounded(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let sk = SkeletonDef::chain(8);
    let gt = random_view(&mut r, 8);
    let grid = default_grid();
    let auc = ok(pck_auc(&jitter(&gt, &mut r, 50.0), &gt, &sk, &grid))?;
    ensure((0.0..=1.0).contains(&auc), || format!("auc {auc}"))?;
    // every joint within the smallest threshold, and every joint beyond the largest
    ensure(ok(pck_auc(&gt, &gt, &sk, &grid))? == ok(pckh(&gt, &gt, &sk, 0.0))?, || "perfect prediction".into())?;
    let far = Landmarks2D::new(gt.points().iter().map(|p| p + Vector2::new(1e6, 0.0)).collect());
    ensure(ok(pck_auc(&far, &gt, &sk, &grid))? == ok(pckh(&far, &gt, &sk, 1.0))?, || "distant prediction".into())
}

pub fn pa_mpjpe_similarity_invariant(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let gt = random_shape(&mut r, 10);
    let pred = Shape3D::new(
        gt.points
            .iter()
            .map(|p| p + Vector3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3)))
            .collect(),
    );
    let base = ok(pa_mpjpe(&pred, &gt))?;
    let moved_pred = ok(pa_mpjpe(&random_similarity(&mut r).apply(&pred), &gt))?;
    ensure((base - moved_pred).abs() <= 1e-9, || format!("{base} vs {moved_pred} after moving pred"))?;
    // moving gt rescales the metric by the transform's scale
    let t = random_similarity(&mut r);
    let moved_gt = ok(pa_mpjpe(&pred, &t.apply(&gt)))?;
    ensure((base * t.scale - moved_gt).abs() <= 1e-9 * t.scale, || format!("{} vs {moved_gt} after moving gt", base * t.scale))
}

pub fn pr_auc_monotone_invariant(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(2..60);
    let scores: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
    let mut truth: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
    truth[0] = true;
    let base = ok(pr_auc(&scores, &truth))?;
    let a = r.random_range(0.1..3.0);
    let transformed: Vec<f64> = scores.iter().map(|s| (a * s).exp() + 7.0).collect();
    let moved = ok(pr_auc(&transformed, &truth))?;
    ensure((base - moved).abs() <= 1e-12, || format!("{base} vs {moved}"))
}

// synthetic data

pub fn synth_projection_exact(seed: u64) -> Result<(), String> {
    let ds = ok(generate(&SynthConfig { frames: 40, views: 3, seed, ..SynthConfig::default() }))?;
    for n in 0..ds.frames() {
        for v in 0..ds.views() {
            ensure(project(&ds.gt_shapes[n], &ds.gt_cams[n][v]) == ds.gt_2d[n][v], || format!("frame {n} view {v}"))?;
        }
    }
    Ok(())
}

pub fn synth_deterministic(seed: u64) -> Result<(), String> {
    let cfg = SynthConfig { frames: 40, seed, ..SynthConfig::default() };
    ensure(ok(generate(&cfg))? == ok(generate(&cfg))?, || "datasets differ".into())
}

pub fn synth_in_subspace(seed: u64) -> Result<(), String> {
    let ds = ok(generate(&SynthConfig { frames: 40, seed, ..SynthConfig::default() }))?;
    let worst = ds.gt_shapes.iter().map(|s| subspace_residual(&ds.hidden, s)).fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("residual {worst}"))
}

// serialization

pub fn annotation_round_trip(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let p = r.random_range(1..8);
    let pts = |r: &mut ChaCha8Rng| -> Landmarks2D {
        Landmarks2D::from_options(
            (0..p)
                .map(|_| r.random_bool(0.7).then(|| Vector2::new(r.random_range(-1e3..1e3), r.random_range(-1e3..1e3))))
                .collect(),
        )
    };
    let records: Vec<FrameRecord> = (0..r.random_range(1..6))
        .map(|_| FrameRecord {
            w_gt: pts(&mut r),
            w_predictions: pts(&mut r),
            s_pred: r.random_bool(0.5).then(|| random_shape(&mut r, p)),
            bbox: None,
            confidence: r.random_bool(0.5),
        })
        .map(|mut rec| {
            rec.bbox = mbw::pipeline::compute_bbox(&rec.w_predictions, 1.0).ok();
            rec
        })
        .collect();
    let text = String::from_utf8(render_annotations(&records)).map_err(|e| e.to_string())?;
    ensure(ok(parse_annotations(&text))? == records, || "round trip changed the records".into())
}
