//! Oracle measurements shared by the integration tests and the acceptance
//! run. Every function returns the measured quantity; callers compare it with
//! their pinned tolerance.

#![allow(dead_code)]

use std::f64::consts::PI;

use ldk::fixtures::{centered, noisy_tail, recovery_loss, recovery_scene, registration_mesh, rig64, scene_cloud, subsample, tube_pose, expose, Fixture, RECOVERY_SCENES};
use ldk::geometry::{normals_with_jacobian, PoseSE3};
use ldk::imaging::{AlbedoMap, DepthMap, Image, ScalarField};
use ldk::losses::{smoothness_loss, specular_loss, LightDepthProblem, LossConfig};
use ldk::metrics::{depth_metrics, normal_mae};
use ldk::optimizer::{refine, RefineConfig};
use ldk::photometry::{render_image, render_pixel};
use ldk::registration::{icp_point_to_point, pose_errors, IcpConfig};
use ldk::rig::{CameraModel, LightModel, PhotometricRig};
use ldk::simulator::{intersect_brute_force, make_sphere_mesh, make_tube_mesh, make_tube_scene, Bvh, TriangleMesh, TubeOptions};
use ldk::uncertainty::{auce, ause, default_fractions, default_levels, fuse_ensemble, EnsembleOutputs, IntervalKind, PredictiveDepth};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------------------
// Renderer

/// Single-pixel rig whose centre pixel looks straight down the light axis.
fn axis_rig(gamma: f64) -> PhotometricRig {
    let camera = CameraModel::pinhole(5, 5, 4.0, 4.0, 2.0, 2.0).unwrap();
    PhotometricRig { camera, light: LightModel { mu: 0.7, ..Default::default() }, gain: 1.0, gamma }
}

/// Largest deviation of the on-axis fixtures from their closed-form colors:
/// 1 at unit depth, 1/4 at depth 2, 1/2 for gamma 2 at depth 2 and 1/2 for a
/// surface tilted 60 degrees.
pub fn render_axis_error() -> f64 {
    let centre = Vector2::new(2.0, 2.0);
    let white = [0.0, 0.0];
    let facing = -Vector3::z();
    let tilted = Vector3::new(-(3f64.sqrt()) / 2.0, 0.0, -0.5);
    let cases = [
        (axis_rig(1.0), 1.0, facing, 1.0),
        (axis_rig(1.0), 2.0, facing, 0.25),
        (axis_rig(2.0), 2.0, facing, 0.5),
        (axis_rig(1.0), 1.0, tilted, 0.5),
    ];
    let mut worst: f64 = 0.0;
    for (rig, d, n, want) in cases {
        let px = render_pixel(&rig, centre, d, white, &n).unwrap();
        for c in px.color {
            worst = worst.max((c - want).abs());
        }
    }
    worst
}

/// Largest relative change of the pre-clamp color when depth is scaled by
/// `k` and the gain by `k^2`, for a light at the camera centre, over random
/// pixels, normals, albedos and rigs.
pub fn inverse_square_error(samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let camera = CameraModel::pinhole(32, 24, r.random_range(10.0..40.0), r.random_range(10.0..40.0), 15.5, 11.5).unwrap();
        let axis = Vector3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 1.0).normalize();
        let light = LightModel { position: Vector3::zeros(), axis, mu: r.random_range(0.0..2.0), sigma0: r.random_range(0.5..2.0) };
        let rig = PhotometricRig { camera, light, gain: r.random_range(0.5..2.0), gamma: r.random_range(1.0..2.5) };
        let pixel = Vector2::new(r.random_range(0.0..31.0), r.random_range(0.0..23.0));
        let ray = camera.back_project(pixel).unwrap();
        // any normal facing the camera
        let n = (-ray + Vector3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r)) * 0.3).normalize();
        if n.dot(&ray) >= -0.05 {
            continue;
        }
        let albedo = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        let d = r.random_range(0.2..5.0);
        let k = r.random_range(0.25..4.0);
        let a = render_pixel(&rig, pixel, d, albedo, &n).unwrap();
        let scaled = PhotometricRig { gain: rig.gain * k * k, ..rig };
        let b = render_pixel(&scaled, pixel, k * d, albedo, &n).unwrap();
        for c in 0..3 {
            let denom = a.pre_clamp[c].abs().max(1e-300);
            worst = worst.max((a.pre_clamp[c] - b.pre_clamp[c]).abs() / denom);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Gradients

/// Random smooth 8x8 scene: rig with an offset light, gently curved depth,
/// random albedo, and an observed image with a few saturated pixels so that
/// every loss term is active.
pub struct GradientScene {
    pub rig: PhotometricRig,
    pub depth: DepthMap,
    pub albedo: AlbedoMap,
    pub observed: Image,
}

/// Hue away from the sector boundaries `k/6`, where HSV is not differentiable.
fn smooth_hue(r: &mut ChaCha8Rng) -> f64 {
    let sector = r.random_range(0..6) as f64;
    (sector + r.random_range(0.1..0.9)) / 6.0
}

pub fn gradient_scene(seed: u64) -> GradientScene {
    let mut r = rng(seed);
    let (w, h) = (8usize, 8usize);
    let f = r.random_range(5.0..9.0);
    let camera = CameraModel::pinhole(w, h, f, f, 3.5, 3.5).unwrap();
    let position = Vector3::new(r.random_range(-0.05..0.05), r.random_range(-0.05..0.05), 0.0);
    let axis = Vector3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), 1.0).normalize();
    let light = LightModel { position, axis, mu: r.random_range(0.0..1.0), sigma0: 1.0 };
    let rig = PhotometricRig { camera, light, gain: r.random_range(1.0..4.0), gamma: r.random_range(1.0..2.5) };
    let (a, b, c) = (r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(1.5..2.5));
    let (p, q) = (r.random_range(0.0..PI), r.random_range(0.0..PI));
    let data = (0..w * h)
        .map(|i| {
            let (u, v) = ((i % w) as f64 - 3.5, (i / w) as f64 - 3.5);
            c + a * u + b * v + 0.02 * (0.7 * u + p).sin() * (0.5 * v + q).cos()
        })
        .collect();
    let depth = DepthMap::from_values(w, h, data).unwrap();
    let mut albedo = AlbedoMap::white(w, h);
    for px in albedo.data.iter_mut() {
        *px = [smooth_hue(&mut r), r.random_range(0.1..0.9)];
    }
    let mut observed = Image::filled(w, h, [0.0; 3]);
    for (i, px) in observed.data.iter_mut().enumerate() {
        *px = if i % 7 == 3 {
            [0.99, r.random_range(0.5..0.99), r.random_range(0.5..0.99)]
        } else {
            [r.random_range(0.05..0.95), r.random_range(0.05..0.95), r.random_range(0.05..0.95)]
        };
    }
    GradientScene { rig, depth, albedo, observed }
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Central differences of `f` over the valid entries of `x`.
fn central_differences(x: &DepthMap, step: f64, f: impl Fn(&DepthMap) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.data.len()];
    for i in 0..x.data.len() {
        if !x.valid[i] {
            continue;
        }
        let mut plus = x.clone();
        plus.data[i] += step;
        let mut minus = x.clone();
        minus.data[i] -= step;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    g
}

/// Relative gradient errors of one scene.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientErrors {
    /// Photometric term, with respect to depth and albedo jointly.
    pub photometric: f64,
    pub smoothness: f64,
    pub specular: f64,
    pub total: f64,
}

impl GradientErrors {
    pub fn max(self, o: Self) -> Self {
        Self {
            photometric: self.photometric.max(o.photometric),
            smoothness: self.smoothness.max(o.smoothness),
            specular: self.specular.max(o.specular),
            total: self.total.max(o.total),
        }
    }
}

pub fn gradient_errors(s: &GradientScene) -> GradientErrors {
    const STEP: f64 = 1e-6;
    let photo_only = LossConfig { lambda_smooth: 0.0, lambda_specular: 0.0, ..Default::default() };
    let problem = LightDepthProblem::new(&s.rig, &s.observed, &photo_only).unwrap();
    let report = problem.evaluate(&s.depth, &s.albedo).unwrap().report;
    let mut analytic = report.grad_depth.clone();
    let mut numeric = central_differences(&s.depth, STEP, |d| problem.evaluate(d, &s.albedo).unwrap().report.total);
    for i in 0..s.albedo.data.len() {
        for k in 0..2 {
            let mut plus = s.albedo.clone();
            plus.data[i][k] += STEP;
            let mut minus = s.albedo.clone();
            minus.data[i][k] -= STEP;
            let fd = (problem.evaluate(&s.depth, &plus).unwrap().report.total - problem.evaluate(&s.depth, &minus).unwrap().report.total) / (2.0 * STEP);
            analytic.push(report.grad_albedo[i][k]);
            numeric.push(fd);
        }
    }
    let photometric = rel_error(&analytic, &numeric);

    let smooth = smoothness_loss(&s.depth, &s.observed).unwrap();
    let smooth_fd = central_differences(&s.depth, STEP, |d| smoothness_loss(d, &s.observed).unwrap().value);
    let smoothness = rel_error(&smooth.grad_depth, &smooth_fd);

    let rays = s.rig.camera.rays();
    let threshold = LossConfig::default().specular_threshold;
    let spec_value = |d: &DepthMap| {
        let (normals, _) = normals_with_jacobian(&rays, d).unwrap();
        specular_loss(&s.rig, &s.observed, &normals, d, threshold).unwrap()
    };
    let spec = spec_value(&s.depth);
    let spec_fd = central_differences(&s.depth, STEP, |d| spec_value(d).value);
    let specular = rel_error(&spec.grad_depth, &spec_fd);

    let full = LossConfig { lambda_smooth: 0.1, lambda_specular: 1.0, ..Default::default() };
    let problem = LightDepthProblem::new(&s.rig, &s.observed, &full).unwrap();
    let report = problem.evaluate(&s.depth, &s.albedo).unwrap().report;
    let total_fd = central_differences(&s.depth, STEP, |d| problem.evaluate(d, &s.albedo).unwrap().report.total);
    let total = rel_error(&report.grad_depth, &total_fd);

    GradientErrors { photometric, smoothness, specular, total }
}

/// Worst relative errors over `count` random scenes.
pub fn gradient_suite(count: u64) -> GradientErrors {
    (0..count).map(|k| gradient_errors(&gradient_scene(k))).fold(GradientErrors::default(), GradientErrors::max)
}

// ---------------------------------------------------------------------------
// Depth recovery

#[derive(Debug, Clone)]
pub struct Recovery {
    pub name: String,
    pub abs_rel: f64,
    pub normal_mae_deg: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Refines `fixture` from a flat start with the default schedule.
pub fn recover(fixture: &Fixture) -> Recovery {
    let res = refine(&fixture.rig, &fixture.frame.image, None, None, &recovery_loss(), &RefineConfig::default()).unwrap();
    let m = depth_metrics(&res.depth, &fixture.frame.depth, true).unwrap();
    Recovery {
        name: fixture.name.clone(),
        abs_rel: m.abs_rel,
        normal_mae_deg: normal_mae(&res.normals, &fixture.frame.normals).unwrap(),
        initial_loss: res.loss_trace[0],
        final_loss: *res.loss_trace.last().unwrap(),
    }
}

pub fn recovery_suite() -> Vec<Recovery> {
    (0..RECOVERY_SCENES).map(|k| recover(&recovery_scene(k).unwrap())).collect()
}

/// Tube seen straight down its axis, a known hard case.
pub fn axial_tube() -> Fixture {
    let mesh = make_tube_scene(1.0, 8.0, 4, 0);
    let (rig, frame) = expose(&rig64(), &mesh, &tube_pose(0.0)).unwrap();
    Fixture { name: "tube seed 0 at 0 deg".into(), rig, mesh, frame }
}

// ---------------------------------------------------------------------------
// Simulator

/// Largest per-channel difference between frames and the photometric model
/// evaluated on their own ground-truth fields.
pub fn rerender_error() -> f64 {
    let mut frames = Vec::new();
    for k in 0..RECOVERY_SCENES {
        let f = recovery_scene(k).unwrap();
        frames.push((f.rig, f.frame));
    }
    frames.push(expose(&rig64(), &registration_mesh(3), &PoseSE3::identity()).unwrap());
    frames.push(expose(&rig64(), &make_tube_scene(1.0, 8.0, 4, 7), &tube_pose(0.0)).unwrap());
    let mut worst: f64 = 0.0;
    for (rig, frame) in &frames {
        let img = render_image(rig, &frame.depth, &frame.albedo, &frame.normals).unwrap();
        for (a, b) in img.data.iter().zip(&frame.image.data) {
            for c in 0..3 {
                worst = worst.max((a[c] - b[c]).abs());
            }
        }
    }
    worst
}

/// Meshes of at most 10k faces used for the BVH comparison.
pub fn bvh_meshes() -> Vec<(String, TriangleMesh)> {
    vec![
        ("tube".into(), make_tube_mesh(1.0, 8.0, 4, 2, &TubeOptions { segments: 64, rings: 72, amplitude: 0.15 })),
        ("sphere".into(), make_sphere_mesh(Vector3::new(0.1, -0.2, 3.0), 1.5, 48, 96, [0.1, 0.5])),
        ("registration".into(), registration_mesh(1)),
    ]
}

/// Number of rays (camera rays from several poses plus random rays) on which
/// the BVH and the brute-force loop disagree, and the number of rays cast.
pub fn bvh_mismatches(seed: u64) -> (usize, usize) {
    let mut r = rng(seed);
    let rays = rig64().camera.rays();
    let (mut bad, mut total) = (0, 0);
    for (_, mesh) in bvh_meshes() {
        assert!(mesh.faces.len() <= 10_000);
        let bvh = Bvh::build(&mesh);
        let mut check = |o: Vector3<f64>, d: Vector3<f64>| {
            total += 1;
            if bvh.intersect(&mesh, &o, &d) != intersect_brute_force(&mesh, &o, &d) {
                bad += 1;
            }
        };
        for pose in [PoseSE3::identity(), tube_pose(30.0), tube_pose(70.0)] {
            for ray in rays.iter().step_by(3) {
                check(pose.translation, pose.rotation * ray);
            }
        }
        for _ in 0..2000 {
            let o = Vector3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-1.0..8.0));
            let d = Vector3::new(gauss(&mut r), gauss(&mut r), gauss(&mut r)).normalize();
            check(o, d);
        }
    }
    (bad, total)
}

// ---------------------------------------------------------------------------
// Ensembles

/// Random ensemble of `m` members on a `w x h` grid; a few pixels are invalid
/// in some member.
pub fn random_ensemble(m: usize, w: usize, h: usize, seed: u64) -> EnsembleOutputs {
    let mut r = rng(seed);
    let base: Vec<f64> = (0..w * h).map(|_| r.random_range(0.5..5.0)).collect();
    let members = (0..m)
        .map(|_| {
            let mut d = DepthMap::from_values(w, h, base.iter().map(|b| b + 0.3 * gauss(&mut r)).map(|x| x.abs() + 0.01).collect()).unwrap();
            let mut a = ScalarField::filled(w, h, 0.0);
            for (i, v) in a.data.iter_mut().enumerate() {
                *v = r.random_range(0.0..0.2);
                if r.random_range(0.0..1.0) < 0.02 {
                    d.valid[i] = false;
                }
            }
            (d, a)
        })
        .collect();
    EnsembleOutputs { members }
}

/// Largest error of the fused fields against a direct per-pixel evaluation
/// of the mixture moments, relative to `max(1, |value|)`, plus the number of
/// validity disagreements.
pub fn fusion_oracle_error(e: &EnsembleOutputs) -> (f64, usize) {
    let fused = fuse_ensemble(e).unwrap();
    let m = e.members.len() as f64;
    let (mut worst, mut wrong_mask): (f64, usize) = (0.0, 0);
    let close = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for i in 0..fused.mean.data.len() {
        let all_valid = e.members.iter().all(|(d, a)| d.valid[i] && a.valid[i]);
        if all_valid != fused.mean.valid[i] {
            wrong_mask += 1;
        }
        if !all_valid {
            continue;
        }
        let mut mean = 0.0;
        for (d, _) in &e.members {
            mean += d.data[i];
        }
        mean /= m;
        let (mut epi, mut ale) = (0.0, 0.0);
        for (d, a) in &e.members {
            epi += (mean - d.data[i]).powi(2);
            ale += a.data[i];
        }
        epi /= m;
        ale /= m;
        worst = worst
            .max(close(fused.mean.data[i], mean))
            .max(close(fused.var_epistemic[i], epi))
            .max(close(fused.var_aleatoric[i], ale))
            .max(close(fused.var_total[i], epi + ale));
    }
    (worst, wrong_mask)
}

/// Whether reversing and rotating the member list leaves the fusion bitwise
/// unchanged.
pub fn fusion_permutation_exact(e: &EnsembleOutputs) -> bool {
    let base = fuse_ensemble(e).unwrap();
    let mut rev = e.clone();
    rev.members.reverse();
    let mut rot = e.clone();
    rot.members.rotate_left(e.members.len() / 3);
    fuse_ensemble(&rev).unwrap() == base && fuse_ensemble(&rot).unwrap() == base
}

/// Ensemble with member means and aleatoric std scaled by `k`.
pub fn scaled_ensemble(e: &EnsembleOutputs, k: f64) -> EnsembleOutputs {
    EnsembleOutputs { members: e.members.iter().map(|(d, a)| (d.scaled(k), a.map(|v| v * k * k))).collect() }
}

/// Largest relative deviation of the fused fields of the `k`-scaled ensemble
/// from `k` (mean) and `k^2` (variances) times the original fields.
pub fn fusion_affine_error(e: &EnsembleOutputs, k: f64) -> f64 {
    let a = fuse_ensemble(e).unwrap();
    let b = fuse_ensemble(&scaled_ensemble(e, k)).unwrap();
    let mut worst: f64 = 0.0;
    let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { ((x - y) / y).abs() };
    for i in 0..a.mean.data.len() {
        if a.mean.valid[i] != b.mean.valid[i] {
            return f64::INFINITY;
        }
        if !a.mean.valid[i] {
            continue;
        }
        worst = worst
            .max(rel(b.mean.data[i], k * a.mean.data[i]))
            .max(rel(b.var_epistemic[i], k * k * a.var_epistemic[i]))
            .max(rel(b.var_aleatoric[i], k * k * a.var_aleatoric[i]))
            .max(rel(b.var_total[i], k * k * a.var_total[i]));
    }
    worst
}

// ---------------------------------------------------------------------------
// Calibration

/// Predictive depth with the given per-pixel mean and sigma on a single row.
pub fn predictive(mean: Vec<f64>, sigma: &[f64]) -> PredictiveDepth {
    let n = mean.len();
    let var: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    PredictiveDepth { mean: DepthMap::from_values(n, 1, mean).unwrap(), var_aleatoric: var.clone(), var_epistemic: vec![0.0; n], var_total: var }
}

/// `n` pixels whose ground truth is drawn from the predicted Gaussian.
pub fn gaussian_predictor(n: usize, seed: u64) -> (PredictiveDepth, DepthMap) {
    let mut r = rng(seed);
    let mean: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
    let sigma: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.3)).collect();
    let gt: Vec<f64> = mean.iter().zip(&sigma).map(|(m, s)| m + s * gauss(&mut r)).collect();
    (predictive(mean, &sigma), DepthMap::from_values(n, 1, gt).unwrap())
}

/// Signed AUCE of a grossly overconfident and a grossly underconfident
/// predictor on a `levels`-point grid.
pub fn auce_limits(levels: usize) -> (f64, f64) {
    let n = 1000;
    let mean: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
    let gt = DepthMap::from_values(n, 1, mean.iter().map(|m| m + 0.5).collect()).unwrap();
    let grid = default_levels(levels);
    let over = auce(&predictive(mean.clone(), &vec![1e-9; n]), &gt, &grid, IntervalKind::Gaussian).unwrap();
    let under = auce(&predictive(mean, &vec![1e9; n]), &gt, &grid, IntervalKind::Gaussian).unwrap();
    (over.auce_signed, under.auce_signed)
}

/// AUSE when the uncertainty is the absolute error itself, over random
/// instances; exactly zero when the ordering is perfect.
pub fn perfect_ordering_ause(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(seed);
        let errors: Vec<f64> = (0..500).map(|_| gauss(&mut r)).collect();
        let unc: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        worst = worst.max(ause(&unc, &errors, &default_fractions(100)).unwrap().ause.abs());
    }
    worst
}

// ---------------------------------------------------------------------------
// Registration

/// Rotation of 5 degrees about a skew axis with a few-centimetre translation.
pub fn icp_ground_truth() -> PoseSE3 {
    PoseSE3::from_axis_angle(Vector3::new(0.3, 1.0, -0.2), 5f64.to_radians(), Vector3::new(0.03, 0.03, -0.03))
}

pub fn icp_config() -> IcpConfig {
    IcpConfig { max_iterations: 200, max_pair_dist: 0.5, ..Default::default() }
}

/// Rotation (rad) and translation (m) error of registering the 2k-point
/// registration cloud to its transformed copy.
pub fn icp_clean_error() -> (f64, f64) {
    let cloud = centered(&subsample(&scene_cloud(0).unwrap(), 2000));
    let gt = icp_ground_truth();
    let res = icp_point_to_point(&cloud, &cloud.transformed(&gt), &PoseSE3::identity(), &icp_config()).unwrap();
    let (t, deg) = pose_errors(&res.pose, &gt);
    (deg.to_radians(), t)
}

/// Translation errors with percentile 0.9 and 1.0 on the noisy-tail fixture
/// for each seed.
pub fn icp_noisy_tail(seeds: u64) -> Vec<(f64, f64)> {
    let cloud = centered(&subsample(&scene_cloud(0).unwrap(), 2000));
    let gt = icp_ground_truth();
    let target = cloud.transformed(&gt);
    let cfg = icp_config();
    (0..seeds)
        .map(|seed| {
            let noisy = noisy_tail(&cloud, seed).unwrap();
            let p90 = icp_point_to_point(&noisy, &target, &PoseSE3::identity(), &IcpConfig { percentile: 0.9, ..cfg }).unwrap();
            let p100 = icp_point_to_point(&noisy, &target, &PoseSE3::identity(), &cfg).unwrap();
            (pose_errors(&p90.pose, &gt).0, pose_errors(&p100.pose, &gt).0)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics

/// Random valid depth map.
pub fn random_depth(w: usize, h: usize, seed: u64) -> DepthMap {
    let mut r = rng(seed);
    DepthMap::from_values(w, h, (0..w * h).map(|_| r.random_range(0.5..10.0)).collect()).unwrap()
}

/// Whether median-aligned metrics are bitwise unchanged when the prediction
/// is rescaled by powers of two, and the largest relative change for
/// arbitrary factors.
pub fn alignment_invariance(seed: u64) -> (bool, f64) {
    let gt = random_depth(40, 30, seed);
    let pred = random_depth(40, 30, seed + 1000);
    let base = depth_metrics(&pred, &gt, true).unwrap();
    let exact = [-3, -1, 1, 4].iter().all(|&e| {
        let m = depth_metrics(&pred.scaled(2f64.powi(e)), &gt, true).unwrap();
        (m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.mae, m.medae, m.delta1, m.delta2, m.delta3)
            == (base.abs_rel, base.sq_rel, base.rmse, base.rmse_log, base.mae, base.medae, base.delta1, base.delta2, base.delta3)
    });
    let mut worst: f64 = 0.0;
    for k in [0.37, 1.3, 7.9] {
        let m = depth_metrics(&pred.scaled(k), &gt, true).unwrap();
        for (a, b) in [(m.abs_rel, base.abs_rel), (m.rmse, base.rmse), (m.rmse_log, base.rmse_log), (m.mae, base.mae)] {
            worst = worst.max(((a - b) / b).abs());
        }
    }
    (exact, worst)
}

/// delta1 and delta2 of a prediction 1.3 times the ground truth, unaligned.
pub fn delta_fixture(seed: u64) -> (f64, f64) {
    let gt = random_depth(20, 20, seed);
    let m = depth_metrics(&gt.scaled(1.3), &gt, false).unwrap();
    (m.delta1, m.delta2)
}
