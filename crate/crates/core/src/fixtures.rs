//! Standard scenes shared by the tests, the CLI's builtin scenes and the guide.
//!
//! Everything here is deterministic in its arguments.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{backproject_cloud, PointCloud, PoseSE3};
use crate::losses::LossConfig;
use crate::metrics::median;
use crate::rig::{CameraModel, LightModel, PhotometricRig};
use crate::simulator::{make_plane_mesh, make_sphere_mesh, make_tube_scene, with_seeded_albedo, MeshScene, SceneFrame, TriangleMesh};

/// 64x64 pinhole rig with a co-located light, mild angular falloff and gamma 2.2.
pub fn rig64() -> PhotometricRig {
    let camera = CameraModel::pinhole(64, 64, 40.0, 40.0, 31.5, 31.5).expect("valid intrinsics");
    PhotometricRig { camera, light: LightModel { mu: 0.5, ..Default::default() }, gain: 1.0, gamma: 2.2 }
}

/// Renders `mesh` with the rig gain scaled so that the brightest pixel is 0.9.
pub fn expose(rig: &PhotometricRig, mesh: &TriangleMesh, pose: &PoseSE3) -> Result<(PhotometricRig, SceneFrame)> {
    let scene = MeshScene::new(mesh.clone())?;
    let frame = scene.render(rig, pose)?;
    let peak = (0..frame.image.data.len()).map(|i| frame.image.max_channel(i)).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Domain("scene is not visible from this pose".into()));
    }
    let exposed = PhotometricRig { gain: rig.gain * 0.9 / peak.powf(rig.gamma), ..*rig };
    let frame = scene.render(&exposed, pose)?;
    Ok((exposed, frame))
}

/// Camera inside the tube at mid-length (`z = 4` for the standard length 8),
/// turned `angle_deg` degrees from the tube axis towards the wall.
pub fn tube_pose(angle_deg: f64) -> PoseSE3 {
    PoseSE3::from_axis_angle(Vector3::y(), angle_deg.to_radians(), Vector3::new(0.0, 0.0, 4.0))
}

/// A named simulator scene with its exposed rig and ground-truth frame.
pub struct Fixture {
    pub name: String,
    pub rig: PhotometricRig,
    pub mesh: TriangleMesh,
    pub frame: SceneFrame,
}

/// Number of depth-recovery scenes.
pub const RECOVERY_SCENES: usize = 10;

/// Depth-recovery scene `k`: tubes (radius 1, length 8, 4 bumps, seed `k`)
/// seen at 45 + 10k degrees from the axis for `k < 5`, seeded-albedo spheres
/// of slightly varying size and position for `5 <= k < 10`.
pub fn recovery_scene(k: usize) -> Result<Fixture> {
    if k >= RECOVERY_SCENES {
        return Err(Error::Domain(format!("recovery scene {k} does not exist")));
    }
    let (name, mesh, pose) = if k < 5 {
        let angle = 45.0 + 10.0 * k as f64;
        (format!("tube seed {k} at {angle} deg"), make_tube_scene(1.0, 8.0, 4, k as u64), tube_pose(angle))
    } else {
        let j = (k - 5) as f64;
        let center = Vector3::new(0.1 * j - 0.2, 0.05 * j - 0.1, 3.0 + 0.1 * j);
        let radius = 1.4 + 0.1 * j;
        let mesh = with_seeded_albedo(make_sphere_mesh(center, radius, 64, 128, [0.0, 0.0]), center, k as u64);
        (format!("sphere r {radius:.1} at z {:.1}", center.z), mesh, PoseSE3::identity())
    };
    let (rig, frame) = expose(&rig64(), &mesh, &pose)?;
    Ok(Fixture { name, rig, mesh, frame })
}

/// Loss weights for from-scratch recovery on simulator scenes: a light
/// smoothness prior and no specular term (the simulator has no highlights).
pub fn recovery_loss() -> LossConfig {
    LossConfig { lambda_smooth: 0.003, lambda_specular: 0.0, ..Default::default() }
}

/// Two spheres in front of a tilted plane: a scene without continuous
/// symmetries, so rigid registration is well posed.
pub fn registration_mesh(seed: u64) -> TriangleMesh {
    let plane = make_plane_mesh(Vector3::new(0.0, 0.0, 4.0), Vector3::new(3.0, 0.0, 0.6), Vector3::new(0.0, 3.0, 0.4), 16, [0.05, 0.4]);
    let a = make_sphere_mesh(Vector3::new(-0.6, -0.3, 2.8), 0.6, 24, 48, [0.02, 0.5]);
    let b = make_sphere_mesh(Vector3::new(0.7, 0.4, 3.2), 0.5, 24, 48, [0.08, 0.3]);
    with_seeded_albedo(plane.merged(&a).merged(&b), Vector3::new(0.0, 0.0, 3.0), seed)
}

/// Back-projected registration scene with per-point sigma `0.002 |x|^2`.
pub fn scene_cloud(seed: u64) -> Result<PointCloud> {
    let (rig, frame) = expose(&rig64(), &registration_mesh(seed), &PoseSE3::identity())?;
    let mut cloud = backproject_cloud(&rig.camera, &frame.depth, None, None)?;
    cloud.sigma = Some(cloud.points.iter().map(|p| 0.002 * p.norm_squared()).collect());
    Ok(cloud)
}

/// `count` points spread evenly over the cloud's index range.
pub fn subsample(cloud: &PointCloud, count: usize) -> PointCloud {
    let count = count.min(cloud.len());
    let idx: Vec<usize> = (0..count).map(|k| k * cloud.len() / count).collect();
    cloud.select(&idx)
}

/// Cloud translated so that its centroid is the origin.
pub fn centered(cloud: &PointCloud) -> PointCloud {
    let c = cloud.points.iter().sum::<Vector3<f64>>() / cloud.len().max(1) as f64;
    PointCloud { points: cloud.points.iter().map(|p| p - c).collect(), ..cloud.clone() }
}

/// Noisy copy of `cloud`: isotropic Gaussian noise of std sigma on every
/// point, plus isotropic noise of std `5 * median(sigma)` on the 10 % of
/// points with the highest sigma.
pub fn noisy_tail(cloud: &PointCloud, seed: u64) -> Result<PointCloud> {
    let sigma = cloud.sigma.as_ref().ok_or_else(|| Error::Domain("cloud has no per-point sigma".into()))?;
    let mut sorted = sigma.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted).ok_or_else(|| Error::Domain("cloud is empty".into()))?;
    let cut = sorted[sorted.len() - sorted.len() / 10];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cloud.clone();
    for (p, &s) in out.points.iter_mut().zip(sigma) {
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        *p += Vector3::new(g(), g(), g()) * s;
        if s >= cut {
            *p += Vector3::new(g(), g(), g()) * (5.0 * med);
        }
    }
    Ok(out)
}
