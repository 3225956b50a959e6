//! Rigid point-to-point ICP with an uncertainty percentile filter.
//!
//! Back-projected clouds carry a per-point standard deviation. Before
//! alignment the most uncertain points can be dropped, keeping only the
//! requested fraction of most certain ones; the remaining points are aligned
//! by classic ICP: exact nearest neighbours within a gating distance, then the
//! closed-form (SVD) rigid fit of the matched pairs, repeated until the
//! matched points stop moving.

pub mod kdtree;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, PoseSE3};

pub use kdtree::{nearest_brute_force, KdTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    /// Fraction in `(0, 1]` of most certain source points kept.
    pub percentile: f64,
    pub max_iterations: usize,
    /// Stop when the matched source points move less than this on average, meters.
    pub convergence_tol: f64,
    /// Pairs farther apart than this are not matched, meters.
    pub max_pair_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self { percentile: 1.0, max_iterations: 50, convergence_tol: 1e-9, max_pair_dist: 0.25 }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(Error::domain(format!("percentile must be in (0, 1], got {}", self.percentile)));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be >= 1"));
        }
        if !(self.convergence_tol > 0.0 && self.max_pair_dist > 0.0) {
            return Err(Error::domain("tolerances must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub pose: PoseSE3,
    pub iterations: usize,
    pub converged: bool,
    /// RMS distance of the matched pairs under `pose`, meters.
    pub final_rms: f64,
    /// Fraction of the source cloud that took part in the alignment.
    pub retained_fraction: f64,
}

/// JSON form of an ICP result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcpReport {
    pub pose: PoseSE3,
    pub iterations: usize,
    pub rms: f64,
}

impl From<&IcpResult> for IcpReport {
    fn from(r: &IcpResult) -> Self {
        Self { pose: r.pose, iterations: r.iterations, rms: r.final_rms }
    }
}

/// Keeps the `floor(percentile * n)` points with the smallest sigma, in their
/// original order. Equal sigmas are ranked by index.
pub fn filter_by_uncertainty(cloud: &PointCloud, percentile: f64) -> Result<PointCloud> {
    cloud.validate()?;
    let sigma = cloud.sigma.as_ref().ok_or_else(|| Error::domain("cloud has no per-point sigma"))?;
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::domain(format!("percentile must be in (0, 1], got {percentile}")));
    }
    let n = cloud.len();
    let keep = ((percentile * n as f64).floor() as usize).min(n);
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]).then(a.cmp(&b)));
    let mut kept = ranked[..keep].to_vec();
    kept.sort_unstable();
    Ok(cloud.select(&kept))
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
pub fn rigid_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<PoseSE3> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::Registration(format!("need at least 3 pairs, got {}", src.len().min(dst.len()))));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - cs) * (q - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let largest = sv.max();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(f64::total_cmp);
    // a rotation is determined by the pairs unless they are (nearly) collinear
    if !(largest > 0.0) || sorted[1] <= 1e-12 * largest {
        return Err(Error::Registration("correspondences are degenerate (collinear or coincident)".into()));
    }
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Ok(PoseSE3 { rotation, translation: cd - rotation * cs })
}

fn ensure_non_degenerate(cloud: &PointCloud, what: &str) -> Result<()> {
    if cloud.len() < 3 {
        return Err(Error::domain(format!("{what} cloud needs at least 3 points")));
    }
    let c = cloud.points.iter().sum::<Vector3<f64>>() / cloud.len() as f64;
    let cov: Matrix3<f64> = cloud.points.iter().map(|p| (p - c) * (p - c).transpose()).sum();
    let ev = cov.symmetric_eigenvalues();
    let mut ev = [ev[0], ev[1], ev[2]];
    ev.sort_by(f64::total_cmp);
    if !(ev[2] > 0.0) || ev[1] <= 1e-24 * ev[2] {
        return Err(Error::domain(format!("{what} cloud is collinear")));
    }
    Ok(())
}

/// Aligns `source` to `target` starting from `init`.
///
/// The percentile filter of `config` is applied to `source` first (a cloud
/// without sigma is only accepted at percentile 1). Returns the pose with the
/// lowest matched RMS over all iterations.
pub fn icp_point_to_point(source: &PointCloud, target: &PointCloud, init: &PoseSE3, config: &IcpConfig) -> Result<IcpResult> {
    config.validate()?;
    init.validate()?;
    source.validate()?;
    target.validate()?;
    let src = if config.percentile < 1.0 { filter_by_uncertainty(source, config.percentile)? } else { source.clone() };
    ensure_non_degenerate(&src, "source")?;
    ensure_non_degenerate(target, "target")?;
    let retained_fraction = src.len() as f64 / source.len() as f64;
    let tree = KdTree::build(&target.points);
    let max2 = config.max_pair_dist * config.max_pair_dist;

    let mut pose = *init;
    let mut best: Option<(PoseSE3, f64, usize)> = None;
    for iteration in 1..=config.max_iterations {
        let moved: Vec<Vector3<f64>> = src.points.par_iter().map(|p| pose.apply(p)).collect();
        let pairs: Vec<Option<usize>> = moved.par_iter().map(|p| tree.nearest(p, max2).map(|(j, _)| j)).collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (k, m) in pairs.iter().enumerate() {
            if let Some(j) = *m {
                a.push(src.points[k]);
                b.push(target.points[j]);
            }
        }
        if a.len() < 3 {
            return Err(Error::Registration(format!("only {} correspondences within {} m at iteration {iteration}", a.len(), config.max_pair_dist)));
        }
        let next = rigid_fit(&a, &b)?;
        let mut sq = 0.0;
        let mut shift = 0.0;
        for (p, q) in a.iter().zip(&b) {
            let np = next.apply(p);
            sq += (np - q).norm_squared();
            shift += (np - pose.apply(p)).norm();
        }
        let rms = (sq / a.len() as f64).sqrt();
        let mean_shift = shift / a.len() as f64;
        pose = next;
        if best.is_none_or(|(_, r, _)| rms < r) {
            best = Some((next, rms, iteration));
        }
        if mean_shift < config.convergence_tol {
            let (bp, br, _) = best.expect("set above");
            return Ok(IcpResult { pose: bp, iterations: iteration, converged: true, final_rms: br, retained_fraction });
        }
    }
    let (bp, br, _) = best.expect("at least one iteration");
    Ok(IcpResult { pose: bp, iterations: config.max_iterations, converged: false, final_rms: br, retained_fraction })
}

/// `(translation error in meters, rotation error in degrees)` of `estimated`
/// relative to `gt`.
pub fn pose_errors(estimated: &PoseSE3, gt: &PoseSE3) -> (f64, f64) {
    let rel = gt.inverse().compose(estimated);
    (rel.translation.norm(), rel.rotation_angle().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                Vector3::new(u, v, 2.0 + 0.3 * (3.0 * u).sin() * (2.0 * v).cos())
            })
            .collect();
        PointCloud::from_points(pts)
    }

    fn with_sigma(mut c: PointCloud, s: Vec<f64>) -> PointCloud {
        c.sigma = Some(s);
        c
    }

    #[test]
    fn filter_examples() {
        let c = with_sigma(blob(10, 1), (0..10).map(|i| [3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0, 3.5, 8.0, 7.0][i]).collect());
        assert_eq!(filter_by_uncertainty(&c, 1.0).unwrap(), c);
        let f = filter_by_uncertainty(&c, 0.9).unwrap();
        assert_eq!(f.len(), 9);
        assert!(!f.sigma.as_ref().unwrap().contains(&9.0));
        let eq = with_sigma(blob(10, 1), vec![0.5; 10]);
        let half = filter_by_uncertainty(&eq, 0.5).unwrap();
        assert_eq!(half.points, eq.points[..5].to_vec());
        assert!(filter_by_uncertainty(&blob(10, 1), 0.5).is_err());
        assert!(filter_by_uncertainty(&eq, 0.0).is_err());
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let c = blob(500, 2);
        let r = icp_point_to_point(&c, &c, &PoseSE3::identity(), &IcpConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.final_rms < 1e-12);
        assert!((r.pose.rotation - Matrix3::identity()).amax() < 1e-12);
        assert_eq!(r.retained_fraction, 1.0);
    }

    #[test]
    fn recovers_a_small_rigid_motion() {
        let c = blob(2000, 3);
        let gt = PoseSE3::from_axis_angle(Vector3::new(0.2, 1.0, 0.1), 5f64.to_radians(), Vector3::new(0.03, -0.02, 0.035));
        let r = icp_point_to_point(&c, &c.transformed(&gt), &PoseSE3::identity(), &IcpConfig { max_iterations: 100, ..Default::default() }).unwrap();
        let (te, re) = pose_errors(&r.pose, &gt);
        assert!(te < 1e-4 && re.to_radians() < 1e-3, "{te} {re}");
    }

    #[test]
    fn rigid_fit_is_exact_and_rejects_degenerate_pairs() {
        let c = blob(50, 4);
        let gt = PoseSE3::from_axis_angle(Vector3::new(1.0, -1.0, 0.5), 2.0, Vector3::new(1.0, 2.0, 3.0));
        let moved: Vec<_> = c.points.iter().map(|p| gt.apply(p)).collect();
        let fit = rigid_fit(&c.points, &moved).unwrap();
        assert!((fit.rotation - gt.rotation).amax() < 1e-12);
        assert!((fit.translation - gt.translation).amax() < 1e-12);
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(rigid_fit(&line, &line), Err(Error::Registration(_))));
        assert!(rigid_fit(&line[..2], &line[..2]).is_err());
    }

    #[test]
    fn far_apart_clouds_fail() {
        let c = blob(100, 5);
        let far = c.transformed(&PoseSE3::from_translation(Vector3::new(10.0, 0.0, 0.0)));
        assert!(matches!(icp_point_to_point(&c, &far, &PoseSE3::identity(), &IcpConfig::default()), Err(Error::Registration(_))));
    }

    #[test]
    fn pose_error_examples() {
        let a = PoseSE3::from_axis_angle(Vector3::new(0.3, 0.1, 1.0), 0.4, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(pose_errors(&a, &a).0, 0.0);
        assert!(pose_errors(&a, &a).1 < 1e-6);
        let rot = PoseSE3::from_axis_angle(Vector3::z(), 10f64.to_radians(), Vector3::zeros());
        let (t, r) = pose_errors(&rot, &PoseSE3::identity());
        assert!(t == 0.0 && (r - 10.0).abs() < 1e-9);
        let (t, r) = pose_errors(&PoseSE3::from_translation(Vector3::new(0.0, 0.2, 0.0)), &PoseSE3::identity());
        assert!((t - 0.2).abs() < 1e-15 && r == 0.0);
    }

    #[test]
    fn report_json_shape() {
        let r = IcpResult { pose: PoseSE3::identity(), iterations: 3, converged: true, final_rms: 0.5, retained_fraction: 1.0 };
        let v: serde_json::Value = serde_json::to_value(IcpReport::from(&r)).unwrap();
        assert_eq!(v["pose"]["R"].as_array().unwrap().len(), 9);
        assert_eq!(v["pose"]["t"].as_array().unwrap().len(), 3);
        assert_eq!(v["iterations"], 3);
        assert_eq!(v["rms"], 0.5);
    }
}
