//! Surface normals from a depth map.
//!
//! Each interior pixel is the apex of a fan of six triangles spanned by its
//! N, NE, E, S, SW and W neighbors, taken cyclically in that order. The
//! normal is the area-weighted mean of the triangle normals. Since a triangle's
//! cross product has length twice its area, the area-weighted sum is just half
//! the sum of the raw cross products, which keeps the operator smooth in the
//! depths:
//!
//! ```text
//! S = sum_k (p_a - p_0) x (p_b - p_0),   n = -S / |S|
//! ```
//!
//! The sign makes a fronto-parallel plane face the camera. Every fan triangle
//! built from a visible depth graph has the same winding as its image-space
//! footprint, so `n . r < 0` holds except for degenerate fans, which are
//! masked out together with border pixels and pixels next to invalid depth.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, NormalMap};
use crate::rig::CameraModel;

/// Stencil offsets `(du, dv)`: center, then N, NE, E, S, SW, W.
pub const STENCIL: [(isize, isize); 7] = [(0, 0), (0, -1), (1, -1), (1, 0), (0, 1), (-1, 1), (-1, 0)];

/// Fan triangles as pairs of stencil indices.
const FAN: [(usize, usize); 6] = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1)];

/// `dn / dd_k` for each stencil entry of a valid pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalJacobian {
    pub d_depth: [Vector3<f64>; 7],
}

fn stencil_index(width: usize, height: usize, u: usize, v: usize, k: usize) -> Option<usize> {
    let (du, dv) = STENCIL[k];
    let uu = u as isize + du;
    let vv = v as isize + dv;
    if uu < 0 || vv < 0 || uu >= width as isize || vv >= height as isize {
        return None;
    }
    Some(vv as usize * width + uu as usize)
}

fn pixel_normal(rays: &[Vector3<f64>], depth: &DepthMap, u: usize, v: usize, want_jacobian: bool) -> Option<(Vector3<f64>, Option<NormalJacobian>)> {
    let (w, h) = (depth.width, depth.height);
    if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
        return None;
    }
    let mut idx = [0usize; 7];
    for (k, slot) in idx.iter_mut().enumerate() {
        let i = stencil_index(w, h, u, v, k)?;
        if !depth.valid[i] {
            return None;
        }
        *slot = i;
    }
    let p: [Vector3<f64>; 7] = std::array::from_fn(|k| rays[idx[k]] * depth.data[idx[k]]);
    let mut sum = Vector3::zeros();
    for &(a, b) in &FAN {
        sum += (p[a] - p[0]).cross(&(p[b] - p[0]));
    }
    let len = sum.norm();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    let n = -sum / len;
    if n.dot(&rays[idx[0]]) >= 0.0 {
        return None;
    }
    if !want_jacobian {
        return Some((n, None));
    }

    // dS/dd_k, then dn/dS = -(I - s s^T) / |S| with s = S/|S| = -n
    let mut ds = [Vector3::zeros(); 7];
    for &(a, b) in &FAN {
        let ea = p[a] - p[0];
        let eb = p[b] - p[0];
        ds[a] += rays[idx[a]].cross(&eb);
        ds[b] += ea.cross(&rays[idx[b]]);
        ds[0] += rays[idx[0]].cross(&(ea - eb));
    }
    let proj = -(Matrix3::identity() - n * n.transpose()) / len;
    let jac = NormalJacobian { d_depth: std::array::from_fn(|k| proj * ds[k]) };
    Some((n, Some(jac)))
}

fn check_dims(rays: &[Vector3<f64>], depth: &DepthMap) -> Result<()> {
    if rays.len() != depth.data.len() {
        return Err(Error::domain("ray table does not match depth map"));
    }
    Ok(())
}

/// Normals plus their depth Jacobians, given precomputed per-pixel rays.
pub fn normals_with_jacobian(rays: &[Vector3<f64>], depth: &DepthMap) -> Result<(NormalMap, Vec<Option<NormalJacobian>>)> {
    check_dims(rays, depth)?;
    let w = depth.width;
    let per_pixel: Vec<_> = (0..depth.data.len())
        .into_par_iter()
        .map(|i| pixel_normal(rays, depth, i % w, i / w, true))
        .collect();
    let mut map = NormalMap::empty(w, depth.height);
    let mut jac = Vec::with_capacity(per_pixel.len());
    for (i, entry) in per_pixel.into_iter().enumerate() {
        match entry {
            Some((n, j)) => {
                map.data[i] = n;
                map.valid[i] = true;
                jac.push(j);
            }
            None => jac.push(None),
        }
    }
    Ok((map, jac))
}

pub fn normals_from_depth(camera: &CameraModel, depth: &DepthMap) -> Result<NormalMap> {
    if (camera.width, camera.height) != (depth.width, depth.height) {
        return Err(Error::domain("depth map does not match camera"));
    }
    if depth.width < 3 || depth.height < 3 {
        return Err(Error::domain("normals need at least a 3x3 depth map"));
    }
    let rays = camera.rays();
    let w = depth.width;
    let per_pixel: Vec<_> = (0..depth.data.len())
        .into_par_iter()
        .map(|i| pixel_normal(&rays, depth, i % w, i / w, false).map(|(n, _)| n))
        .collect();
    let mut map = NormalMap::empty(w, depth.height);
    for (i, n) in per_pixel.into_iter().enumerate() {
        if let Some(n) = n {
            map.data[i] = n;
            map.valid[i] = true;
        }
    }
    Ok(map)
}

/// Chains per-pixel `dL/dn` into `dL/dd` through the stencil, gathering in a
/// fixed order so the result does not depend on scheduling.
pub(crate) fn backprop_normals(width: usize, height: usize, jac: &[Option<NormalJacobian>], grad_n: &[Vector3<f64>]) -> Vec<f64> {
    (0..width * height)
        .into_par_iter()
        .map(|j| {
            let (u, v) = ((j % width) as isize, (j / width) as isize);
            let mut acc = 0.0;
            // j is stencil entry k of pixel i = j - offset_k
            for (k, &(du, dv)) in STENCIL.iter().enumerate() {
                let (iu, iv) = (u - du, v - dv);
                if iu < 0 || iv < 0 || iu >= width as isize || iv >= height as isize {
                    continue;
                }
                let i = iv as usize * width + iu as usize;
                if let Some(jc) = &jac[i] {
                    acc += grad_n[i].dot(&jc.d_depth[k]);
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::DepthMap;

    fn mae_degrees(a: &NormalMap, truth: impl Fn(usize) -> Vector3<f64>) -> f64 {
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..a.data.len() {
            if a.valid[i] {
                sum += a.data[i].dot(&truth(i)).clamp(-1.0, 1.0).acos().to_degrees();
                n += 1;
            }
        }
        sum / n as f64
    }

    #[test]
    fn fronto_parallel_plane_faces_camera() {
        let cam = CameraModel::pinhole(32, 24, 30.0, 30.0, 15.5, 11.5).unwrap();
        let rays = cam.rays();
        // constant z = 2 plane
        let depth = DepthMap::from_values(32, 24, rays.iter().map(|r| 2.0 / r.z).collect()).unwrap();
        let normals = normals_from_depth(&cam, &depth).unwrap();
        assert_eq!(normals.valid.iter().filter(|&&v| v).count(), 30 * 22);
        for i in 0..normals.data.len() {
            if normals.valid[i] {
                assert!((normals.data[i] + Vector3::z()).norm() < 1e-6);
            }
        }
        normals.validate(Some(&rays)).unwrap();
    }

    #[test]
    fn slanted_plane_matches_analytic_normal() {
        let cam = CameraModel::pinhole(128, 128, 110.0, 110.0, 63.5, 63.5).unwrap();
        let rays = cam.rays();
        let (z0, a) = (2.0, 0.6);
        // plane z = z0 + a x, ray depth d = z0 / (r_z - a r_x)
        let depth = DepthMap::from_values(128, 128, rays.iter().map(|r| z0 / (r.z - a * r.x)).collect()).unwrap();
        let normals = normals_from_depth(&cam, &depth).unwrap();
        let truth = Vector3::new(a, 0.0, -1.0).normalize();
        let mae = mae_degrees(&normals, |_| truth);
        assert!(mae < 0.5, "mae {mae}");
    }

    #[test]
    fn sphere_normals_match_analytic() {
        let cam = CameraModel::pinhole(128, 128, 90.0, 90.0, 63.5, 63.5).unwrap();
        let rays = cam.rays();
        let (c, radius) = (Vector3::new(0.1, -0.05, 3.0), 1.2);
        let hit = |r: &Vector3<f64>| {
            let b = r.dot(&c);
            let disc = b * b - (c.norm_squared() - radius * radius);
            if disc <= 0.0 { 0.0 } else { b - disc.sqrt() }
        };
        let depth = DepthMap::from_values(128, 128, rays.iter().map(hit).collect()).unwrap();
        assert!(depth.valid_count() > 3000);
        let normals = normals_from_depth(&cam, &depth).unwrap();
        normals.validate(Some(&rays)).unwrap();
        let mae = mae_degrees(&normals, |i| (rays[i] * depth.data[i] - c).normalize());
        assert!(mae < 2.0, "mae {mae}");
    }

    #[test]
    fn jacobian_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cam = CameraModel::pinhole(8, 8, 8.0, 8.0, 3.5, 3.5).unwrap();
        let rays = cam.rays();
        let data: Vec<f64> = (0..64).map(|_| rng.random_range(1.0..1.3)).collect();
        let depth = DepthMap::from_values(8, 8, data).unwrap();
        let (n0, jac) = normals_with_jacobian(&rays, &depth).unwrap();
        for i in 0..64 {
            let Some(j) = jac[i] else { continue };
            let (u, v) = (i % 8, i / 8);
            for k in 0..7 {
                let idx = stencil_index(8, 8, u, v, k).unwrap();
                let h = 1e-6;
                let mut dp = depth.clone();
                dp.data[idx] += h;
                let mut dm = depth.clone();
                dm.data[idx] -= h;
                let np = normals_with_jacobian(&rays, &dp).unwrap().0.data[i];
                let nm = normals_with_jacobian(&rays, &dm).unwrap().0.data[i];
                let fd = (np - nm) / (2.0 * h);
                assert!((fd - j.d_depth[k]).norm() < 1e-6 * (1.0 + fd.norm()), "pixel {i} k {k}");
            }
            assert!((n0.data[i].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn border_and_invalid_neighbors_masked() {
        let cam = CameraModel::pinhole(5, 5, 5.0, 5.0, 2.0, 2.0).unwrap();
        let mut depth = DepthMap::constant(5, 5, 1.0);
        depth.valid[12] = false;
        let normals = normals_from_depth(&cam, &depth).unwrap();
        // only (1,1) and (3,3) have six-neighborhoods avoiding the hole (SE is not in the stencil)
        let valid: Vec<usize> = (0..25).filter(|&i| normals.valid[i]).collect();
        assert_eq!(valid, vec![6, 18]);
        assert!(normals_from_depth(&CameraModel::pinhole(2, 2, 1.0, 1.0, 0.5, 0.5).unwrap(), &DepthMap::constant(2, 2, 1.0)).is_err());
    }
}
