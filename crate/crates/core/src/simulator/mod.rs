//! Ray-cast ground truth for triangle-mesh scenes.
//!
//! Every pixel's unit ray is cast from the posed camera; the nearest hit gives
//! the depth (distance along the ray), the face's albedo and the face's
//! geometric normal turned toward the camera. The pixel is then shaded with
//! the same per-pixel model the optimizer inverts, so a frame's fields always
//! re-render to its image.

pub mod bvh;
pub mod io;
pub mod scenes;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::imaging::{AlbedoMap, DepthMap, Image, NormalMap};
use crate::photometry::render_ray;
use crate::rig::PhotometricRig;

pub use bvh::{intersect_brute_force, intersect_triangle, Bvh, Hit};
pub use io::{read_frame, read_mesh, read_obj, write_frame, write_mesh, write_obj, FrameManifest};
pub use scenes::{make_plane_mesh, make_sphere_mesh, make_tube_mesh, make_tube_scene, with_seeded_albedo, TubeOptions};

/// Triangle mesh with one (hue, saturation) albedo per face.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub face_albedo: Vec<[f64; 2]>,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        if self.faces.len() != self.face_albedo.len() {
            return Err(Error::domain(format!("{} faces but {} albedo entries", self.faces.len(), self.face_albedo.len())));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::domain(format!("vertex {i} is not finite")));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&k| k >= self.vertices.len()) {
                return Err(Error::domain(format!("face {i} indexes a missing vertex")));
            }
            if self.raw_normal(i).norm() == 0.0 {
                return Err(Error::domain(format!("face {i} is degenerate")));
            }
        }
        for (i, &[h, s]) in self.face_albedo.iter().enumerate() {
            if !((0.0..1.0).contains(&h) && (0.0..=1.0).contains(&s)) {
                return Err(Error::domain(format!("face {i} albedo out of range")));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [&Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [&self.vertices[a], &self.vertices[b], &self.vertices[c]]
    }

    fn raw_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    /// Unit normal following the face's winding.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        self.raw_normal(face).normalize()
    }

    /// Concatenation of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len();
        let mut out = self.clone();
        out.vertices.extend_from_slice(&other.vertices);
        out.faces.extend(other.faces.iter().map(|f| f.map(|k| k + offset)));
        out.face_albedo.extend_from_slice(&other.face_albedo);
        out
    }
}

/// Ground-truth fields of one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub image: Image,
    pub depth: DepthMap,
    pub albedo: AlbedoMap,
    pub normals: NormalMap,
    /// Camera in the scene frame: maps camera coordinates to scene coordinates.
    pub pose: PoseSE3,
}

/// A mesh with its acceleration structure, reusable across poses.
#[derive(Debug, Clone)]
pub struct MeshScene {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
}

impl MeshScene {
    pub fn new(mesh: TriangleMesh) -> Result<Self> {
        mesh.validate()?;
        if mesh.faces.is_empty() {
            return Err(Error::domain("mesh has no faces"));
        }
        let bvh = Bvh::build(&mesh);
        Ok(Self { mesh, bvh })
    }

    pub fn render(&self, rig: &PhotometricRig, pose: &PoseSE3) -> Result<SceneFrame> {
        rig.validate()?;
        pose.validate()?;
        let cam = &rig.camera;
        let (w, h) = (cam.width, cam.height);
        let rays = cam.rays();
        let origin = pose.translation;
        let rt = pose.rotation.transpose();
        let pixels: Vec<Option<(f64, [f64; 2], Vector3<f64>, [f64; 3])>> = rays
            .par_iter()
            .map(|ray| {
                let dir = pose.rotation * ray;
                let hit = self.bvh.intersect(&self.mesh, &origin, &dir)?;
                let mut n = rt * self.mesh.face_normal(hit.face);
                let facing = n.dot(ray);
                if facing == 0.0 {
                    return None;
                }
                if facing > 0.0 {
                    n = -n;
                }
                let albedo = self.mesh.face_albedo[hit.face];
                let px = render_ray(rig, ray, hit.t, albedo, &n).ok()?;
                Some((hit.t, albedo, n, px.color))
            })
            .collect();
        let mut frame = SceneFrame {
            image: Image::filled(w, h, [0.0; 3]),
            depth: DepthMap::empty(w, h),
            albedo: AlbedoMap::white(w, h),
            normals: NormalMap::empty(w, h),
            pose: *pose,
        };
        for (i, p) in pixels.into_iter().enumerate() {
            if let Some((d, a, n, c)) = p {
                frame.depth.data[i] = d;
                frame.depth.valid[i] = true;
                frame.albedo.data[i] = a;
                frame.normals.data[i] = n;
                frame.normals.valid[i] = true;
                frame.image.data[i] = c;
            }
        }
        Ok(frame)
    }
}

/// Casts every pixel of the posed camera into `mesh`.
pub fn raycast_frame(rig: &PhotometricRig, mesh: &TriangleMesh, pose: &PoseSE3) -> Result<SceneFrame> {
    MeshScene::new(mesh.clone())?.render(rig, pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometry::render_image;
    use crate::rig::CameraModel;

    fn rig(w: usize, h: usize, f: f64) -> PhotometricRig {
        PhotometricRig::colocated(CameraModel::pinhole(w, h, f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0).unwrap())
    }

    #[test]
    fn sphere_center_depth() {
        let mesh = make_sphere_mesh(Vector3::new(0.0, 0.0, 2.0), 1.0, 32, 64, [0.0, 0.0]);
        let frame = raycast_frame(&rig(33, 33, 30.0), &mesh, &PoseSE3::identity()).unwrap();
        let c = 16 * 33 + 16;
        assert!(frame.depth.valid[c]);
        assert!((frame.depth.data[c] - 1.0).abs() < 1e-12, "{}", frame.depth.data[c]);
        assert!(!frame.depth.valid[0]);
    }

    #[test]
    fn fronto_parallel_quad_center_is_one() {
        let mesh = make_plane_mesh(Vector3::new(0.0, 0.0, 1.0), Vector3::x() * 10.0, Vector3::y() * 10.0, 4, [0.0, 0.0]);
        let frame = raycast_frame(&rig(9, 9, 8.0), &mesh, &PoseSE3::identity()).unwrap();
        let c = 4 * 9 + 4;
        assert!((frame.image.data[c][0] - 1.0).abs() < 1e-12);
        assert!(frame.depth.valid.iter().all(|&v| v));
        assert!((frame.normals.data[c] - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn frames_rerender_to_their_image() {
        let r = PhotometricRig { gain: 0.8, gamma: 2.2, ..rig(48, 40, 30.0) };
        let mesh = make_tube_scene(1.0, 6.0, 3, 11);
        let pose = PoseSE3::from_axis_angle(Vector3::new(0.3, 1.0, 0.0), 0.1, Vector3::new(0.1, -0.05, 0.2));
        let frame = raycast_frame(&r, &mesh, &pose).unwrap();
        assert!(frame.depth.valid_count() > 1000);
        let again = render_image(&r, &frame.depth, &frame.albedo, &frame.normals).unwrap();
        for i in 0..again.data.len() {
            if frame.depth.valid[i] {
                for c in 0..3 {
                    assert!((again.data[i][c] - frame.image.data[i][c]).abs() < 1e-6);
                }
            }
        }
        frame.normals.validate(Some(&r.camera.rays())).unwrap();
    }

    #[test]
    fn empty_and_invalid_meshes_rejected() {
        let empty = TriangleMesh { vertices: vec![], faces: vec![], face_albedo: vec![] };
        assert!(raycast_frame(&rig(4, 4, 4.0), &empty, &PoseSE3::identity()).is_err());
        let degenerate = TriangleMesh { vertices: vec![Vector3::zeros(); 3], faces: vec![[0, 1, 2]], face_albedo: vec![[0.0, 0.0]] };
        assert!(degenerate.validate().is_err());
    }

    #[test]
    fn all_miss_frame_is_fully_masked() {
        let mesh = make_plane_mesh(Vector3::new(0.0, 0.0, -1.0), Vector3::x(), Vector3::y(), 1, [0.0, 0.0]);
        let frame = raycast_frame(&rig(4, 4, 4.0), &mesh, &PoseSE3::identity()).unwrap();
        assert_eq!(frame.depth.valid_count(), 0);
    }
}
