//! Rigid poses, point clouds, normals from depth and cross-view warping.

pub(crate) mod normals;
pub mod ply;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, Image, Rgb, ScalarField};
use crate::rig::CameraModel;

pub use normals::{normals_from_depth, normals_with_jacobian, NormalJacobian, STENCIL};

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation by `angle` radians about `axis`, followed by translation `t`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self { rotation: *rot.matrix(), translation: t }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::domain("pose has non-finite entries"));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("rotation is not in SO(3): |R^T R - I| = {ortho:e}, det = {det}")));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Geodesic rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// JSON form of a pose: `{"R": [9 floats, row-major], "t": [3 floats]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseJson {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&PoseSE3> for PoseJson {
    fn from(p: &PoseSE3) -> Self {
        let m = &p.rotation;
        Self {
            r: [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseJson> for PoseSE3 {
    type Error = Error;

    fn try_from(p: PoseJson) -> Result<Self> {
        PoseSE3::new(Matrix3::from_row_slice(&p.r), Vector3::from(p.t))
    }
}

impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PoseJson::deserialize(d)?;
        PoseSE3::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<Rgb>>,
    /// Per-point total standard deviation, meters.
    pub sigma: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        Self { points, colors: None, sigma: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.colors.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::domain("color array length differs from point count"));
        }
        if let Some(s) = &self.sigma {
            if s.len() != n {
                return Err(Error::domain("sigma array length differs from point count"));
            }
            if s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::domain("sigma must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn transformed(&self, pose: &PoseSE3) -> Self {
        Self { points: self.points.iter().map(|p| pose.apply(p)).collect(), ..self.clone() }
    }

    /// Subset of points in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            sigma: self.sigma.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// One point `d * r` per valid depth pixel, in row-major order.
pub fn backproject_cloud(camera: &CameraModel, depth: &DepthMap, image: Option<&Image>, sigma: Option<&ScalarField>) -> Result<PointCloud> {
    let dims = (camera.width, camera.height);
    if (depth.width, depth.height) != dims
        || image.is_some_and(|i| (i.width, i.height) != dims)
        || sigma.is_some_and(|s| (s.width, s.height) != dims)
    {
        return Err(Error::domain("field dimensions do not match the camera"));
    }
    let rays = camera.rays();
    let mut cloud = PointCloud {
        points: Vec::new(),
        colors: image.map(|_| Vec::new()),
        sigma: sigma.map(|_| Vec::new()),
    };
    for i in 0..depth.data.len() {
        if !depth.valid[i] || sigma.is_some_and(|s| !s.valid[i]) {
            continue;
        }
        cloud.points.push(rays[i] * depth.data[i]);
        if let (Some(c), Some(img)) = (cloud.colors.as_mut(), image) {
            c.push(img.data[i]);
        }
        if let (Some(s), Some(field)) = (cloud.sigma.as_mut(), sigma) {
            s.push(field.data[i]);
        }
    }
    Ok(cloud)
}

/// Moves `pixel` observed at depth `depth` in `src` into `dst` via `pose`
/// (source camera frame to destination camera frame).
pub fn warp_pixel(src: &CameraModel, dst: &CameraModel, pose: &PoseSE3, pixel: Vector2<f64>, depth: f64) -> Result<Vector2<f64>> {
    if !(depth > 0.0) {
        return Err(Error::domain(format!("depth must be positive, got {depth}")));
    }
    let x = src.back_project(pixel)? * depth;
    dst.project(pose.apply(&x))
}
