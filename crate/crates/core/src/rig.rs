//! Camera geometry and the spotlight photometric model.
//!
//! The camera maps pixels to unit rays (`back_project`) and camera-frame points
//! to pixels (`project`). The light is a point source at `position` emitting
//! around `axis` with radial attenuation
//!
//! ```text
//! R(psi) = exp(-mu * (1 - cos psi))
//! E(x)   = sigma0 * R(psi) / |x - x_l|^2
//! ```
//!
//! where `psi` is the angle between the light axis and the direction from the
//! light to the surface point `x`.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraKind {
    Pinhole,
    /// Equidistant fisheye: the radial pixel distance is proportional to the
    /// off-axis angle, `r = f * theta`.
    FisheyeEquidistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub kind: CameraKind,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn pinhole(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = Self { kind: CameraKind::Pinhole, width, height, fx, fy, cx, cy };
        cam.validate()?;
        Ok(cam)
    }

    pub fn fisheye(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = Self { kind: CameraKind::FisheyeEquidistant, width, height, fx, fy, cx, cy };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("camera has zero size"));
        }
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::domain(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy)));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::domain(format!("principal point ({}, {}) outside image", self.cx, self.cy)));
        }
        if self.kind == CameraKind::FisheyeEquidistant {
            // Every in-bounds pixel must map into the forward hemisphere.
            let corners = [
                (0.0, 0.0),
                (self.width as f64 - 1.0, 0.0),
                (0.0, self.height as f64 - 1.0),
                (self.width as f64 - 1.0, self.height as f64 - 1.0),
            ];
            for (u, v) in corners {
                let mx = (u - self.cx) / self.fx;
                let my = (v - self.cy) / self.fy;
                if (mx * mx + my * my).sqrt() >= std::f64::consts::FRAC_PI_2 {
                    return Err(Error::domain("fisheye field of view reaches 180 degrees inside the image"));
                }
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= self.width as f64 - 1.0
            && pixel.y <= self.height as f64 - 1.0
    }

    /// Unit viewing ray through `pixel`. Errors for pixels outside the image.
    pub fn back_project(&self, pixel: Vector2<f64>) -> Result<Vector3<f64>> {
        if !self.contains(pixel) {
            return Err(Error::domain(format!("pixel ({}, {}) outside image", pixel.x, pixel.y)));
        }
        Ok(self.ray_unchecked(pixel))
    }

    pub(crate) fn ray_unchecked(&self, pixel: Vector2<f64>) -> Vector3<f64> {
        let mx = (pixel.x - self.cx) / self.fx;
        let my = (pixel.y - self.cy) / self.fy;
        match self.kind {
            CameraKind::Pinhole => Vector3::new(mx, my, 1.0).normalize(),
            CameraKind::FisheyeEquidistant => {
                let theta = (mx * mx + my * my).sqrt();
                if theta < 1e-12 {
                    return Vector3::z();
                }
                let s = theta.sin() / theta;
                Vector3::new(mx * s, my * s, theta.cos())
            }
        }
    }

    /// Rays for every pixel in row-major order.
    pub fn rays(&self) -> Vec<Vector3<f64>> {
        (0..self.height)
            .flat_map(|v| (0..self.width).map(move |u| (u, v)))
            .map(|(u, v)| self.ray_unchecked(Vector2::new(u as f64, v as f64)))
            .collect()
    }

    pub fn project(&self, point: Vector3<f64>) -> Result<Vector2<f64>> {
        match self.kind {
            CameraKind::Pinhole => {
                if !(point.z > 0.0) {
                    return Err(Error::Projection(format!("point behind camera (z = {})", point.z)));
                }
                Ok(Vector2::new(
                    self.fx * point.x / point.z + self.cx,
                    self.fy * point.y / point.z + self.cy,
                ))
            }
            CameraKind::FisheyeEquidistant => {
                if !(point.z > 0.0) {
                    return Err(Error::Projection(format!("point outside forward hemisphere (z = {})", point.z)));
                }
                let rho = (point.x * point.x + point.y * point.y).sqrt();
                if rho < 1e-300 {
                    return Ok(Vector2::new(self.cx, self.cy));
                }
                let theta = rho.atan2(point.z);
                Ok(Vector2::new(
                    self.fx * theta * point.x / rho + self.cx,
                    self.fy * theta * point.y / rho + self.cy,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightModel {
    /// Light position in the camera frame, meters.
    pub position: Vector3<f64>,
    /// Principal emission direction, unit length.
    pub axis: Vector3<f64>,
    /// Spread factor of the radial attenuation.
    pub mu: f64,
    /// Maximum radiance.
    pub sigma0: f64,
}

impl Default for LightModel {
    fn default() -> Self {
        Self { position: Vector3::zeros(), axis: Vector3::z(), mu: 0.0, sigma0: 1.0 }
    }
}

impl LightModel {
    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("light position not finite"));
        }
        if ((self.axis.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::domain(format!("light axis must be unit length, |axis| = {}", self.axis.norm())));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::domain(format!("spread mu must be >= 0, got {}", self.mu)));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::domain(format!("sigma0 must be > 0, got {}", self.sigma0)));
        }
        Ok(())
    }

    pub fn radial_falloff(&self, psi: f64) -> f64 {
        (-self.mu * (1.0 - psi.cos())).exp()
    }

    /// Irradiance reaching camera-frame point `x`.
    pub fn irradiance_at(&self, x: Vector3<f64>) -> Result<f64> {
        let v = x - self.position;
        let dist2 = v.norm_squared();
        if dist2 == 0.0 {
            return Err(Error::domain("surface point coincides with the light"));
        }
        let cos_psi = self.axis.dot(&v) / dist2.sqrt();
        Ok(self.sigma0 * (-self.mu * (1.0 - cos_psi)).exp() / dist2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotometricRig {
    pub camera: CameraModel,
    pub light: LightModel,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl PhotometricRig {
    /// Rig with a light at the camera center pointing down the optical axis,
    /// unit gain and linear response.
    pub fn colocated(camera: CameraModel) -> Self {
        Self { camera, light: LightModel::default(), gain: 1.0, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.light.validate()?;
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::domain(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rig: Self = serde_json::from_str(text).map_err(|e| Error::format(format!("rig file: {e}")))?;
        rig.validate().map_err(|e| Error::format(format!("rig file: {e}")))?;
        Ok(rig)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, LN_2};

    fn pinhole() -> CameraModel {
        CameraModel::pinhole(101, 101, 100.0, 100.0, 50.0, 50.0).unwrap()
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let r = pinhole().back_project(Vector2::new(50.0, 50.0)).unwrap();
        assert!((r - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn pinhole_ray_at_45_degrees() {
        let cam = CameraModel::pinhole(200, 101, 100.0, 100.0, 50.0, 50.0).unwrap();
        let r = cam.back_project(Vector2::new(150.0, 50.0)).unwrap();
        let expected = Vector3::new(1.0, 0.0, 1.0).normalize();
        assert!((r - expected).norm() < 1e-15);
    }

    #[test]
    fn fisheye_equidistant_angle() {
        let cam = CameraModel::fisheye(201, 201, 100.0, 100.0, 100.0, 100.0).unwrap();
        let r = cam.back_project(Vector2::new(100.0 + 100.0 * FRAC_PI_4, 100.0)).unwrap();
        assert!((r.z.acos() - FRAC_PI_4).abs() < 1e-12);
        assert!((r.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_bounds_pixel_rejected() {
        assert!(matches!(pinhole().back_project(Vector2::new(-1.0, 3.0)), Err(Error::Domain(_))));
        assert!(pinhole().back_project(Vector2::new(3.0, 101.0)).is_err());
    }

    #[test]
    fn project_examples() {
        let cam = pinhole();
        let p = cam.project(Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Vector2::new(50.0, 50.0));
        let p = cam.project(Vector3::new(1.0, 0.0, 1.0)).unwrap();
        assert!((p - Vector2::new(150.0, 50.0)).norm() < 1e-12);
        assert!(matches!(cam.project(Vector3::new(0.0, 0.0, -1.0)), Err(Error::Projection(_))));
    }

    #[test]
    fn fisheye_rejects_half_sphere_fov() {
        assert!(CameraModel::fisheye(101, 101, 10.0, 10.0, 50.0, 50.0).is_err());
    }

    #[test]
    fn radial_falloff_examples() {
        let mut light = LightModel::default();
        assert_eq!(light.radial_falloff(1.234), 1.0);
        light.mu = 3.0;
        assert_eq!(light.radial_falloff(0.0), 1.0);
        light.mu = LN_2;
        assert!((light.radial_falloff(FRAC_PI_2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn irradiance_examples() {
        let mut light = LightModel::default();
        assert!((light.irradiance_at(Vector3::new(0.0, 0.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((light.irradiance_at(Vector3::new(0.0, 0.0, 2.0)).unwrap() - 0.25).abs() < 1e-15);
        light.sigma0 = 2.0;
        light.mu = LN_2;
        assert!((light.irradiance_at(Vector3::new(1.0, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(light.irradiance_at(Vector3::zeros()), Err(Error::Domain(_))));
    }

    #[test]
    fn rig_json_rejects_bad_axis() {
        let rig = PhotometricRig::colocated(pinhole());
        let text = rig.to_json();
        assert_eq!(PhotometricRig::from_json(&text).unwrap(), rig);
        let bad = text.replacen("\"mu\": 0.0", "\"mu\": -1.0", 1);
        assert!(matches!(PhotometricRig::from_json(&bad), Err(Error::Format(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn round_trip_pinhole(u in 0.0..100.0f64, v in 0.0..100.0f64, d in 0.01..100.0f64) {
                let cam = pinhole();
                let p = Vector2::new(u, v);
                let r = cam.back_project(p).unwrap();
                prop_assert!((r.norm() - 1.0).abs() < 1e-12);
                prop_assert!(r.z > 0.0);
                let q = cam.project(r * d).unwrap();
                prop_assert!((q - p).norm() < 1e-6);
            }

            #[test]
            fn round_trip_fisheye(u in 0.0..100.0f64, v in 0.0..100.0f64, d in 0.01..100.0f64) {
                let cam = CameraModel::fisheye(101, 101, 60.0, 62.0, 50.0, 50.0).unwrap();
                let p = Vector2::new(u, v);
                let r = cam.back_project(p).unwrap();
                prop_assert!((r.norm() - 1.0).abs() < 1e-12);
                prop_assert!(r.z > 0.0);
                let q = cam.project(r * d).unwrap();
                prop_assert!((q - p).norm() < 1e-6);
            }

            #[test]
            fn inverse_square_scaling(
                dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in 0.1..1.0f64,
                d in 0.01..100.0f64, mu in 0.0..3.0f64,
            ) {
                let light = LightModel { mu, ..LightModel::default() };
                let u = Vector3::new(dx, dy, dz).normalize();
                let base = light.irradiance_at(u).unwrap();
                let scaled = light.irradiance_at(u * d).unwrap() * d * d;
                prop_assert!(((scaled - base) / base).abs() < 1e-12);
            }

            #[test]
            fn falloff_bounds(mu in 0.0..10.0f64, psi in 0.0..std::f64::consts::PI) {
                let light = LightModel { mu, ..LightModel::default() };
                let r = light.radial_falloff(psi);
                prop_assert!(r <= 1.0 && r >= (-2.0 * mu).exp() * (1.0 - 1e-12));
            }
        }
    }
}
