//! Dense per-pixel fields and color conversion.
//!
//! All fields are stored row-major, `index = v * width + u`. Values are kept in
//! `f64` in memory; the on-disk raster format (see [`raster`]) stores `f32`.

pub mod raster;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use raster::{read_field, write_field, Raster};

pub type Rgb = [f64; 3];

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::domain(format!("{what}: zero-sized field")));
    }
    if width * height != len {
        return Err(Error::domain(format!("{what}: {} values for {width}x{height}", len)));
    }
    Ok(())
}

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Rgb>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        let img = Self { width, height, data };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height, self.data.len(), "image")?;
        for (i, px) in self.data.iter().enumerate() {
            if px.iter().any(|c| !(c.is_finite() && (0.0..=1.0).contains(c))) {
                return Err(Error::domain(format!("image pixel {i} out of [0,1]: {px:?}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Rgb {
        self.data[v * self.width + u]
    }

    pub fn max_channel(&self, i: usize) -> f64 {
        let p = self.data[i];
        p[0].max(p[1]).max(p[2])
    }
}

/// Per-pixel depth along the unit viewing ray, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        let n = width * height;
        Self { width, height, data: vec![depth; n], valid: vec![true; n] }
    }

    /// All-invalid map.
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, data: vec![0.0; n], valid: vec![false; n] }
    }

    /// Builds a map where every positive finite value is valid and everything
    /// else is masked out.
    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len(), "depth")?;
        let valid = data.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self { width, height, data, valid })
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height, self.data.len(), "depth")?;
        check_dims(self.width, self.height, self.valid.len(), "depth mask")?;
        for (i, (&d, &ok)) in self.data.iter().zip(&self.valid).enumerate() {
            if ok && !(d.is_finite() && d > 0.0) {
                return Err(Error::domain(format!("depth pixel {i} is valid but not positive: {d}")));
            }
        }
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_values(&self) -> Vec<f64> {
        self.data.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&d, _)| d).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { data: self.data.iter().map(|d| d * s).collect(), ..self.clone() }
    }
}

/// Per-pixel albedo as (hue, saturation); value is implicitly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 2]>,
}

impl AlbedoMap {
    pub fn white(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![[0.0, 0.0]; width * height] }
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height, self.data.len(), "albedo")?;
        for (i, &[h, s]) in self.data.iter().enumerate() {
            if !((0.0..1.0).contains(&h) && (0.0..=1.0).contains(&s)) {
                return Err(Error::domain(format!("albedo pixel {i} out of range: h={h} s={s}")));
            }
        }
        Ok(())
    }

    pub fn rgb(&self, i: usize) -> Rgb {
        let [h, s] = self.data[i];
        hsv_to_rgb(h, s, 1.0)
    }
}

/// Per-pixel unit surface normal in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl NormalMap {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { width, height, data: vec![Vector3::zeros(); n], valid: vec![false; n] }
    }

    pub fn constant(width: usize, height: usize, n: Vector3<f64>) -> Self {
        let len = width * height;
        Self { width, height, data: vec![n.normalize(); len], valid: vec![true; len] }
    }

    /// Checks unit length at valid pixels, and camera-facing orientation when
    /// `rays` is given.
    pub fn validate(&self, rays: Option<&[Vector3<f64>]>) -> Result<()> {
        check_dims(self.width, self.height, self.data.len(), "normals")?;
        check_dims(self.width, self.height, self.valid.len(), "normals mask")?;
        for i in 0..self.data.len() {
            if !self.valid[i] {
                continue;
            }
            let n = self.data[i];
            if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::domain(format!("normal {i} not unit: |n| = {}", n.norm())));
            }
            if let Some(rays) = rays {
                if n.dot(&rays[i]) >= 0.0 {
                    return Err(Error::domain(format!("normal {i} faces away from the camera")));
                }
            }
        }
        Ok(())
    }
}

/// Non-negative per-pixel scalar with a mask; used for variances and standard
/// deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ScalarField {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        let n = width * height;
        Self { width, height, data: vec![value; n], valid: vec![true; n] }
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height, self.data.len(), "scalar field")?;
        check_dims(self.width, self.height, self.valid.len(), "scalar mask")?;
        for (i, (&x, &ok)) in self.data.iter().zip(&self.valid).enumerate() {
            if ok && !(x.is_finite() && x >= 0.0) {
                return Err(Error::domain(format!("scalar pixel {i} is valid but negative or non-finite: {x}")));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&x| f(x)).collect(), ..self.clone() }
    }
}

/// Hexcone HSV to RGB. Hue is periodic with period 1.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h6 = 6.0 * h.rem_euclid(1.0);
    let channel = |n: f64| {
        let k = (n + h6).rem_euclid(6.0);
        v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
    };
    [channel(5.0), channel(3.0), channel(1.0)]
}

/// Partial derivatives of `hsv_to_rgb(h, s, 1)` with respect to hue and
/// saturation, one `[d/dh, d/ds]` pair per channel. Piecewise linear; at sector
/// boundaries the right-hand derivative is returned.
pub fn hsv_to_rgb_jacobian(h: f64, s: f64) -> [[f64; 2]; 3] {
    let h6 = 6.0 * h.rem_euclid(1.0);
    let channel = |n: f64| {
        let k = (n + h6).rem_euclid(6.0);
        let (w, dw_dk) = if k < 4.0 - k { (k, 1.0) } else { (4.0 - k, -1.0) };
        if w >= 1.0 {
            [0.0, -1.0]
        } else if w <= 0.0 {
            [0.0, 0.0]
        } else {
            [-s * 6.0 * dw_dk, -w]
        }
    };
    [channel(5.0), channel(3.0), channel(1.0)]
}

/// Inverse of [`hsv_to_rgb`], returning `(h, s, v)` with `h` in `[0, 1)`.
pub fn rgb_to_hsv(rgb: Rgb) -> (f64, f64, f64) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if max <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = chroma / max;
    if chroma <= 0.0 {
        return (0.0, 0.0, max);
    }
    let h6 = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let h = (h6 / 6.0).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    let h = if h >= 1.0 { 0.0 } else { h };
    (h, s, max)
}
