//! Forward rendering of a Lambertian surface lit by the rig's spotlight.
//!
//! For pixel ray `r`, depth `d`, albedo `rho` and normal `n`:
//!
//! ```text
//! x      = d r
//! L_c    = sigma0 R(psi) / |x - x_l|^2 * max(l . n, 0) * rho_c * g
//! I_c    = L_c ^ (1 / gamma)
//! ```
//!
//! with `l` the unit vector from the surface point to the light. Every pixel
//! carries the exact partial derivatives of `I_c` with respect to depth, the
//! (hue, saturation) albedo coordinates and the normal, so losses can chain
//! through the renderer without automatic differentiation.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{hsv_to_rgb, hsv_to_rgb_jacobian, AlbedoMap, DepthMap, Image, NormalMap, Rgb};
use crate::rig::PhotometricRig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedPixel {
    /// Output color, clamped to `[0, 1]`.
    pub color: Rgb,
    /// Gamma-corrected color before clamping.
    pub pre_clamp: Rgb,
    /// Linear radiance before gamma correction.
    pub linear: Rgb,
    /// `dI_c / dd` per channel, evaluated on the pre-clamp value.
    pub d_depth: Vector3<f64>,
    /// `dI_c / d(h, s)`, one row per channel.
    pub d_albedo: [[f64; 2]; 3],
    /// `dI_c / dn`, one row per channel.
    pub d_normal: Matrix3<f64>,
    pub valid: bool,
}

impl RenderedPixel {
    pub fn invalid() -> Self {
        Self {
            color: [0.0; 3],
            pre_clamp: [0.0; 3],
            linear: [0.0; 3],
            d_depth: Vector3::zeros(),
            d_albedo: [[0.0; 2]; 3],
            d_normal: Matrix3::zeros(),
            valid: false,
        }
    }
}

/// Renders one pixel given its unit ray.
pub fn render_ray(rig: &PhotometricRig, ray: &Vector3<f64>, depth: f64, albedo: [f64; 2], normal: &Vector3<f64>) -> Result<RenderedPixel> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::domain(format!("depth must be positive, got {depth}")));
    }
    let light = &rig.light;
    let x = ray * depth;
    let v = x - light.position;
    let dist2 = v.norm_squared();
    if dist2 == 0.0 {
        return Err(Error::domain("surface point coincides with the light"));
    }
    let dist = dist2.sqrt();
    let u = v / dist;

    let cos_psi = light.axis.dot(&u);
    let falloff = (-light.mu * (1.0 - cos_psi)).exp();
    let irradiance = light.sigma0 * falloff / dist2;

    // l = -u points from the surface toward the light
    let cos_theta = -u.dot(normal);
    let lit = cos_theta > 0.0;
    let shading = if lit { cos_theta } else { 0.0 };

    // d/dd of the geometric terms
    let du = (ray - u * u.dot(ray)) / dist;
    let d_falloff = falloff * light.mu * light.axis.dot(&du);
    let d_irradiance = light.sigma0 * (d_falloff / dist2 - falloff * 2.0 * v.dot(ray) / (dist2 * dist2));
    let d_shading = if lit { -normal.dot(&du) } else { 0.0 };
    let geom = irradiance * shading;
    let d_geom = d_irradiance * shading + irradiance * d_shading;

    let rho = hsv_to_rgb(albedo[0], albedo[1], 1.0);
    let d_rho = hsv_to_rgb_jacobian(albedo[0], albedo[1]);
    let g = rig.gain;
    let inv_gamma = 1.0 / rig.gamma;

    let mut out = RenderedPixel::invalid();
    out.valid = true;
    for c in 0..3 {
        let lin = geom * rho[c] * g;
        out.linear[c] = lin;
        let val = lin.powf(inv_gamma);
        out.pre_clamp[c] = val;
        out.color[c] = val.clamp(0.0, 1.0);
        // dI/dL = (1/gamma) L^(1/gamma - 1); undefined at L = 0 for gamma > 1
        let dval_dlin = if lin > 0.0 { inv_gamma * val / lin } else { 0.0 };
        out.d_depth[c] = dval_dlin * d_geom * rho[c] * g;
        for k in 0..2 {
            out.d_albedo[c][k] = dval_dlin * geom * g * d_rho[c][k];
        }
        if lit {
            let dl_dn = -u * (irradiance * rho[c] * g * dval_dlin);
            out.d_normal.set_row(c, &dl_dn.transpose());
        }
    }
    Ok(out)
}

pub fn render_pixel(rig: &PhotometricRig, pixel: Vector2<f64>, depth: f64, albedo: [f64; 2], normal: &Vector3<f64>) -> Result<RenderedPixel> {
    let ray = rig.camera.back_project(pixel)?;
    render_ray(rig, &ray, depth, albedo, normal)
}

/// Per-pixel render with derivatives. Pixels with invalid depth or normal are
/// returned invalid.
#[derive(Debug, Clone)]
pub struct Rendering {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<RenderedPixel>,
}

impl Rendering {
    pub fn image(&self) -> Image {
        Image { width: self.width, height: self.height, data: self.pixels.iter().map(|p| p.color).collect() }
    }

    pub fn valid_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.valid).count()
    }
}

fn check_same_dims(rig: &PhotometricRig, dims: &[(usize, usize, &str)]) -> Result<()> {
    let cam = (rig.camera.width, rig.camera.height);
    for &(w, h, what) in dims {
        if (w, h) != cam {
            return Err(Error::domain(format!("{what} is {w}x{h}, camera is {}x{}", cam.0, cam.1)));
        }
    }
    Ok(())
}

pub fn render_fields(rig: &PhotometricRig, rays: &[Vector3<f64>], depth: &DepthMap, albedo: &AlbedoMap, normals: &NormalMap) -> Result<Rendering> {
    check_same_dims(
        rig,
        &[
            (depth.width, depth.height, "depth"),
            (albedo.width, albedo.height, "albedo"),
            (normals.width, normals.height, "normals"),
        ],
    )?;
    if rays.len() != depth.data.len() {
        return Err(Error::domain("ray table does not match the field size"));
    }
    let pixels = (0..depth.data.len())
        .into_par_iter()
        .map(|i| {
            if !(depth.valid[i] && normals.valid[i]) {
                return Ok(RenderedPixel::invalid());
            }
            render_ray(rig, &rays[i], depth.data[i], albedo.data[i], &normals.data[i])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Rendering { width: depth.width, height: depth.height, pixels })
}

/// Renders an image from depth, albedo and normals. Invalid pixels are black.
pub fn render_image(rig: &PhotometricRig, depth: &DepthMap, albedo: &AlbedoMap, normals: &NormalMap) -> Result<Image> {
    let rays = rig.camera.rays();
    Ok(render_fields(rig, &rays, depth, albedo, normals)?.image())
}
