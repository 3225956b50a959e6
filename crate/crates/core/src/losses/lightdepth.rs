//! The three-term self-supervised loss
//!
//! ```text
//! L = L_p + lambda_s L_s + lambda_sp L_sp
//! ```
//!
//! * `L_p`: mean over valid, non-specular pixels of the squared RGB distance
//!   between the observed image and the pre-clamp render.
//! * `L_s`: `|dx d| exp(-|dx I|) + |dy d| exp(-|dy I|)` with forward
//!   differences, each direction averaged over its valid pixel pairs. `|dx I|`
//!   is the mean absolute difference over RGB.
//! * `L_sp`: `sum m_i (s_i . (-r_i) - 1)^2 / N` with `s = l - 2 n (n . l)` the
//!   mirror direction of the light and `m_i` set where the observed max channel
//!   exceeds the threshold. `N` is the number of pixels with a valid normal.
//!
//! Gradients flow to depth directly and through the normals, which depend on
//! the seven-pixel stencil around each pixel.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::{pairwise_sum, LossConfig, LossReport};
use crate::error::{Error, Result};
use crate::geometry::normals::backprop_normals;
use crate::geometry::normals_with_jacobian;
use crate::imaging::{AlbedoMap, DepthMap, Image, NormalMap};
use crate::photometry::{render_fields, Rendering};
use crate::rig::PhotometricRig;

#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricTerm {
    pub value: f64,
    /// Number of pixels that contributed.
    pub count: usize,
    /// Gradient with respect to depth at fixed normals.
    pub grad_depth: Vec<f64>,
    pub grad_albedo: Vec<[f64; 2]>,
    pub grad_normal: Vec<Vector3<f64>>,
}

/// Squared L2 distance between `observed` and the pre-clamp colors of the
/// valid pixels of `rendering`, averaged over those pixels.
pub fn photometric_loss(observed: &Image, rendering: &Rendering) -> Result<PhotometricTerm> {
    if (observed.width, observed.height) != (rendering.width, rendering.height) {
        return Err(Error::domain("observed and rendered images differ in size"));
    }
    let count = rendering.valid_count();
    let n = observed.data.len();
    let mut term = PhotometricTerm {
        value: 0.0,
        count,
        grad_depth: vec![0.0; n],
        grad_albedo: vec![[0.0; 2]; n],
        grad_normal: vec![Vector3::zeros(); n],
    };
    if count == 0 {
        return Ok(term);
    }
    let scale = 1.0 / count as f64;
    let per_pixel: Vec<(f64, f64, [f64; 2], Vector3<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = &rendering.pixels[i];
            if !p.valid {
                return (0.0, 0.0, [0.0; 2], Vector3::zeros());
            }
            let obs = observed.data[i];
            let mut sq = 0.0;
            let mut gd = 0.0;
            let mut ga = [0.0; 2];
            let mut gn = Vector3::zeros();
            for c in 0..3 {
                let r = obs[c] - p.pre_clamp[c];
                sq += r * r;
                let g = -2.0 * r * scale;
                gd += g * p.d_depth[c];
                ga[0] += g * p.d_albedo[c][0];
                ga[1] += g * p.d_albedo[c][1];
                gn += p.d_normal.row(c).transpose() * g;
            }
            (sq, gd, ga, gn)
        })
        .collect();
    let sq: Vec<f64> = per_pixel.iter().map(|t| t.0).collect();
    term.value = pairwise_sum(&sq) * scale;
    for (i, (_, gd, ga, gn)) in per_pixel.into_iter().enumerate() {
        term.grad_depth[i] = gd;
        term.grad_albedo[i] = ga;
        term.grad_normal[i] = gn;
    }
    Ok(term)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessTerm {
    pub value: f64,
    pub grad_depth: Vec<f64>,
}

fn mean_abs_diff(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) / 3.0
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Edge-aware first-order smoothness on depth.
pub fn smoothness_loss(depth: &DepthMap, image: &Image) -> Result<SmoothnessTerm> {
    if (depth.width, depth.height) != (image.width, image.height) {
        return Err(Error::domain("depth and image differ in size"));
    }
    let (w, h) = (depth.width, depth.height);
    let n = w * h;
    // per-pixel forward-difference terms: (x value, x weight*sign, y value, y weight*sign)
    let terms: Vec<(Option<(f64, f64)>, Option<(f64, f64)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let fwd = |j: usize| {
                if !(depth.valid[i] && depth.valid[j]) {
                    return None;
                }
                let dd = depth.data[j] - depth.data[i];
                let weight = (-mean_abs_diff(image.data[j], image.data[i])).exp();
                Some((dd.abs() * weight, sign(dd) * weight))
            };
            let x = if u + 1 < w { fwd(i + 1) } else { None };
            let y = if v + 1 < h { fwd(i + w) } else { None };
            (x, y)
        })
        .collect();
    let xs: Vec<f64> = terms.iter().filter_map(|t| t.0.map(|p| p.0)).collect();
    let ys: Vec<f64> = terms.iter().filter_map(|t| t.1.map(|p| p.0)).collect();
    let (nx, ny) = (xs.len(), ys.len());
    let mut value = 0.0;
    if nx > 0 {
        value += pairwise_sum(&xs) / nx as f64;
    }
    if ny > 0 {
        value += pairwise_sum(&ys) / ny as f64;
    }
    let grad_depth = (0..n)
        .into_par_iter()
        .map(|j| {
            let (u, v) = (j % w, j / w);
            let mut g = 0.0;
            // j as the left/top element of a pair: d/dd_j |d_k - d_j| = -sign
            if let Some((_, s)) = terms[j].0 {
                g -= s / nx as f64;
            }
            if let Some((_, s)) = terms[j].1 {
                g -= s / ny as f64;
            }
            // j as the right/bottom element
            if u > 0 {
                if let Some((_, s)) = terms[j - 1].0 {
                    g += s / nx as f64;
                }
            }
            if v > 0 {
                if let Some((_, s)) = terms[j - w].1 {
                    g += s / ny as f64;
                }
            }
            g
        })
        .collect();
    Ok(SmoothnessTerm { value, grad_depth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecularTerm {
    pub value: f64,
    /// Number of masked (highlight) pixels that contributed.
    pub masked: usize,
    /// Gradient with respect to depth, chained through the normals.
    pub grad_depth: Vec<f64>,
    /// Gradient with respect to depth at fixed normals.
    pub grad_depth_direct: Vec<f64>,
    pub grad_normal: Vec<Vector3<f64>>,
}

/// `s . (-r) - 1` for light direction `l` (surface to light), normal `n` and
/// viewing ray `r`, where `s = l - 2 n (n . l)` is the mirror direction.
pub fn specular_residual(l: &Vector3<f64>, n: &Vector3<f64>, r: &Vector3<f64>) -> f64 {
    let s = l - n * (2.0 * n.dot(l));
    -s.dot(r) - 1.0
}

pub(crate) fn specular_mask(observed: &Image, threshold: f64) -> Vec<bool> {
    (0..observed.data.len()).map(|i| observed.max_channel(i) > threshold).collect()
}

/// Specular term given precomputed rays and mask; the normal chain is left to
/// the caller.
fn specular_parts(
    rig: &PhotometricRig,
    rays: &[nalgebra::Vector3<f64>],
    mask: &[bool],
    normals: &NormalMap,
    depth: &DepthMap,
) -> (f64, usize, Vec<f64>, Vec<Vector3<f64>>) {
    let n = depth.data.len();
    let count = (0..n).filter(|&i| depth.valid[i] && normals.valid[i]).count();
    if count == 0 {
        return (0.0, 0, vec![0.0; n], vec![Vector3::zeros(); n]);
    }
    let scale = 1.0 / count as f64;
    let per_pixel: Vec<(f64, f64, Vector3<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            if !(mask[i] && depth.valid[i] && normals.valid[i]) {
                return (0.0, 0.0, Vector3::zeros(), false);
            }
            let r = rays[i];
            let nrm = normals.data[i];
            let to_light = rig.light.position - r * depth.data[i];
            let dist = to_light.norm();
            if dist == 0.0 {
                return (0.0, 0.0, Vector3::zeros(), false);
            }
            let l = to_light / dist;
            let f = specular_residual(&l, &nrm, &r);
            let g = 2.0 * f * scale;
            let df_dn = (l * nrm.dot(&r) + r * nrm.dot(&l)) * 2.0;
            let df_dl = -r + nrm * (2.0 * nrm.dot(&r));
            let dl_dd = -(Matrix3::identity() - l * l.transpose()) * r / dist;
            (f * f, g * df_dl.dot(&dl_dd), df_dn * g, true)
        })
        .collect();
    let sq: Vec<f64> = per_pixel.iter().map(|t| t.0).collect();
    let masked = per_pixel.iter().filter(|t| t.3).count();
    let value = pairwise_sum(&sq) * scale;
    let gd = per_pixel.iter().map(|t| t.1).collect();
    let gn = per_pixel.iter().map(|t| t.2).collect();
    (value, masked, gd, gn)
}

/// Specular term for depth map `depth`, whose normals are `normals`.
pub fn specular_loss(rig: &PhotometricRig, observed: &Image, normals: &NormalMap, depth: &DepthMap, threshold: f64) -> Result<SpecularTerm> {
    let dims = (depth.width, depth.height);
    if (observed.width, observed.height) != dims || (normals.width, normals.height) != dims {
        return Err(Error::domain("specular loss inputs differ in size"));
    }
    let rays = rig.camera.rays();
    let mask = specular_mask(observed, threshold);
    let (value, masked, direct, grad_normal) = specular_parts(rig, &rays, &mask, normals, depth);
    let (_, jac) = normals_with_jacobian(&rays, depth)?;
    let through = backprop_normals(depth.width, depth.height, &jac, &grad_normal);
    let grad_depth = direct.iter().zip(&through).map(|(a, b)| a + b).collect();
    Ok(SpecularTerm { value, masked, grad_depth, grad_depth_direct: direct, grad_normal })
}

/// An observed image with everything needed to evaluate the loss repeatedly.
#[derive(Debug, Clone)]
pub struct LightDepthProblem {
    pub rig: PhotometricRig,
    pub observed: Image,
    pub config: LossConfig,
    pub rays: Vec<Vector3<f64>>,
    pub specular: Vec<bool>,
}

/// A full loss evaluation with the intermediate fields it produced.
#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub report: LossReport,
    pub normals: NormalMap,
    /// Render of the current fields; specular pixels are excluded from the
    /// photometric term but still rendered here.
    pub rendering: Rendering,
}

impl LightDepthProblem {
    pub fn new(rig: &PhotometricRig, observed: &Image, config: &LossConfig) -> Result<Self> {
        rig.validate()?;
        config.validate()?;
        if (observed.width, observed.height) != (rig.camera.width, rig.camera.height) {
            return Err(Error::domain("observed image does not match the camera"));
        }
        Ok(Self {
            rig: *rig,
            observed: observed.clone(),
            config: *config,
            rays: rig.camera.rays(),
            specular: specular_mask(observed, config.specular_threshold),
        })
    }

    pub fn evaluate(&self, depth: &DepthMap, albedo: &AlbedoMap) -> Result<LossEvaluation> {
        let dims = (self.observed.width, self.observed.height);
        if (depth.width, depth.height) != dims || (albedo.width, albedo.height) != dims {
            return Err(Error::domain("depth/albedo do not match the observed image"));
        }
        let (normals, jac) = normals_with_jacobian(&self.rays, depth)?;
        let rendering = render_fields(&self.rig, &self.rays, depth, albedo, &normals)?;

        let mut masked = rendering.clone();
        for (p, &spec) in masked.pixels.iter_mut().zip(&self.specular) {
            if spec {
                p.valid = false;
            }
        }
        let photo = photometric_loss(&self.observed, &masked)?;
        let cfg = &self.config;

        let smooth = if cfg.lambda_smooth > 0.0 {
            smoothness_loss(depth, &self.observed)?
        } else {
            SmoothnessTerm { value: 0.0, grad_depth: vec![0.0; depth.data.len()] }
        };
        let (spec_value, _, spec_direct, spec_normal) = if cfg.lambda_specular > 0.0 {
            specular_parts(&self.rig, &self.rays, &self.specular, &normals, depth)
        } else {
            let n = depth.data.len();
            (0.0, 0, vec![0.0; n], vec![Vector3::zeros(); n])
        };

        let grad_n: Vec<Vector3<f64>> = photo
            .grad_normal
            .iter()
            .zip(&spec_normal)
            .map(|(p, s)| p + s * cfg.lambda_specular)
            .collect();
        let through = backprop_normals(depth.width, depth.height, &jac, &grad_n);
        let grad_depth: Vec<f64> = (0..depth.data.len())
            .map(|i| {
                if !depth.valid[i] {
                    return 0.0;
                }
                photo.grad_depth[i] + cfg.lambda_smooth * smooth.grad_depth[i] + cfg.lambda_specular * spec_direct[i] + through[i]
            })
            .collect();

        let total = photo.value + cfg.lambda_smooth * smooth.value + cfg.lambda_specular * spec_value;
        Ok(LossEvaluation {
            report: LossReport {
                total,
                photometric: photo.value,
                smoothness: smooth.value,
                specular: spec_value,
                grad_depth,
                grad_albedo: photo.grad_albedo,
            },
            normals,
            rendering,
        })
    }
}

/// Evaluates the three-term loss and its gradient for one set of fields.
pub fn total_lightdepth_loss(rig: &PhotometricRig, observed: &Image, depth: &DepthMap, albedo: &AlbedoMap, config: &LossConfig) -> Result<LossReport> {
    Ok(LightDepthProblem::new(rig, observed, config)?.evaluate(depth, albedo)?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photometry::RenderedPixel;
    use crate::rig::CameraModel;

    #[test]
    fn photometric_single_pixel() {
        let obs = Image::filled(1, 1, [1.0; 3]);
        let mut px = RenderedPixel::invalid();
        px.valid = true;
        px.pre_clamp = [0.5; 3];
        let rendering = Rendering { width: 1, height: 1, pixels: vec![px] };
        let t = photometric_loss(&obs, &rendering).unwrap();
        assert_eq!(t.value, 0.75);

        px.pre_clamp = [1.0; 3];
        let rendering = Rendering { width: 1, height: 1, pixels: vec![px] };
        let t = photometric_loss(&obs, &rendering).unwrap();
        assert_eq!(t.value, 0.0);
        assert_eq!(t.grad_depth, vec![0.0]);
    }

    #[test]
    fn smoothness_examples() {
        let img = Image::filled(6, 5, [0.3; 3]);
        assert_eq!(smoothness_loss(&DepthMap::constant(6, 5, 2.0), &img).unwrap().value, 0.0);

        let c = 0.07;
        let ramp = DepthMap::from_values(6, 5, (0..30).map(|i| 1.0 + c * (i % 6) as f64).collect()).unwrap();
        let v = smoothness_loss(&ramp, &img).unwrap().value;
        assert!((v - c).abs() < 1e-15);

        // horizontal color steps of ln 2 in every channel halve the x term
        let ln2 = std::f64::consts::LN_2;
        let striped = Image {
            width: 6,
            height: 5,
            data: (0..30).map(|i| if (i % 6) % 2 == 0 { [0.0; 3] } else { [ln2; 3] }).collect(),
        };
        let v = smoothness_loss(&ramp, &striped).unwrap().value;
        assert!((v - c / 2.0).abs() < 1e-15);
    }

    #[test]
    fn specular_reflection_law() {
        let l = Vector3::z();
        let n = Vector3::z();
        let s = l - n * (2.0 * n.dot(&l));
        assert_eq!(s, -Vector3::z());
        // light along the normal and viewing ray along the light: zero residual
        assert_eq!(specular_residual(&l, &n, &l), 0.0);
    }

    #[test]
    fn specular_empty_mask_is_zero() {
        let cam = CameraModel::pinhole(8, 8, 8.0, 8.0, 3.5, 3.5).unwrap();
        let rig = PhotometricRig::colocated(cam);
        let depth = DepthMap::constant(8, 8, 1.0);
        let normals = crate::geometry::normals_from_depth(&cam, &depth).unwrap();
        let obs = Image::filled(8, 8, [0.5; 3]);
        let t = specular_loss(&rig, &obs, &normals, &depth, 0.98).unwrap();
        assert_eq!(t.value, 0.0);
        assert_eq!(t.masked, 0);
        assert!(t.grad_depth.iter().all(|&g| g == 0.0));
    }
}
