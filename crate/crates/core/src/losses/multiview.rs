//! Per-pixel photometric reprojection residual between a target view and one
//! or more source views:
//!
//! ```text
//! F[j] = min_s (1 - alpha) |I[j] - I_s<j'>|_1 + alpha/2 (1 - SSIM(I, I_s<.>, j))
//! ```
//!
//! where `j'` is `j` warped into source `s` with the target depth and relative
//! pose, `<.>` is bilinear sampling, and `|.|_1` is averaged over RGB.

use nalgebra::Vector2;
use rayon::prelude::*;

use super::ssim::ssim_at;
use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::imaging::{DepthMap, Image, Rgb, ScalarField};
use crate::rig::CameraModel;

#[derive(Debug, Clone, Copy)]
pub struct SourceView<'a> {
    pub image: &'a Image,
    pub camera: &'a CameraModel,
    /// Target camera frame to source camera frame.
    pub pose: PoseSE3,
}

fn bilinear(img: &Image, p: Vector2<f64>) -> Rgb {
    let x0 = p.x.floor().min(img.width as f64 - 1.0).max(0.0);
    let y0 = p.y.floor().min(img.height as f64 - 1.0).max(0.0);
    let (fx, fy) = (p.x - x0, p.y - y0);
    let (u0, v0) = (x0 as usize, y0 as usize);
    let u1 = (u0 + 1).min(img.width - 1);
    let v1 = (v0 + 1).min(img.height - 1);
    let (a, b, c, d) = (img.at(u0, v0), img.at(u1, v0), img.at(u0, v1), img.at(u1, v1));
    std::array::from_fn(|k| (a[k] * (1.0 - fx) + b[k] * fx) * (1.0 - fy) + (c[k] * (1.0 - fx) + d[k] * fx) * fy)
}

/// Target image resampled from `source`; `None` where the warp leaves the
/// source image or the depth is invalid.
fn warp_image(target_camera: &CameraModel, depth: &DepthMap, source: &SourceView) -> Vec<Option<Rgb>> {
    let rays = target_camera.rays();
    (0..depth.data.len())
        .into_par_iter()
        .map(|i| {
            if !depth.valid[i] {
                return None;
            }
            let x = source.pose.apply(&(rays[i] * depth.data[i]));
            let q = source.camera.project(x).ok()?;
            // absorb round-off on the image border
            const SLACK: f64 = 1e-9;
            let (w, h) = (source.camera.width as f64 - 1.0, source.camera.height as f64 - 1.0);
            let inside = q.x >= -SLACK && q.y >= -SLACK && q.x <= w + SLACK && q.y <= h + SLACK;
            inside.then(|| bilinear(source.image, Vector2::new(q.x.clamp(0.0, w), q.y.clamp(0.0, h))))
        })
        .collect()
}

pub fn multiview_residual(target: &Image, target_camera: &CameraModel, depth: &DepthMap, sources: &[SourceView], alpha: f64) -> Result<ScalarField> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let dims = (target.width, target.height);
    if (depth.width, depth.height) != dims || (target_camera.width, target_camera.height) != dims {
        return Err(Error::domain("target image, depth and camera differ in size"));
    }
    let n = target.data.len();
    let mut best: Vec<Option<f64>> = vec![None; n];
    for source in sources {
        let warped = warp_image(target_camera, depth, source);
        let warped_img = Image {
            width: target.width,
            height: target.height,
            data: warped.iter().map(|p| p.unwrap_or([0.0; 3])).collect(),
        };
        let residual: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let w = warped[i]?;
                let t = target.data[i];
                let l1 = ((t[0] - w[0]).abs() + (t[1] - w[1]).abs() + (t[2] - w[2]).abs()) / 3.0;
                let ssim = if alpha > 0.0 {
                    ssim_at(target, &warped_img, |k| warped[k].is_some(), i % target.width, i / target.width)?
                } else {
                    1.0
                };
                Some((1.0 - alpha) * l1 + alpha / 2.0 * (1.0 - ssim))
            })
            .collect();
        for (b, r) in best.iter_mut().zip(residual) {
            if let Some(r) = r {
                *b = Some(b.map_or(r, |cur| cur.min(r)));
            }
        }
    }
    Ok(ScalarField {
        width: target.width,
        height: target.height,
        data: best.iter().map(|b| b.unwrap_or(0.0)).collect(),
        valid: best.iter().map(Option::is_some).collect(),
    })
}
