//! Scalar objectives and their gradients.
//!
//! * [`lightdepth`]: photometric, edge-aware smoothness and specular terms, and
//!   their weighted sum with gradients for every depth and albedo entry.
//! * [`likelihood`]: Laplace negative log-likelihoods for supervised and
//!   teacher-student depth.
//! * [`multiview`] and [`ssim`]: per-pixel reprojection residual between views.
//!
//! Every sum over pixels goes through [`pairwise_sum`] on a row-major vector,
//! so totals are bit-reproducible regardless of the thread count.

pub mod lightdepth;
pub mod likelihood;
pub mod multiview;
pub mod ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lightdepth::{
    photometric_loss, smoothness_loss, specular_loss, specular_residual, total_lightdepth_loss, LightDepthProblem, LossEvaluation,
    PhotometricTerm, SmoothnessTerm, SpecularTerm,
};
pub use likelihood::{laplace_nll, laplace_nll_pixel, uncertain_teacher_nll};
pub use multiview::{multiview_residual, SourceView};
pub use ssim::{mean_ssim, ssim_at};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the smoothness term.
    pub lambda_smooth: f64,
    /// Weight of the specular term.
    pub lambda_specular: f64,
    /// Max-channel intensity above which a pixel counts as a specular highlight.
    pub specular_threshold: f64,
    /// SSIM weight in the multi-view residual.
    pub ssim_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_smooth: 0.1, lambda_specular: 1.0, specular_threshold: 0.98, ssim_alpha: 0.85 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !nonneg(self.lambda_smooth) || !nonneg(self.lambda_specular) {
            return Err(Error::domain("loss weights must be >= 0"));
        }
        if !(self.specular_threshold > 0.0 && self.specular_threshold <= 1.0) {
            return Err(Error::domain(format!("specular threshold must be in (0, 1], got {}", self.specular_threshold)));
        }
        if !(0.0..=1.0).contains(&self.ssim_alpha) {
            return Err(Error::domain(format!("ssim alpha must be in [0, 1], got {}", self.ssim_alpha)));
        }
        Ok(())
    }
}

/// Scalar summary of one evaluation of the three-term loss, with gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub photometric: f64,
    pub smoothness: f64,
    pub specular: f64,
    /// `dL/dd` per pixel (zero at invalid pixels).
    pub grad_depth: Vec<f64>,
    /// `dL/d(h, s)` per pixel.
    pub grad_albedo: Vec<[f64; 2]>,
}

/// Deterministic pairwise summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
