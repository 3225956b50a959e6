//! Depth and normal error metrics with median scale alignment.
//!
//! Relative errors divide by the ground truth by default. The variant that
//! divides by the prediction is available through [`RelativeTo::Prediction`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, NormalMap};
use crate::losses::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub mae: f64,
    pub medae: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Number of jointly valid pixels the metrics were computed over.
    pub count: usize,
    /// Scale applied to the prediction (1 without alignment).
    pub scale: f64,
}

impl DepthMetrics {
    pub const CSV_HEADER: &'static str = "abs_rel,sq_rel,rmse,rmse_log,mae,medae,delta1,delta2,delta3,count,scale";

    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.mae,
            self.medae,
            self.delta1,
            self.delta2,
            self.delta3,
            self.count,
            self.scale
        );
        s
    }
}

/// Denominator of the relative errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativeTo {
    #[default]
    GroundTruth,
    Prediction,
}

/// Median with the even-count convention of averaging the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn joint_pairs(pred: &DepthMap, gt: &DepthMap) -> Result<(Vec<f64>, Vec<f64>)> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::domain(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut p, mut g) = (Vec::new(), Vec::new());
    for i in 0..pred.data.len() {
        if pred.valid[i] && gt.valid[i] {
            p.push(pred.data[i]);
            g.push(gt.data[i]);
        }
    }
    if p.is_empty() {
        return Err(Error::domain("prediction and ground truth share no valid pixel"));
    }
    Ok((p, g))
}

/// `median(reference) / median(pred)` over jointly valid pixels.
pub fn median_scale(pred: &DepthMap, reference: &DepthMap) -> Result<f64> {
    let (p, r) = joint_pairs(pred, reference)?;
    let (mp, mr) = (median(&p).unwrap_or(0.0), median(&r).unwrap_or(0.0));
    if !(mp > 0.0 && mr > 0.0) {
        return Err(Error::domain(format!("medians must be > 0, got {mp} and {mr}")));
    }
    Ok(mr / mp)
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, align: bool) -> Result<DepthMetrics> {
    depth_metrics_with(pred, gt, align, RelativeTo::GroundTruth)
}

pub fn depth_metrics_with(pred: &DepthMap, gt: &DepthMap, align: bool, relative_to: RelativeTo) -> Result<DepthMetrics> {
    let (p, g) = joint_pairs(pred, gt)?;
    // Alignment rescales the *median-normalized* prediction so that any global
    // rescaling of `pred` cancels exactly: p / median(p) is scale-free.
    let (p, scale) = if align {
        let s = median_scale(pred, gt)?;
        let mp = median(&p).unwrap_or(1.0);
        let mg = median(&g).unwrap_or(1.0);
        (p.iter().map(|x| x / mp * mg).collect::<Vec<_>>(), s)
    } else {
        (p, 1.0)
    };
    if p.iter().chain(&g).any(|x| !(*x > 0.0)) {
        return Err(Error::domain("depths must be positive for metric evaluation"));
    }
    let n = p.len() as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| pairwise_sum(&p.iter().zip(&g).map(|(&a, &b)| f(a, b)).collect::<Vec<_>>()) / n;
    let denom = |a: f64, b: f64| match relative_to {
        RelativeTo::GroundTruth => b,
        RelativeTo::Prediction => a,
    };
    let abs_err: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (a - b).abs()).collect();
    let delta = |k: i32| {
        let th = 1.25f64.powi(k);
        p.iter().zip(&g).filter(|(a, b)| (*a / *b).max(*b / *a) < th).count() as f64 / n
    };
    Ok(DepthMetrics {
        abs_rel: mean(&|a, b| (b - a).abs() / denom(a, b)),
        sq_rel: mean(&|a, b| (b - a) * (b - a) / denom(a, b)),
        rmse: mean(&|a, b| (b - a) * (b - a)).sqrt(),
        rmse_log: mean(&|a, b| (b.ln() - a.ln()).powi(2)).sqrt(),
        mae: pairwise_sum(&abs_err) / n,
        medae: median(&abs_err).unwrap_or(0.0),
        delta1: delta(1),
        delta2: delta(2),
        delta3: delta(3),
        count: p.len(),
        scale,
    })
}

/// Mean angular error in degrees over pixels valid in both maps.
pub fn normal_mae(pred: &NormalMap, gt: &NormalMap) -> Result<f64> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::domain("normal maps differ in size"));
    }
    let angles: Vec<f64> = (0..pred.data.len())
        .filter(|&i| pred.valid[i] && gt.valid[i])
        .map(|i| pred.data[i].dot(&gt.data[i]).clamp(-1.0, 1.0).acos().to_degrees())
        .collect();
    if angles.is_empty() {
        return Err(Error::domain("normal maps share no valid pixel"));
    }
    Ok(pairwise_sum(&angles) / angles.len() as f64)
}
