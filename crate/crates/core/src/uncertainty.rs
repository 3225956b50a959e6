//! Fusion of sample-based depth predictions and calibration metrics.
//!
//! An ensemble of `M` members, each a depth mean `d_m` and an aleatoric
//! variance `a_m`, fuses per pixel into
//!
//! ```text
//! mean      = (1/M) sum d_m
//! aleatoric = (1/M) sum a_m
//! epistemic = (1/M) sum (mean - d_m)^2
//! total     = aleatoric + epistemic
//! ```
//!
//! Sums run over the member values in sorted order so the result is exactly
//! invariant to member order.
//!
//! Calibration is measured with the area under the calibration-error curve
//! (AUCE): for a confidence level `p`, the interval `mean +/- q(p) sigma`
//! should contain the ground truth at a fraction `p` of the pixels. Ranking
//! quality is measured with the area under the sparsification-error curve
//! (AUSE): the RMSE of the pixels kept after removing the most uncertain ones,
//! compared with removing the pixels with the largest true error.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, ScalarField};

/// Per-pixel predictive distribution of depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDepth {
    pub mean: DepthMap,
    pub var_aleatoric: Vec<f64>,
    pub var_epistemic: Vec<f64>,
    pub var_total: Vec<f64>,
}

impl PredictiveDepth {
    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        let n = self.mean.data.len();
        if self.var_aleatoric.len() != n || self.var_epistemic.len() != n || self.var_total.len() != n {
            return Err(Error::domain("variance fields differ in size from the mean"));
        }
        for i in 0..n {
            if !self.mean.valid[i] {
                continue;
            }
            let (a, e, t) = (self.var_aleatoric[i], self.var_epistemic[i], self.var_total[i]);
            if ![a, e, t].iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(Error::domain(format!("pixel {i} has a negative or non-finite variance")));
            }
            if (t - (a + e)).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::domain(format!("pixel {i}: total variance is not aleatoric + epistemic")));
            }
        }
        Ok(())
    }

    fn field(&self, data: &[f64]) -> ScalarField {
        ScalarField { width: self.mean.width, height: self.mean.height, data: data.to_vec(), valid: self.mean.valid.clone() }
    }

    pub fn aleatoric_field(&self) -> ScalarField {
        self.field(&self.var_aleatoric)
    }

    pub fn epistemic_field(&self) -> ScalarField {
        self.field(&self.var_epistemic)
    }

    pub fn total_field(&self) -> ScalarField {
        self.field(&self.var_total)
    }

    /// Total standard deviation per pixel.
    pub fn sigma_total(&self) -> ScalarField {
        self.total_field().map(f64::sqrt)
    }
}

/// Member predictions: depth mean and aleatoric variance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutputs {
    pub members: Vec<(DepthMap, ScalarField)>,
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn fuse_ensemble(outputs: &EnsembleOutputs) -> Result<PredictiveDepth> {
    let members = &outputs.members;
    let Some((first, _)) = members.first() else {
        return Err(Error::domain("empty ensemble"));
    };
    let (w, h) = (first.width, first.height);
    for (d, a) in members {
        if (d.width, d.height) != (w, h) || (a.width, a.height) != (w, h) {
            return Err(Error::domain("ensemble members differ in size"));
        }
        d.validate()?;
        a.validate()?;
    }
    let m = members.len() as f64;
    let n = w * h;
    let mut mean = DepthMap::empty(w, h);
    let mut var_a = vec![0.0; n];
    let mut var_e = vec![0.0; n];
    let mut var_t = vec![0.0; n];
    let mut buf = Vec::with_capacity(members.len());
    for i in 0..n {
        if !members.iter().all(|(d, a)| d.valid[i] && a.valid[i]) {
            continue;
        }
        buf.clear();
        buf.extend(members.iter().map(|(d, _)| d.data[i]));
        let mu = sorted_sum(&mut buf) / m;
        buf.iter_mut().for_each(|x| *x = (mu - *x) * (mu - *x));
        let e = sorted_sum(&mut buf) / m;
        buf.clear();
        buf.extend(members.iter().map(|(_, a)| a.data[i]));
        let a = sorted_sum(&mut buf) / m;
        mean.data[i] = mu;
        mean.valid[i] = true;
        var_a[i] = a;
        var_e[i] = e;
        var_t[i] = a + e;
    }
    Ok(PredictiveDepth { mean, var_aleatoric: var_a, var_epistemic: var_e, var_total: var_t })
}

/// Shape of the prediction interval used for coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    #[default]
    Gaussian,
    /// Laplace distribution with the same standard deviation.
    Laplace,
}

impl IntervalKind {
    /// Half-width of the central interval of confidence `p`, in units of the
    /// standard deviation.
    pub fn half_width(self, p: f64) -> f64 {
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if p <= 0.0 {
            return 0.0;
        }
        match self {
            IntervalKind::Gaussian => Normal::standard().inverse_cdf((p + 1.0) / 2.0),
            IntervalKind::Laplace => -(1.0 - p).ln() / std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    /// `integral (p - coverage(p)) dp`; positive means overconfident.
    pub auce_signed: f64,
    /// `integral |p - coverage(p)| dp`.
    pub auce_abs: f64,
}

impl CalibrationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,coverage\n");
        for (p, c) in self.levels.iter().zip(&self.coverage) {
            let _ = writeln!(s, "{p},{c}");
        }
        s
    }
}

/// `count` uniform levels in `(0, 1]`.
pub fn default_levels(count: usize) -> Vec<f64> {
    (1..=count).map(|k| k as f64 / count as f64).collect()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

fn check_grid(grid: &[f64], closed_top: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("empty grid"));
    }
    let in_range = |x: &f64| if closed_top { (0.0..=1.0).contains(x) } else { (0.0..1.0).contains(x) };
    if !grid.iter().all(in_range) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("grid must be strictly increasing within the unit interval"));
    }
    Ok(())
}

/// Calibration curve of `pred` against `gt` over the jointly valid pixels.
///
/// The curve is anchored at `(0, 0)` for integration when the grid starts above
/// zero. Trapezoidal integration on a grid of spacing `h` is exact for the
/// linear part; a coverage step at either end of the unit interval costs up to
/// `h/2` of error.
pub fn auce(pred: &PredictiveDepth, gt: &DepthMap, levels: &[f64], kind: IntervalKind) -> Result<CalibrationCurve> {
    check_grid(levels, true)?;
    if (gt.width, gt.height) != (pred.mean.width, pred.mean.height) {
        return Err(Error::domain("prediction and ground truth differ in size"));
    }
    let mut z = Vec::new();
    for i in 0..gt.data.len() {
        if !(gt.valid[i] && pred.mean.valid[i]) {
            continue;
        }
        let sigma = pred.var_total[i].sqrt();
        if !(sigma > 0.0) {
            return Err(Error::domain(format!("total sigma must be > 0 at pixel {i}")));
        }
        z.push((gt.data[i] - pred.mean.data[i]).abs() / sigma);
    }
    if z.is_empty() {
        return Err(Error::domain("no jointly valid pixels"));
    }
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let coverage: Vec<f64> = levels
        .iter()
        .map(|&p| {
            let w = kind.half_width(p);
            z.partition_point(|&zi| zi <= w) as f64 / n
        })
        .collect();
    let (mut xs, mut ys) = (Vec::with_capacity(levels.len() + 1), Vec::with_capacity(levels.len() + 1));
    if levels[0] > 0.0 {
        xs.push(0.0);
        ys.push(0.0);
    }
    xs.extend_from_slice(levels);
    ys.extend_from_slice(&coverage);
    let diff: Vec<f64> = xs.iter().zip(&ys).map(|(p, c)| p - c).collect();
    let absdiff: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
    Ok(CalibrationCurve {
        levels: levels.to_vec(),
        coverage,
        auce_signed: trapezoid(&xs, &diff),
        auce_abs: trapezoid(&xs, &absdiff),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurve {
    pub fractions: Vec<f64>,
    /// Normalized RMSE after removing pixels by decreasing uncertainty.
    pub by_uncertainty: Vec<f64>,
    /// Normalized RMSE after removing pixels by decreasing true error.
    pub oracle: Vec<f64>,
    pub ause: f64,
}

impl SparsificationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,uncertainty,oracle\n");
        for i in 0..self.fractions.len() {
            let _ = writeln!(s, "{},{},{}", self.fractions[i], self.by_uncertainty[i], self.oracle[i]);
        }
        s
    }
}

/// `count` uniform removal fractions `0, 1/count, ..., (count-1)/count`.
pub fn default_fractions(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 / count as f64).collect()
}

/// RMSE of the tail after removing the first `k` entries of `order`, for
/// every `k`.
fn tail_rmse(order: &[usize], sq: &[f64]) -> Vec<f64> {
    let n = order.len();
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += sq[order[k]];
        out[k] = (acc / (n - k) as f64).sqrt();
    }
    out
}

fn descending_order(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    // stable: equal keys keep index order
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    idx
}

/// Sparsification curves for aligned per-pixel `uncertainty` and signed
/// `errors`. At least one pixel is always retained.
pub fn ause(uncertainty: &[f64], errors: &[f64], fractions: &[f64]) -> Result<SparsificationCurve> {
    check_grid(fractions, false)?;
    if uncertainty.len() != errors.len() {
        return Err(Error::domain("uncertainty and error arrays differ in length"));
    }
    let n = errors.len();
    if n < 2 {
        return Err(Error::domain("sparsification needs at least two pixels"));
    }
    if uncertainty.iter().chain(errors).any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite uncertainty or error"));
    }
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let by_unc = tail_rmse(&descending_order(uncertainty), &sq);
    let by_err = tail_rmse(&descending_order(&abs), &sq);
    let base = by_unc[0];
    let removed = |f: f64| ((f * n as f64).ceil() as usize).min(n - 1);
    let norm = |v: f64| if base > 0.0 { v / base } else { 0.0 };
    let by_uncertainty: Vec<f64> = fractions.iter().map(|&f| norm(by_unc[removed(f)])).collect();
    let oracle: Vec<f64> = fractions.iter().map(|&f| norm(by_err[removed(f)])).collect();
    let gap: Vec<f64> = by_uncertainty.iter().zip(&oracle).map(|(u, o)| u - o).collect();
    Ok(SparsificationCurve { fractions: fractions.to_vec(), ause: trapezoid(fractions, &gap), by_uncertainty, oracle })
}

/// AUSE of a predictive depth against ground truth, ranking by total sigma.
pub fn ause_depth(pred: &PredictiveDepth, gt: &DepthMap, fractions: &[f64]) -> Result<SparsificationCurve> {
    if (gt.width, gt.height) != (pred.mean.width, pred.mean.height) {
        return Err(Error::domain("prediction and ground truth differ in size"));
    }
    let (mut unc, mut err) = (Vec::new(), Vec::new());
    for i in 0..gt.data.len() {
        if gt.valid[i] && pred.mean.valid[i] {
            unc.push(pred.var_total[i].sqrt());
            err.push(pred.mean.data[i] - gt.data[i]);
        }
    }
    ause(&unc, &err, fractions)
}
