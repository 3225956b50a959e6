//! Laplace negative log-likelihoods (up to the constant `log 2`).

use super::pairwise_sum;
use crate::error::{Error, Result};
use crate::imaging::{DepthMap, ScalarField};
use crate::uncertainty::PredictiveDepth;

/// `|target - mean| / sigma + ln sigma` for one pixel.
pub fn laplace_nll_pixel(target: f64, mean: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("laplace scale must be > 0, got {sigma}")));
    }
    Ok((target - mean).abs() / sigma + sigma.ln())
}

fn same_dims(a: (usize, usize), b: (usize, usize), c: (usize, usize)) -> Result<()> {
    if a != b || a != c {
        return Err(Error::domain("likelihood inputs differ in size"));
    }
    Ok(())
}

/// Mean Laplace NLL over pixels valid in all three fields.
pub fn laplace_nll(target: &DepthMap, mean: &DepthMap, sigma: &ScalarField) -> Result<f64> {
    same_dims((target.width, target.height), (mean.width, mean.height), (sigma.width, sigma.height))?;
    let mut terms = Vec::new();
    for i in 0..target.data.len() {
        if target.valid[i] && mean.valid[i] && sigma.valid[i] {
            terms.push(laplace_nll_pixel(target.data[i], mean.data[i], sigma.data[i])?);
        }
    }
    if terms.is_empty() {
        return Err(Error::domain("no jointly valid pixels"));
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Student loss against an uncertain teacher: the Laplace NLL of the teacher
/// mean under the student's mean, with scale `sqrt(var_teacher + sigma_a^2)`.
pub fn uncertain_teacher_nll(teacher: &PredictiveDepth, student_mean: &DepthMap, student_sigma: &ScalarField) -> Result<f64> {
    let t = &teacher.mean;
    same_dims((t.width, t.height), (student_mean.width, student_mean.height), (student_sigma.width, student_sigma.height))?;
    let mut terms = Vec::new();
    for i in 0..t.data.len() {
        if !(t.valid[i] && student_mean.valid[i] && student_sigma.valid[i]) {
            continue;
        }
        let var_t = teacher.var_total[i];
        let sa = student_sigma.data[i];
        if var_t < 0.0 || sa < 0.0 {
            return Err(Error::domain("variances must be >= 0"));
        }
        let var = var_t + sa * sa;
        if var == 0.0 {
            return Err(Error::domain(format!("teacher and student variances both zero at pixel {i}")));
        }
        terms.push(laplace_nll_pixel(t.data[i], student_mean.data[i], var.sqrt())?);
    }
    if terms.is_empty() {
        return Err(Error::domain("no jointly valid pixels"));
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}
