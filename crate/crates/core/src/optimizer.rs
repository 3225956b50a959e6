//! Direct first-order minimization of the self-supervised loss over per-pixel
//! depth and albedo.
//!
//! Depth is optimized as `log d` by default, which keeps it positive without
//! projection and equalizes the step scale between near and far pixels. The
//! update rule is Adam with bias correction and an optional cosine decay of
//! the step size. Hue is wrapped onto `[0, 1)` after every step and saturation
//! is clamped to `[0, 1]`.
//!
//! Only pixels whose observed max channel exceeds
//! [`RefineConfig::min_intensity`] are optimized; unlit pixels carry no depth
//! information.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{rgb_to_hsv, AlbedoMap, DepthMap, Image, NormalMap, ScalarField};
use crate::losses::{LightDepthProblem, LossConfig, LossEvaluation};
use crate::metrics::median;
use crate::rig::PhotometricRig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    #[default]
    LogDepth,
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Constant depth: [`RefineConfig::flat_depth`] if set, otherwise the
    /// median over the image of the depth implied by each pixel's brightness
    /// for a fronto-parallel white surface.
    #[default]
    Flat,
    /// Per pixel, the depth implied by its brightness for a fronto-parallel
    /// white surface.
    Brightness,
    /// Start from the caller's depth map.
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub steps: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Anneal the step size to zero along a half cosine.
    pub cosine_decay: bool,
    pub parameterization: Parameterization,
    pub init: InitKind,
    /// Depth for [`InitKind::Flat`]; derived from the image when `None`.
    pub flat_depth: Option<f64>,
    /// Pixels at or below this observed max channel are not optimized.
    pub min_intensity: f64,
    /// Number of pyramid levels the depth update is expressed on; 1 updates
    /// every pixel independently.
    pub levels: usize,
    /// Release pyramid levels from coarse to fine over the first half of the
    /// run instead of optimizing all of them from the start.
    pub coarse_to_fine: bool,
    /// Standard deviation of the per-pixel log-depth perturbation applied to
    /// each ensemble member's initialization.
    pub perturbation: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            cosine_decay: true,
            parameterization: Parameterization::LogDepth,
            init: InitKind::Flat,
            flat_depth: None,
            min_intensity: 1e-6,
            levels: 7,
            coarse_to_fine: true,
            perturbation: 0.05,
        }
    }
}

impl RefineConfig {
    /// Short warm-started refinement: 20 steps at a learning rate of 1e-4,
    /// constant schedule.
    pub fn test_time() -> Self {
        Self { steps: 20, step_size: 1e-4, cosine_decay: false, init: InitKind::Provided, levels: 1, coarse_to_fine: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::domain("steps must be >= 1"));
        }
        if self.levels == 0 {
            return Err(Error::domain("levels must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::domain(format!("step size must be > 0, got {}", self.step_size)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::domain("moment decays must be in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::domain("epsilon must be > 0"));
        }
        if let Some(d) = self.flat_depth {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::domain(format!("flat depth must be > 0, got {d}")));
            }
        }
        if !(self.min_intensity >= 0.0 && self.perturbation >= 0.0) {
            return Err(Error::domain("min intensity and perturbation must be >= 0"));
        }
        Ok(())
    }

    fn rate(&self, step: usize) -> f64 {
        if self.cosine_decay {
            let t = step as f64 / self.steps as f64;
            self.step_size * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            self.step_size
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub depth: DepthMap,
    pub albedo: AlbedoMap,
    pub normals: NormalMap,
    pub rendered: Image,
    /// Total loss before the first step and after every step.
    pub loss_trace: Vec<f64>,
    /// First-order depth variance implied by the final photometric residual:
    /// `|r|^2 / |dI/dd|^2` per rendered pixel.
    pub var_aleatoric: ScalarField,
}

/// Depth implied by each pixel's brightness for a fronto-parallel white
/// surface, ignoring the light offset from the camera.
pub fn brightness_depth(rig: &PhotometricRig, observed: &Image, min_intensity: f64) -> DepthMap {
    let rays = rig.camera.rays();
    let mut out = DepthMap::empty(observed.width, observed.height);
    for (i, ray) in rays.iter().enumerate() {
        let m = observed.max_channel(i);
        if m > min_intensity {
            let falloff = (-rig.light.mu * (1.0 - rig.light.axis.dot(ray))).exp();
            out.data[i] = (rig.light.sigma0 * falloff * rig.gain / m.powf(rig.gamma)).sqrt();
            out.valid[i] = true;
        }
    }
    out
}

/// Albedo whose chromaticity matches the linearized observed color.
pub fn chromaticity_albedo(rig: &PhotometricRig, observed: &Image) -> AlbedoMap {
    let data = observed
        .data
        .iter()
        .map(|p| {
            let (h, s, _) = rgb_to_hsv(p.map(|c| c.max(0.0).powf(rig.gamma)));
            [h, s.clamp(0.0, 1.0)]
        })
        .collect();
    AlbedoMap { width: observed.width, height: observed.height, data }
}

/// Initial depth and optimization mask for `refine`.
pub fn initial_depth(rig: &PhotometricRig, observed: &Image, init_depth: Option<&DepthMap>, cfg: &RefineConfig) -> Result<DepthMap> {
    let lit: Vec<bool> = (0..observed.data.len()).map(|i| observed.max_channel(i) > cfg.min_intensity).collect();
    let mut depth = match cfg.init {
        InitKind::Provided => {
            let d = init_depth.ok_or_else(|| Error::domain("provided init requested but no depth given"))?;
            d.validate()?;
            if (d.width, d.height) != (observed.width, observed.height) {
                return Err(Error::domain("initial depth does not match the observed image"));
            }
            d.clone()
        }
        InitKind::Flat => {
            let d0 = match cfg.flat_depth {
                Some(d) => d,
                None => median(&brightness_depth(rig, observed, cfg.min_intensity).valid_values())
                    .ok_or_else(|| Error::domain("observed image has no lit pixel"))?,
            };
            DepthMap::constant(observed.width, observed.height, d0)
        }
        InitKind::Brightness => brightness_depth(rig, observed, cfg.min_intensity),
    };
    for (v, l) in depth.valid.iter_mut().zip(&lit) {
        *v &= *l;
    }
    if depth.valid_count() == 0 {
        return Err(Error::domain("no pixel to optimize"));
    }
    Ok(depth)
}

/// `base` with independent `N(0, std)` noise added to every valid log-depth,
/// drawn from stream `member` of the seeded generator.
pub fn perturbed_depth(base: &DepthMap, seed: u64, member: u64, std: f64) -> Result<DepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    let normal = Normal::new(0.0, std).map_err(|e| Error::domain(e.to_string()))?;
    let mut out = base.clone();
    for (d, &v) in out.data.iter_mut().zip(&base.valid) {
        let eps = normal.sample(&mut rng);
        if v {
            *d *= eps.exp();
        }
    }
    Ok(out)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
}

impl Adam {
    fn new(n: usize, cfg: &RefineConfig) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], b1: cfg.beta1, b2: cfg.beta2, eps: cfg.epsilon, t: 0 }
    }

    /// Returns the update for each parameter given its gradient.
    fn step(&mut self, grad: &[f64], rate: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        let (b1, b2, eps) = (self.b1, self.b2, self.eps);
        self.m
            .par_iter_mut()
            .zip(self.v.par_iter_mut())
            .zip(grad.par_iter())
            .map(|((m, v), &g)| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                -rate * (*m / c1) / ((*v / c2).sqrt() + eps)
            })
            .collect()
    }
}

/// Depth parameters on a pyramid of grids: level `k` has one coefficient per
/// `2^k` pixels in each direction and reaches the pixels by bilinear
/// interpolation. A pixel's depth coordinate is the sum over levels, so coarse
/// levels move whole regions at once while level 0 keeps full resolution.
#[derive(Debug, Clone)]
struct Pyramid {
    width: usize,
    /// (grid width, grid height, stride, offset into the coefficient vector)
    levels: Vec<(usize, usize, usize, usize)>,
    len: usize,
}

impl Pyramid {
    fn new(width: usize, height: usize, levels: usize) -> Self {
        let mut out = Vec::with_capacity(levels);
        let mut len = 0;
        for k in 0..levels {
            let s = 1usize << k;
            let (gw, gh) = ((width - 1).div_ceil(s) + 1, (height - 1).div_ceil(s) + 1);
            out.push((gw, gh, s, len));
            len += gw * gh;
            if gw <= 2 && gh <= 2 {
                break;
            }
        }
        Self { width, levels: out, len }
    }

    /// Bilinear taps `(coefficient index, weight)` of pixel `(u, v)` on a level.
    fn taps(&self, level: &(usize, usize, usize, usize), u: usize, v: usize) -> [(usize, f64); 4] {
        let &(gw, gh, s, off) = level;
        let (x0, y0) = (u / s, v / s);
        let (fx, fy) = ((u % s) as f64 / s as f64, (v % s) as f64 / s as f64);
        let (x1, y1) = ((x0 + 1).min(gw - 1), (y0 + 1).min(gh - 1));
        [
            (off + y0 * gw + x0, (1.0 - fx) * (1.0 - fy)),
            (off + y0 * gw + x1, fx * (1.0 - fy)),
            (off + y1 * gw + x0, (1.0 - fx) * fy),
            (off + y1 * gw + x1, fx * fy),
        ]
    }

    /// Per-pixel values of the coefficient vector `c`.
    fn expand(&self, c: &[f64], pixels: &[usize]) -> Vec<f64> {
        pixels
            .iter()
            .map(|&i| {
                let (u, v) = (i % self.width, i / self.width);
                self.levels.iter().flat_map(|l| self.taps(l, u, v)).map(|(j, w)| w * c[j]).sum()
            })
            .collect()
    }

    /// Zeroes the gradient of levels not yet released at `step`: the coarsest
    /// level is active from the start and the finest from half the run on.
    fn freeze_inactive(&self, grad: &mut [f64], step: usize, steps: usize) {
        let top = self.levels.len() - 1;
        for (k, &(gw, gh, _, off)) in self.levels.iter().enumerate() {
            if top > 0 && 2 * step * top < steps * (top - k) {
                grad[off..off + gw * gh].iter_mut().for_each(|g| *g = 0.0);
            }
        }
    }

    /// Adjoint of [`Pyramid::expand`].
    fn reduce(&self, g: &[f64], pixels: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (&i, &gi) in pixels.iter().zip(g) {
            let (u, v) = (i % self.width, i / self.width);
            for l in &self.levels {
                for (j, w) in self.taps(l, u, v) {
                    out[j] += w * gi;
                }
            }
        }
        out
    }
}

/// Optimization state. Parameter layout: the depth pyramid coefficients, then
/// hue and saturation per optimized pixel.
struct State {
    pixels: Vec<usize>,
    pyramid: Pyramid,
    depth: DepthMap,
    albedo: AlbedoMap,
}

impl State {
    fn parameter_count(&self) -> usize {
        self.pyramid.len + 2 * self.pixels.len()
    }

    fn gradient(&self, eval: &LossEvaluation, param: Parameterization) -> Vec<f64> {
        let per_pixel: Vec<f64> = self
            .pixels
            .iter()
            .map(|&i| {
                let gd = eval.report.grad_depth[i];
                match param {
                    Parameterization::LogDepth => gd * self.depth.data[i],
                    Parameterization::Depth => gd,
                }
            })
            .collect();
        let mut g = self.pyramid.reduce(&per_pixel, &self.pixels);
        for &i in &self.pixels {
            g.extend_from_slice(&eval.report.grad_albedo[i]);
        }
        g
    }

    fn apply(&mut self, update: &[f64], param: Parameterization) {
        let m = self.pyramid.len;
        let step = self.pyramid.expand(&update[..m], &self.pixels);
        for (k, &i) in self.pixels.iter().enumerate() {
            let d = &mut self.depth.data[i];
            match param {
                Parameterization::LogDepth => *d *= step[k].exp(),
                // projected step: stay strictly positive
                Parameterization::Depth => *d = (*d + step[k]).max(*d * 1e-3),
            }
            let a = &mut self.albedo.data[i];
            let h = (a[0] + update[m + 2 * k]).rem_euclid(1.0);
            a[0] = if h >= 1.0 { 0.0 } else { h };
            a[1] = (a[1] + update[m + 2 * k + 1]).clamp(0.0, 1.0);
        }
    }
}

fn finish(problem: &LightDepthProblem, state: &State, eval: &LossEvaluation, loss_trace: Vec<f64>) -> RefineResult {
    let mut depth = state.depth.clone();
    for (v, nv) in depth.valid.iter_mut().zip(&eval.normals.valid) {
        *v &= *nv;
    }
    let (w, h) = (depth.width, depth.height);
    let mut var = ScalarField { width: w, height: h, data: vec![0.0; w * h], valid: vec![false; w * h] };
    for (i, p) in eval.rendering.pixels.iter().enumerate() {
        let sens = p.d_depth.norm_squared();
        if p.valid && sens > 0.0 {
            let obs = problem.observed.data[i];
            let r2: f64 = (0..3).map(|c| (obs[c] - p.pre_clamp[c]).powi(2)).sum();
            var.data[i] = r2 / sens;
            var.valid[i] = true;
        }
    }
    RefineResult {
        depth,
        albedo: state.albedo.clone(),
        normals: eval.normals.clone(),
        rendered: eval.rendering.image(),
        loss_trace,
        var_aleatoric: var,
    }
}

/// Minimizes the loss over depth and albedo.
///
/// Without `init_albedo`, albedo starts from the chromaticity of the
/// linearized observed image. With [`InitKind::Provided`], `init_depth` is
/// required; with [`InitKind::Flat`] it is ignored.
pub fn refine(
    rig: &PhotometricRig,
    observed: &Image,
    init_depth: Option<&DepthMap>,
    init_albedo: Option<&AlbedoMap>,
    loss: &LossConfig,
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    cfg.validate()?;
    let problem = LightDepthProblem::new(rig, observed, loss)?;
    let depth = initial_depth(rig, observed, init_depth, cfg)?;
    run(&problem, depth, init_albedo, cfg)
}

fn run(problem: &LightDepthProblem, depth: DepthMap, init_albedo: Option<&AlbedoMap>, cfg: &RefineConfig) -> Result<RefineResult> {
    let observed = &problem.observed;
    let albedo = match init_albedo {
        Some(a) => {
            a.validate()?;
            if (a.width, a.height) != (observed.width, observed.height) {
                return Err(Error::domain("initial albedo does not match the observed image"));
            }
            a.clone()
        }
        None => chromaticity_albedo(&problem.rig, observed),
    };
    let pixels: Vec<usize> = (0..depth.data.len()).filter(|&i| depth.valid[i]).collect();
    let pyramid = Pyramid::new(depth.width, depth.height, cfg.levels);
    let mut state = State { pixels, pyramid, depth, albedo };
    let mut adam = Adam::new(state.parameter_count(), cfg);

    let mut eval = problem.evaluate(&state.depth, &state.albedo)?;
    if !eval.report.total.is_finite() {
        return Err(Error::domain("initial loss is not finite"));
    }
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    trace.push(eval.report.total);
    for step in 0..cfg.steps {
        let mut grad = state.gradient(&eval, cfg.parameterization);
        if cfg.coarse_to_fine {
            state.pyramid.freeze_inactive(&mut grad, step, cfg.steps);
        }
        let update = adam.step(&grad, cfg.rate(step));
        let previous = State { pixels: state.pixels.clone(), pyramid: state.pyramid.clone(), depth: state.depth.clone(), albedo: state.albedo.clone() };
        state.apply(&update, cfg.parameterization);
        let next = problem.evaluate(&state.depth, &state.albedo);
        match next {
            Ok(e) if e.report.total.is_finite() => {
                trace.push(e.report.total);
                eval = e;
            }
            _ => {
                let last = finish(problem, &previous, &eval, trace);
                return Err(Error::Diverged { step: step + 1, last: Box::new(last) });
            }
        }
    }
    Ok(finish(problem, &state, &eval, trace))
}

/// `k` refinements from independently perturbed copies of the initial depth.
/// Member `m` uses stream `m` of the generator seeded with `seed`; members run
/// concurrently and the output is ordered by member.
pub fn ensemble_refine(
    rig: &PhotometricRig,
    observed: &Image,
    init_depth: Option<&DepthMap>,
    init_albedo: Option<&AlbedoMap>,
    loss: &LossConfig,
    cfg: &RefineConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<RefineResult>> {
    if k == 0 {
        return Err(Error::domain("ensemble size must be >= 1"));
    }
    cfg.validate()?;
    let problem = LightDepthProblem::new(rig, observed, loss)?;
    let base = initial_depth(rig, observed, init_depth, cfg)?;
    (0..k as u64)
        .into_par_iter()
        .map(|m| {
            let depth = perturbed_depth(&base, seed, m, cfg.perturbation)?;
            run(&problem, depth, init_albedo, cfg)
        })
        .collect()
}
