//! Command-line surface and TOML configuration.
//!
//! Every tunable flag is optional on the command line; unset flags fall back
//! to the matching key of the command's table in the `--config` file, then to
//! the built-in default. Keys use the flag spelling:
//!
//! ```toml
//! seed = 7
//!
//! [refine]
//! steps = 300
//! lambda-smooth = 0.01
//! ```

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ldk", version, about = "Depth from illumination decline: render, refine, evaluate, calibrate, register")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// TOML file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray-cast ground-truth frames of a mesh or builtin scene.
    Render(RenderArgs),
    /// Recover depth and albedo from one image.
    Refine(RefineArgs),
    /// Depth, normal and image metrics of a prediction against ground truth.
    Eval(EvalArgs),
    /// Fuse ensemble members and score their calibration.
    Uncertainty(UncertaintyArgs),
    /// Align two point clouds.
    Icp(IcpArgs),
    /// Re-run a command from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinScene {
    /// Haustra-like tube along +z (radius 1, length 8, 4 bumps).
    Tube,
    /// Seeded-albedo sphere of radius 1.6 centred 3 m ahead.
    Sphere,
    /// Two spheres in front of a tilted plane.
    Registration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    Flat,
    Brightness,
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalArg {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelativeArg {
    GroundTruth,
    Prediction,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a number > 0, got {s}")),
    }
}

fn nonneg_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a number >= 0, got {s}")),
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("expected a fraction in (0, 1], got {s}")),
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RenderArgs {
    /// Rig JSON file.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// OBJ mesh (with optional `.albedo.json` sidecar).
    #[arg(long, conflicts_with = "scene")]
    pub mesh: Option<PathBuf>,
    /// Builtin procedural scene.
    #[arg(long, value_enum)]
    pub scene: Option<BuiltinScene>,
    /// JSON array of camera poses `{"R": [9], "t": [3]}` (camera to scene).
    /// Defaults to the identity pose.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Seed of the builtin scene (falls back to LDK_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RefineArgs {
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Observed image (`.ldk` raster or 8-bit PNG).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Initial depth raster; implies `--init provided`.
    #[arg(long)]
    pub init_depth: Option<PathBuf>,
    /// Initial albedo raster (default: chromaticity of the image).
    #[arg(long)]
    pub init_albedo: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    #[arg(long, value_parser = positive_f64)]
    pub step_size: Option<f64>,
    /// Depth pyramid levels (1 = per pixel).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub levels: Option<u64>,
    /// Release pyramid levels coarse to fine.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub coarse_to_fine: Option<bool>,
    #[arg(long, value_parser = nonneg_f64)]
    pub lambda_smooth: Option<f64>,
    #[arg(long, value_parser = nonneg_f64)]
    pub lambda_specular: Option<f64>,
    /// Number of perturbed runs; above 1 the fused mean and variances are written.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub ensemble: Option<u64>,
    /// Log-depth perturbation of ensemble members.
    #[arg(long, value_parser = nonneg_f64)]
    pub perturbation: Option<f64>,
    /// Ensemble seed (falls back to LDK_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Predicted depth raster.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth depth raster.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Compare raw depths instead of median-aligned ones.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_align: Option<bool>,
    /// Denominator of AbsRel and SqRel.
    #[arg(long, value_enum)]
    pub relative_to: Option<RelativeArg>,
    #[arg(long, requires = "gt_normals")]
    pub pred_normals: Option<PathBuf>,
    #[arg(long, requires = "pred_normals")]
    pub gt_normals: Option<PathBuf>,
    #[arg(long, requires = "gt_image")]
    pub pred_image: Option<PathBuf>,
    #[arg(long, requires = "pred_image")]
    pub gt_image: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct UncertaintyArgs {
    /// Ensemble member as `DEPTH.ldk` or `DEPTH.ldk:VAR.ldk` (aleatoric
    /// variance); repeat per member.
    #[arg(long = "member", conflicts_with = "mean")]
    pub members: Vec<String>,
    /// Predictive mean depth (instead of members).
    #[arg(long, requires = "var")]
    pub mean: Option<PathBuf>,
    /// Predictive variance matching `--mean`.
    #[arg(long, requires = "mean")]
    pub var: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub interval: Option<IntervalArg>,
    /// Number of calibration levels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub levels: Option<u64>,
    /// Number of sparsification fractions.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub fractions: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct IcpArgs {
    /// Source cloud: PLY file or frame manifest JSON.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target cloud: PLY file or frame manifest JSON.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Depth variance raster giving per-point sigma of a frame source.
    #[arg(long)]
    pub source_var: Option<PathBuf>,
    /// Initial pose JSON (default identity).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Fraction of most certain source points kept.
    #[arg(long, value_parser = unit_fraction)]
    pub percentile: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iterations: Option<u64>,
    #[arg(long, value_parser = positive_f64)]
    pub tol: Option<f64>,
    #[arg(long, value_parser = positive_f64)]
    pub max_pair_dist: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Run manifest written by an earlier command.
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<u64>,
    pub render: RenderArgs,
    pub refine: RefineArgs,
    pub eval: EvalArgs,
    pub uncertainty: UncertaintyArgs,
    pub icp: IcpArgs,
}

/// Field-wise `flags.or(config)`.
macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),* $(,)?) => {{
        let (mut f, c) = ($flags, $file);
        $( if f.$field.is_none() { f.$field = c.$field; } )*
        f
    }};
}

impl RenderArgs {
    pub fn overlay(self, c: RenderArgs) -> Self {
        overlay!(self, c; rig, mesh, scene, poses, seed, out)
    }
}

impl RefineArgs {
    pub fn overlay(self, c: RefineArgs) -> Self {
        overlay!(self, c; rig, image, init_depth, init_albedo, init, steps, step_size, levels, coarse_to_fine,
            lambda_smooth, lambda_specular, ensemble, perturbation, seed, out)
    }
}

impl EvalArgs {
    pub fn overlay(self, c: EvalArgs) -> Self {
        overlay!(self, c; pred, gt, no_align, relative_to, pred_normals, gt_normals, pred_image, gt_image, out)
    }
}

impl UncertaintyArgs {
    pub fn overlay(self, c: UncertaintyArgs) -> Self {
        let members_from_flags = !self.members.is_empty() || self.mean.is_some();
        let mut out = overlay!(self, c.clone(); mean, var, gt, interval, levels, fractions, out);
        if !members_from_flags {
            out.members = c.members;
            out.mean = c.mean;
            out.var = c.var;
        }
        out
    }
}

impl IcpArgs {
    pub fn overlay(self, c: IcpArgs) -> Self {
        overlay!(self, c; source, target, source_var, init, percentile, max_iterations, tol, max_pair_dist, out)
    }
}
