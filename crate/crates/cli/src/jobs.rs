//! Fully resolved commands and their execution.
//!
//! A job holds every parameter a command depends on, with absolute paths, so
//! that serializing it into the run manifest is enough to reproduce the run.

use std::fs;
use std::path::{Path, PathBuf};

use ldk::fixtures::registration_mesh;
use ldk::geometry::{backproject_cloud, ply::read_ply, PointCloud, PoseSE3};
use ldk::imaging::{read_field, write_field, AlbedoMap, DepthMap, Image, NormalMap, ScalarField};
use ldk::losses::{mean_ssim, pairwise_sum, LossConfig};
use ldk::metrics::{depth_metrics_with, normal_mae, DepthMetrics, RelativeTo};
use ldk::optimizer::{ensemble_refine, refine, InitKind, RefineConfig, RefineResult};
use ldk::registration::{icp_point_to_point, IcpConfig, IcpReport};
use ldk::rig::PhotometricRig;
use ldk::simulator::{make_sphere_mesh, make_tube_scene, read_frame, read_mesh, with_seeded_albedo, write_frame, MeshScene, TriangleMesh};
use ldk::uncertainty::{auce, ause_depth, default_fractions, default_levels, fuse_ensemble, EnsembleOutputs, IntervalKind, PredictiveDepth};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cli::{BuiltinScene, IntervalArg, RelativeArg};
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneSource {
    Mesh(PathBuf),
    Builtin { scene: BuiltinScene, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderJob {
    pub rig: PathBuf,
    pub scene: SceneSource,
    pub poses: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineJob {
    pub rig: PathBuf,
    pub image: PathBuf,
    pub init_depth: Option<PathBuf>,
    pub init_albedo: Option<PathBuf>,
    pub refine: RefineConfig,
    pub loss: LossConfig,
    pub ensemble: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalJob {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub align: bool,
    pub relative_to: RelativeArg,
    pub normals: Option<(PathBuf, PathBuf)>,
    pub images: Option<(PathBuf, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyInput {
    /// Member depth and optional aleatoric variance rasters.
    Members(Vec<(PathBuf, Option<PathBuf>)>),
    /// Predictive mean and variance rasters.
    Predictive { mean: PathBuf, var: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyJob {
    pub input: UncertaintyInput,
    pub gt: PathBuf,
    pub interval: IntervalArg,
    pub levels: usize,
    pub fractions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpJob {
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_var: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub config: IcpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Render(RenderJob),
    Refine(RefineJob),
    Eval(EvalJob),
    Uncertainty(UncertaintyJob),
    Icp(IcpJob),
}

impl Job {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Render(RenderJob { scene: SceneSource::Builtin { seed, .. }, .. }) => Some(*seed),
            Job::Refine(j) => Some(j.seed),
            _ => None,
        }
    }

    pub fn rig(&self) -> Option<&Path> {
        match self {
            Job::Render(j) => Some(&j.rig),
            Job::Refine(j) => Some(&j.rig),
            _ => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = Vec::new();
        match self {
            Job::Render(j) => {
                v.push(j.rig.clone());
                if let SceneSource::Mesh(m) = &j.scene {
                    v.push(m.clone());
                }
                v.extend(j.poses.clone());
            }
            Job::Refine(j) => {
                v.extend([j.rig.clone(), j.image.clone()]);
                v.extend(j.init_depth.clone());
                v.extend(j.init_albedo.clone());
            }
            Job::Eval(j) => {
                v.extend([j.pred.clone(), j.gt.clone()]);
                if let Some((a, b)) = &j.normals {
                    v.extend([a.clone(), b.clone()]);
                }
                if let Some((a, b)) = &j.images {
                    v.extend([a.clone(), b.clone()]);
                }
            }
            Job::Uncertainty(j) => {
                match &j.input {
                    UncertaintyInput::Members(m) => {
                        for (d, var) in m {
                            v.push(d.clone());
                            v.extend(var.clone());
                        }
                    }
                    UncertaintyInput::Predictive { mean, var } => v.extend([mean.clone(), var.clone()]),
                }
                v.push(j.gt.clone());
            }
            Job::Icp(j) => {
                v.extend([j.source.clone(), j.target.clone()]);
                v.extend(j.source_var.clone());
                v.extend(j.init.clone());
            }
        }
        v
    }

    /// Runs the job, writing into `out`; returns the written file names.
    pub fn run(&self, out: &Path) -> CliResult<Vec<String>> {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let mut w = Writer { dir: out.to_path_buf(), files: Vec::new() };
        match self {
            Job::Render(j) => run_render(j, &mut w)?,
            Job::Refine(j) => run_refine(j, &mut w)?,
            Job::Eval(j) => run_eval(j, &mut w)?,
            Job::Uncertainty(j) => run_uncertainty(j, &mut w)?,
            Job::Icp(j) => run_icp(j, &mut w)?,
        }
        Ok(w.files)
    }
}

/// Records every file written into the output directory.
struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn field<T: ldk::imaging::Raster>(&mut self, name: &str, field: &T) -> CliResult<()> {
        let p = self.path(name);
        write_field(&p, field).at(&p)
    }

    fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
        self.text(name, &(text + "\n"))
    }

    fn png(&mut self, name: &str, image: &Image) -> CliResult<()> {
        let p = self.path(name);
        let buf = image::RgbImage::from_fn(image.width as u32, image.height as u32, |u, v| {
            let c = image.at(u as usize, v as usize);
            image::Rgb(c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8))
        });
        buf.save(&p).map_err(|e| match e {
            image::ImageError::IoError(io) => CliError::io(&p, io),
            other => CliError::validation(format!("{}: {other}", p.display())),
        })
    }
}

fn read<T: ldk::imaging::Raster>(path: &Path) -> CliResult<T> {
    read_field(path).at(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn read_rig(path: &Path) -> CliResult<PhotometricRig> {
    PhotometricRig::read(path).at(path)
}

/// Reads an observed image from an `.ldk` raster or an 8-bit PNG.
pub fn read_image(path: &Path) -> CliResult<Image> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if !is_png {
        return read(path);
    }
    let img = image::open(path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => CliError::io(path, io),
            other => CliError::validation(format!("{}: {other}", path.display())),
        })?
        .to_rgb8();
    let data = img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    Image::from_data(img.width() as usize, img.height() as usize, data).at(path)
}

pub fn builtin_mesh(scene: BuiltinScene, seed: u64) -> TriangleMesh {
    match scene {
        BuiltinScene::Tube => make_tube_scene(1.0, 8.0, 4, seed),
        BuiltinScene::Sphere => {
            let c = Vector3::new(0.0, 0.0, 3.0);
            with_seeded_albedo(make_sphere_mesh(c, 1.6, 64, 128, [0.0, 0.0]), c, seed)
        }
        BuiltinScene::Registration => registration_mesh(seed),
    }
}

fn run_render(j: &RenderJob, w: &mut Writer) -> CliResult<()> {
    let rig = read_rig(&j.rig)?;
    let mesh = match &j.scene {
        SceneSource::Mesh(p) => read_mesh(p).at(p)?,
        SceneSource::Builtin { scene, seed } => builtin_mesh(*scene, *seed),
    };
    let poses: Vec<PoseSE3> = match &j.poses {
        Some(p) => read_json(p)?,
        None => vec![PoseSE3::identity()],
    };
    if poses.is_empty() {
        return Err(CliError::validation("pose list is empty"));
    }
    let scene = MeshScene::new(mesh)?;
    let rig_name = j.rig.to_string_lossy().into_owned();
    for (k, pose) in poses.iter().enumerate() {
        let frame = scene.render(&rig, pose)?;
        let stem = format!("frame_{k:03}");
        let m = write_frame(&w.dir, &stem, &frame, &rig_name)?;
        w.files.extend([m.image, m.depth, m.albedo, m.normals, format!("{stem}.json")]);
        w.png(&format!("{stem}.png"), &frame.image)?;
    }
    Ok(())
}

fn loss_csv(traces: &[&[f64]]) -> String {
    let mut s = String::from("step");
    if traces.len() == 1 {
        s.push_str(",loss");
    } else {
        (0..traces.len()).for_each(|m| s.push_str(&format!(",member_{m}")));
    }
    s.push('\n');
    for step in 0..traces[0].len() {
        s.push_str(&step.to_string());
        for t in traces {
            s.push_str(&format!(",{}", t[step]));
        }
        s.push('\n');
    }
    s
}

fn write_result(w: &mut Writer, prefix: &str, r: &RefineResult) -> CliResult<()> {
    w.field(&format!("{prefix}depth.ldk"), &r.depth)?;
    w.field(&format!("{prefix}albedo.ldk"), &r.albedo)?;
    w.field(&format!("{prefix}normals.ldk"), &r.normals)?;
    w.field(&format!("{prefix}rendered.ldk"), &r.rendered)?;
    w.field(&format!("{prefix}var_aleatoric.ldk"), &r.var_aleatoric)?;
    Ok(())
}

fn run_refine(j: &RefineJob, w: &mut Writer) -> CliResult<()> {
    let rig = read_rig(&j.rig)?;
    let image = read_image(&j.image)?;
    let init_depth: Option<DepthMap> = j.init_depth.as_deref().map(read).transpose()?;
    let init_albedo: Option<AlbedoMap> = j.init_albedo.as_deref().map(read).transpose()?;
    if j.ensemble <= 1 {
        let r = refine(&rig, &image, init_depth.as_ref(), init_albedo.as_ref(), &j.loss, &j.refine)?;
        write_result(w, "", &r)?;
        w.png("rendered.png", &r.rendered)?;
        w.text("loss.csv", &loss_csv(&[&r.loss_trace]))?;
        return Ok(());
    }
    let members = ensemble_refine(&rig, &image, init_depth.as_ref(), init_albedo.as_ref(), &j.loss, &j.refine, j.ensemble, j.seed)?;
    for (m, r) in members.iter().enumerate() {
        write_result(w, &format!("member_{m}_"), r)?;
    }
    let traces: Vec<&[f64]> = members.iter().map(|r| r.loss_trace.as_slice()).collect();
    w.text("loss.csv", &loss_csv(&traces))?;
    let fused = fuse_ensemble(&EnsembleOutputs { members: members.iter().map(|r| (r.depth.clone(), r.var_aleatoric.clone())).collect() })?;
    write_predictive(w, &fused)
}

fn write_predictive(w: &mut Writer, p: &PredictiveDepth) -> CliResult<()> {
    w.field("depth.ldk", &p.mean)?;
    w.field("var_aleatoric.ldk", &p.aleatoric_field())?;
    w.field("var_epistemic.ldk", &p.epistemic_field())?;
    w.field("var_total.ldk", &p.total_field())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageScores {
    pub ssim: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub depth: DepthMetrics,
    pub normal_mae_deg: Option<f64>,
    pub image: Option<ImageScores>,
}

fn run_eval(j: &EvalJob, w: &mut Writer) -> CliResult<()> {
    let pred: DepthMap = read(&j.pred)?;
    let gt: DepthMap = read(&j.gt)?;
    let relative = match j.relative_to {
        RelativeArg::GroundTruth => RelativeTo::GroundTruth,
        RelativeArg::Prediction => RelativeTo::Prediction,
    };
    let depth = depth_metrics_with(&pred, &gt, j.align, relative)?;
    let normal_mae_deg = match &j.normals {
        Some((p, g)) => Some(normal_mae(&read::<NormalMap>(p)?, &read::<NormalMap>(g)?)?),
        None => None,
    };
    let image = match &j.images {
        Some((p, g)) => {
            let (a, b) = (read_image(p)?, read_image(g)?);
            if (a.width, a.height) != (b.width, b.height) {
                return Err(CliError::validation("images differ in size"));
            }
            let diffs: Vec<f64> = a.data.iter().zip(&b.data).flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs())).collect();
            Some(ImageScores { ssim: mean_ssim(&a, &b), mae: pairwise_sum(&diffs) / diffs.len() as f64 })
        }
        None => None,
    };
    let report = EvalReport { depth, normal_mae_deg, image };
    w.json("metrics.json", &report)?;
    let mut csv = format!("{},normal_mae_deg,ssim,image_mae\n{}", DepthMetrics::CSV_HEADER, depth.to_csv_row());
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    csv.push_str(&format!(
        ",{},{},{}\n",
        opt(report.normal_mae_deg),
        opt(report.image.as_ref().map(|s| s.ssim)),
        opt(report.image.as_ref().map(|s| s.mae))
    ));
    w.text("metrics.csv", &csv)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub auce_signed: f64,
    pub auce_abs: f64,
    pub ause: f64,
    pub pixels: usize,
}

fn run_uncertainty(j: &UncertaintyJob, w: &mut Writer) -> CliResult<()> {
    let pred = match &j.input {
        UncertaintyInput::Members(list) => {
            let mut members = Vec::with_capacity(list.len());
            for (d, v) in list {
                let depth: DepthMap = read(d)?;
                let var = match v {
                    Some(p) => read::<ScalarField>(p)?,
                    None => ScalarField { width: depth.width, height: depth.height, data: vec![0.0; depth.data.len()], valid: depth.valid.clone() },
                };
                members.push((depth, var));
            }
            fuse_ensemble(&EnsembleOutputs { members })?
        }
        UncertaintyInput::Predictive { mean, var } => {
            let mut mean: DepthMap = read(mean)?;
            let var: ScalarField = read(var)?;
            if (var.width, var.height) != (mean.width, mean.height) {
                return Err(CliError::validation("variance and mean differ in size"));
            }
            for i in 0..mean.data.len() {
                mean.valid[i] &= var.valid[i];
            }
            let v: Vec<f64> = (0..var.data.len()).map(|i| if mean.valid[i] { var.data[i] } else { 0.0 }).collect();
            let p = PredictiveDepth { mean, var_aleatoric: v.clone(), var_epistemic: vec![0.0; v.len()], var_total: v };
            p.validate()?;
            p
        }
    };
    let gt: DepthMap = read(&j.gt)?;
    let kind = match j.interval {
        IntervalArg::Gaussian => IntervalKind::Gaussian,
        IntervalArg::Laplace => IntervalKind::Laplace,
    };
    let cal = auce(&pred, &gt, &default_levels(j.levels), kind)?;
    let sp = ause_depth(&pred, &gt, &default_fractions(j.fractions))?;
    write_predictive(w, &pred)?;
    w.text("calibration.csv", &cal.to_csv())?;
    w.text("sparsification.csv", &sp.to_csv())?;
    let pixels = (0..gt.data.len()).filter(|&i| gt.valid[i] && pred.mean.valid[i]).count();
    w.json("summary.json", &UncertaintySummary { auce_signed: cal.auce_signed, auce_abs: cal.auce_abs, ause: sp.ause, pixels })
}

/// Loads a cloud from a PLY file or back-projects a frame manifest's depth.
fn load_cloud(path: &Path, var: Option<&Path>) -> CliResult<PointCloud> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        if var.is_some() {
            return Err(CliError::usage("--source-var applies to frame sources only"));
        }
        return read_ply(path).at(path);
    }
    let (m, frame) = read_frame(path).at(path)?;
    let rig_path = path.parent().unwrap_or(Path::new(".")).join(&m.rig);
    let rig = read_rig(&rig_path)?;
    let sigma = match var {
        Some(p) => Some(read::<ScalarField>(p)?.map(f64::sqrt)),
        None => None,
    };
    backproject_cloud(&rig.camera, &frame.depth, Some(&frame.image), sigma.as_ref()).at(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IcpOutput {
    #[serde(flatten)]
    pub report: IcpReport,
    pub converged: bool,
    pub retained_fraction: f64,
}

fn run_icp(j: &IcpJob, w: &mut Writer) -> CliResult<()> {
    let source = load_cloud(&j.source, j.source_var.as_deref())?;
    let target = load_cloud(&j.target, None)?;
    let init: PoseSE3 = match &j.init {
        Some(p) => read_json(p)?,
        None => PoseSE3::identity(),
    };
    let r = icp_point_to_point(&source, &target, &init, &j.config)?;
    w.json("icp.json", &IcpOutput { report: IcpReport::from(&r), converged: r.converged, retained_fraction: r.retained_fraction })
}

/// Initialization implied by the refine flags.
pub fn init_kind(init: Option<crate::cli::InitArg>, has_depth: bool) -> InitKind {
    use crate::cli::InitArg;
    match init {
        Some(InitArg::Flat) => InitKind::Flat,
        Some(InitArg::Brightness) => InitKind::Brightness,
        Some(InitArg::Provided) => InitKind::Provided,
        None if has_depth => InitKind::Provided,
        None => InitKind::Flat,
    }
}
