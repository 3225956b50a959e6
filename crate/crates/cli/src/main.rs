mod cli;
mod error;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use ldk::losses::LossConfig;
use ldk::optimizer::{InitKind, RefineConfig};
use ldk::registration::IcpConfig;

use crate::cli::{Cli, Command, ConfigFile, IntervalArg, RelativeArg};
use crate::error::{CliError, CliResult};
use crate::jobs::{init_kind, EvalJob, IcpJob, Job, RefineJob, RenderJob, SceneSource, UncertaintyInput, UncertaintyJob};
use crate::manifest::RunManifest;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return clap_exit(e),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.category.exit_code() as u8)
        }
    }
}

/// Help and version go to stdout with status 0; every other parse failure is
/// a usage error.
fn clap_exit(e: clap::Error) -> ExitCode {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            print!("{}", e.render());
            ExitCode::SUCCESS
        }
        _ => {
            let text = e.render().to_string();
            let text = text.trim_start_matches("error: ").trim_end();
            let mut lines = text.lines();
            eprintln!("{}", CliError::usage(lines.next().unwrap_or_default()));
            for line in lines {
                eprintln!("{line}");
            }
            ExitCode::from(error::Category::Usage.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let threads = cli.threads.or(config.threads);
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure {n} threads: {e}")))?;
    }
    let (job, out) = match cli.command {
        Command::Replay(args) => {
            let recorded = RunManifest::read(&args.manifest)?;
            let out = match args.out {
                Some(o) => absolute(&o)?,
                None => recorded.out.clone(),
            };
            (recorded.job, out)
        }
        command => resolve(command, &config)?,
    };
    let outputs = job.run(&out)?;
    RunManifest::new(job, out, outputs, threads).write()
}

fn load_config(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(p, e))
}

fn abs_opt(p: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
    p.as_deref().map(absolute).transpose()
}

fn required(p: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    absolute(&p.ok_or_else(|| CliError::usage(format!("missing required --{flag}")))?)
}

/// Flag, then the command table of the config file, then the top-level
/// config seed, then `LDK_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: &ConfigFile) -> CliResult<u64> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var("LDK_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::usage(format!("LDK_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Config values bypass clap's range checks, so library validation errors
/// raised while resolving are usage errors.
fn as_usage(e: ldk::Error) -> CliError {
    CliError::usage(e.to_string())
}

fn usize_of(v: Option<u64>, default: usize) -> usize {
    v.map_or(default, |x| x as usize)
}

fn resolve(command: Command, config: &ConfigFile) -> CliResult<(Job, PathBuf)> {
    match command {
        Command::Render(a) => {
            let a = a.overlay(config.render.clone());
            let scene = match (a.mesh, a.scene) {
                (Some(m), None) => SceneSource::Mesh(absolute(&m)?),
                (None, Some(scene)) => SceneSource::Builtin { scene, seed: resolve_seed(a.seed, config)? },
                (Some(_), Some(_)) => return Err(CliError::usage("--mesh and --scene are mutually exclusive")),
                (None, None) => return Err(CliError::usage("missing required --mesh or --scene")),
            };
            let job = RenderJob { rig: required(a.rig, "rig")?, scene, poses: abs_opt(a.poses)? };
            Ok((Job::Render(job), required(a.out, "out")?))
        }
        Command::Refine(a) => {
            let a = a.overlay(config.refine.clone());
            let defaults = RefineConfig::default();
            let init = init_kind(a.init, a.init_depth.is_some());
            if init == InitKind::Provided && a.init_depth.is_none() {
                return Err(CliError::usage("--init provided needs --init-depth"));
            }
            let refine = RefineConfig {
                steps: usize_of(a.steps, defaults.steps),
                step_size: a.step_size.unwrap_or(defaults.step_size),
                levels: usize_of(a.levels, defaults.levels),
                coarse_to_fine: a.coarse_to_fine.unwrap_or(defaults.coarse_to_fine),
                perturbation: a.perturbation.unwrap_or(defaults.perturbation),
                init,
                ..defaults
            };
            refine.validate().map_err(as_usage)?;
            let loss_defaults = LossConfig::default();
            let loss = LossConfig {
                lambda_smooth: a.lambda_smooth.unwrap_or(loss_defaults.lambda_smooth),
                lambda_specular: a.lambda_specular.unwrap_or(loss_defaults.lambda_specular),
                ..loss_defaults
            };
            loss.validate().map_err(as_usage)?;
            let ensemble = usize_of(a.ensemble, 1);
            if ensemble == 0 {
                return Err(CliError::usage("ensemble must be >= 1"));
            }
            let job = RefineJob {
                rig: required(a.rig, "rig")?,
                image: required(a.image, "image")?,
                init_depth: abs_opt(a.init_depth)?,
                init_albedo: abs_opt(a.init_albedo)?,
                refine,
                loss,
                ensemble,
                seed: resolve_seed(a.seed, config)?,
            };
            Ok((Job::Refine(job), required(a.out, "out")?))
        }
        Command::Eval(a) => {
            let a = a.overlay(config.eval.clone());
            let pair = |p: Option<PathBuf>, g: Option<PathBuf>, what: &str| -> CliResult<Option<(PathBuf, PathBuf)>> {
                match (p, g) {
                    (Some(p), Some(g)) => Ok(Some((absolute(&p)?, absolute(&g)?))),
                    (None, None) => Ok(None),
                    _ => Err(CliError::usage(format!("--pred-{what} and --gt-{what} go together"))),
                }
            };
            let job = EvalJob {
                pred: required(a.pred, "pred")?,
                gt: required(a.gt, "gt")?,
                align: !a.no_align.unwrap_or(false),
                relative_to: a.relative_to.unwrap_or(RelativeArg::GroundTruth),
                normals: pair(a.pred_normals, a.gt_normals, "normals")?,
                images: pair(a.pred_image, a.gt_image, "image")?,
            };
            Ok((Job::Eval(job), required(a.out, "out")?))
        }
        Command::Uncertainty(a) => {
            let a = a.overlay(config.uncertainty.clone());
            let input = match (a.members.is_empty(), a.mean, a.var) {
                (false, None, None) => {
                    let mut list = Vec::with_capacity(a.members.len());
                    for m in &a.members {
                        let (d, v) = match m.split_once(':') {
                            Some((d, v)) => (d, Some(v)),
                            None => (m.as_str(), None),
                        };
                        if d.is_empty() || v.is_some_and(str::is_empty) {
                            return Err(CliError::usage(format!("malformed --member {m:?}")));
                        }
                        list.push((absolute(Path::new(d))?, v.map(|v| absolute(Path::new(v))).transpose()?));
                    }
                    UncertaintyInput::Members(list)
                }
                (true, Some(mean), Some(var)) => UncertaintyInput::Predictive { mean: absolute(&mean)?, var: absolute(&var)? },
                (true, None, None) => return Err(CliError::usage("missing required --member or --mean/--var")),
                _ => return Err(CliError::usage("use either --member or --mean with --var")),
            };
            let job = UncertaintyJob {
                input,
                gt: required(a.gt, "gt")?,
                interval: a.interval.unwrap_or(IntervalArg::Gaussian),
                levels: usize_of(a.levels, 100),
                fractions: usize_of(a.fractions, 100),
            };
            if job.levels == 0 || job.fractions == 0 {
                return Err(CliError::usage("levels and fractions must be >= 1"));
            }
            Ok((Job::Uncertainty(job), required(a.out, "out")?))
        }
        Command::Icp(a) => {
            let a = a.overlay(config.icp.clone());
            let d = IcpConfig::default();
            let icp = IcpConfig {
                percentile: a.percentile.unwrap_or(d.percentile),
                max_iterations: usize_of(a.max_iterations, d.max_iterations),
                convergence_tol: a.tol.unwrap_or(d.convergence_tol),
                max_pair_dist: a.max_pair_dist.unwrap_or(d.max_pair_dist),
            };
            icp.validate().map_err(as_usage)?;
            let job = IcpJob {
                source: required(a.source, "source")?,
                target: required(a.target, "target")?,
                source_var: abs_opt(a.source_var)?,
                init: abs_opt(a.init)?,
                config: icp,
            };
            Ok((Job::Icp(job), required(a.out, "out")?))
        }
        Command::Replay(_) => unreachable!("replay is handled by the caller"),
    }
}
