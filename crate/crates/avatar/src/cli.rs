use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use avatar_core::fixture::write_fixture;
use avatar_core::pipeline::{
    ablate_alpha, animate_track, load_avatar, orbit_camera, rig_avatar, AnimationTrack, ABLATION_ALPHAS,
};
use avatar_core::render::{render, RenderSettings};
use avatar_core::Execution;
use clap::{Parser, Subcommand};
use serde::Serialize;

use axum::http::StatusCode;

use crate::service::{self, ApiError, AppState, DEFAULT_PORT};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "avatar", version, about = "Rig and animate implicit-surface avatars")]
pub struct Cli {
    /// Render on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lift the manifest's 2D landmarks onto the surface.
    ProjectLandmarks {
        manifest: PathBuf,
        /// Output JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the undeformed avatar.
    Render {
        manifest: PathBuf,
        /// Orbit azimuth in degrees about the avatar center.
        #[arg(long, allow_hyphen_values = true)]
        yaw: Option<f64>,
        /// Orbit elevation in degrees.
        #[arg(long, allow_hyphen_values = true)]
        pitch: Option<f64>,
        /// Output resolution, e.g. 256x256 (defaults to the front camera's).
        #[arg(long, value_parser = parse_resolution)]
        res: Option<[u32; 2]>,
        #[arg(long, default_value = "render.png")]
        out: PathBuf,
    },
    /// Render every frame of a track to DIR/frame_NNNNN.png.
    Animate {
        manifest: PathBuf,
        track: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_parser = parse_resolution)]
        res: Option<[u32; 2]>,
    },
    /// Run the local studio service.
    Serve {
        /// Avatar to load at startup.
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Static UI files to serve under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Write the procedural bust fixture (manifest, assets and a 10-frame track).
    MakeFixture { dir: PathBuf },
    /// Render one drive at several landmark offsets and tile them into a sheet.
    AblateAlpha {
        manifest: PathBuf,
        #[arg(long, default_value = "mouth_open")]
        pose: String,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        #[arg(long, value_delimiter = ',', default_values_t = ABLATION_ALPHAS)]
        alphas: Vec<f64>,
        #[arg(long, value_parser = parse_resolution)]
        res: Option<[u32; 2]>,
        #[arg(long, default_value = "ablation.png")]
        out: PathBuf,
    },
}

pub fn parse_resolution(s: &str) -> Result<[u32; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("invalid dimension `{v}` in `{s}`"))
    };
    Ok([parse(w)?, parse(h)?])
}

/// Exit code for a failed command: validation errors are 2, anything else 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<avatar_core::Error>()
            .is_some_and(|e| e.is_validation())
            || e.downcast_ref::<ApiError>()
                .is_some_and(|e| e.status == StatusCode::UNPROCESSABLE_ENTITY)
    });
    if validation {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

fn settings(cli: &Cli, res: Option<[u32; 2]>, default: [u32; 2]) -> RenderSettings {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    RenderSettings::default()
        .with_execution(exec)
        .with_resolution(res.unwrap_or(default))
}

#[derive(Serialize)]
struct ProjectedOutput {
    landmarks: avatar_core::landmarks::LandmarkSet3D,
    fallback: Vec<usize>,
    max_residual: f64,
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::ProjectLandmarks { manifest, out } => {
            let asset = load_avatar(manifest)?;
            let rig = rig_avatar(&asset)?;
            let d = rig.diagnostics();
            write_json(
                out.as_deref(),
                &ProjectedOutput {
                    landmarks: rig.src_neutral().clone(),
                    fallback: d.projection_fallback,
                    max_residual: d.max_projection_residual,
                },
            )
        }
        Command::Render {
            manifest,
            yaw,
            pitch,
            res,
            out,
        } => {
            let asset = load_avatar(manifest)?;
            let camera = match (yaw, pitch) {
                (None, None) => asset.front_camera.clone(),
                _ => orbit_camera(&asset, yaw.unwrap_or(0.0), pitch.unwrap_or(0.0), None)?,
            };
            let s = settings(&cli, *res, asset.front_camera.image_size);
            let r = render(&asset.sdf, &asset.color, None, &camera, &s)?;
            r.image.write_png(out)?;
            log::info!("{} hits, wrote {}", r.stats.hits, out.display());
            Ok(())
        }
        Command::Animate {
            manifest,
            track,
            out_dir,
            res,
        } => {
            let asset = load_avatar(manifest)?;
            let track = AnimationTrack::load(track)?;
            let rig = rig_avatar(&asset)?;
            let s = settings(&cli, *res, asset.front_camera.image_size);
            let report = animate_track(&rig, &asset, &track, out_dir, "frame", &s)?;
            println!("wrote {} frames to {}", report.files.len(), out_dir.display());
            Ok(())
        }
        Command::Serve { manifest, port, ui } => {
            let app = AppState::new(settings(&cli, None, [256, 256]));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                if let Some(m) = manifest {
                    app.load(m).await.with_context(|| format!("loading {}", m.display()))?;
                }
                service::serve(app, *port, ui.as_deref()).await?;
                Ok(())
            })
        }
        Command::MakeFixture { dir } => {
            let paths = write_fixture(dir, Execution::default())?;
            println!("{}", paths.manifest.display());
            println!("{}", paths.track.display());
            Ok(())
        }
        Command::AblateAlpha {
            manifest,
            pose,
            w,
            alphas,
            res,
            out,
        } => {
            let asset = load_avatar(manifest)?;
            let lib = asset.drivers.as_ref().context("the manifest has no driver library")?;
            let drive = lib.drive(pose, *w)?;
            let s = settings(&cli, *res, asset.front_camera.image_size);
            let ab = ablate_alpha(&asset, &drive, alphas, &asset.front_camera, &s)?;
            ab.sheet.write_png(out)?;
            for pair in alphas.windows(2) {
                let d = ab.delta(pair[0], pair[1]).unwrap_or(f64::NAN);
                println!("alpha {} -> {}: mean pixel delta {:.3}%", pair[0], pair[1], 100.0 * d);
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolutions() {
        assert_eq!(parse_resolution("320x240"), Ok([320, 240]));
        assert_eq!(parse_resolution("64X64"), Ok([64, 64]));
        assert!(parse_resolution("0x10").is_err());
        assert!(parse_resolution("256").is_err());
        assert!(parse_resolution("axb").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
