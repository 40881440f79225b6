//! Per-frame deformation assembly, rendering and track playback.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::asset::AvatarAsset;
use super::rig::{Rig, RigDiagnostics, RigOptions};
use super::track::{AnimationTrack, TrackFrame};
use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::landmarks::{FacialPart, LandmarkSet3D};
use crate::motion::{ExpressionDrive, FrameSettings, TransferResult};
use crate::render::{render, Image, RenderSettings, RenderStats, Rendered};
use crate::warp::{Deformation, PoseParams, WarpDiagnostics};

pub const ABLATION_ALPHAS: [f64; 4] = [0.05, 0.15, 0.45, 0.90];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub transfer_ms: f64,
    pub expression_warp_ms: f64,
    pub pose_warp_ms: f64,
    pub render_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub index: Option<usize>,
    pub timings: Timings,
    pub expression: Option<WarpDiagnostics>,
    pub neck: Option<WarpDiagnostics>,
    pub clamped_parts: Vec<FacialPart>,
    pub render: RenderStats,
}

/// A frame's deformation with the intermediate landmarks.
#[derive(Debug, Clone)]
pub struct FrameDeformation {
    pub deformation: Deformation,
    pub transfer: Option<TransferResult>,
    pub diagnostics: FrameDiagnostics,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Transfers the drive, builds the expression warp and the pose warp.
pub fn build_deformation(
    rig: &Rig,
    drive: Option<&ExpressionDrive>,
    driver: &FrameSettings,
    pose: &PoseParams,
) -> Result<FrameDeformation> {
    let mut diagnostics = FrameDiagnostics::default();
    let mut transfer = None;
    let mut expression = None;
    if let Some(drive) = drive {
        let t = Instant::now();
        let result = rig.transfer(drive, driver)?;
        diagnostics.timings.transfer_ms = ms(t);
        let t = Instant::now();
        let warp = rig.expression_warp(&result.expressive, &drive.neutral)?;
        diagnostics.timings.expression_warp_ms = ms(t);
        diagnostics.expression = Some(warp.diagnostics());
        diagnostics.clamped_parts = result.clamped_parts.clone();
        expression = Some(warp);
        transfer = Some(result);
    }
    let t = Instant::now();
    let pose = rig.pose_warp(pose)?;
    diagnostics.timings.pose_warp_ms = ms(t);
    diagnostics.neck = pose.as_ref().map(|p| p.neck_diagnostics());
    Ok(FrameDeformation {
        deformation: Deformation { expression, pose },
        transfer,
        diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub rendered: Rendered,
    pub transfer: Option<TransferResult>,
    pub diagnostics: FrameDiagnostics,
}

pub fn animate_frame(
    rig: &Rig,
    asset: &AvatarAsset,
    drive: Option<&ExpressionDrive>,
    pose: &PoseParams,
    camera: &CameraPose,
    settings: &RenderSettings,
) -> Result<FrameOutput> {
    let start = Instant::now();
    let driver = driver_settings(asset, drive);
    let built = build_deformation(rig, drive, &driver, pose)?;
    let t = Instant::now();
    let rendered = render(&asset.sdf, &asset.color, Some(&built.deformation), camera, settings)?;
    let mut diagnostics = built.diagnostics;
    diagnostics.timings.render_ms = ms(t);
    diagnostics.timings.total_ms = ms(start);
    diagnostics.render = rendered.stats;
    Ok(FrameOutput {
        rendered,
        transfer: built.transfer,
        diagnostics,
    })
}

/// Renders one track frame: resolves its drive and camera, then deforms and renders.
pub fn render_track_frame(
    rig: &Rig,
    asset: &AvatarAsset,
    frame: &TrackFrame,
    settings: &RenderSettings,
) -> Result<FrameOutput> {
    let drive = frame
        .drive
        .as_ref()
        .map(|d| d.resolve(asset.drivers.as_ref()))
        .transpose()?;
    let camera = frame.camera(asset)?;
    animate_frame(rig, asset, drive.as_ref(), &frame.pose, &camera, settings)
}

/// Driver frame settings: from the library when present, else from the
/// drive's own neutral landmarks with a +z front axis.
pub fn driver_settings(asset: &AvatarAsset, drive: Option<&ExpressionDrive>) -> FrameSettings {
    match (&asset.drivers, drive) {
        (Some(lib), _) => lib.frame_settings(),
        (None, Some(d)) => FrameSettings::for_bounds(
            nalgebra::Vector3::z(),
            &crate::geom::Aabb::from_points(d.neutral.points.values()),
        ),
        (None, None) => FrameSettings {
            front_axis: nalgebra::Vector3::z(),
            extent_floor: 0.0,
        },
    }
}

pub fn frame_path(dir: &Path, prefix: &str, index: usize) -> PathBuf {
    dir.join(format!("{prefix}_{index:05}.png"))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub rig: RigDiagnostics,
    pub frames: Vec<FrameDiagnostics>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Renders every frame to `{prefix}_{index:05}.png` in `out_dir` and writes
/// `diagnostics.json`. The whole track is validated before rendering starts.
pub fn animate_track(
    rig: &Rig,
    asset: &AvatarAsset,
    track: &AnimationTrack,
    out_dir: &Path,
    prefix: &str,
    settings: &RenderSettings,
) -> Result<TrackReport> {
    track.validate(asset, rig.pose_enabled())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = TrackReport {
        rig: rig.diagnostics(),
        frames: Vec::with_capacity(track.frames.len()),
        files: Vec::with_capacity(track.frames.len()),
    };
    for (i, frame) in track.frames.iter().enumerate() {
        let run = || -> Result<(FrameDiagnostics, PathBuf)> {
            let out = render_track_frame(rig, asset, frame, settings)?;
            let path = frame_path(out_dir, prefix, i);
            out.rendered.image.write_png(&path)?;
            let mut d = out.diagnostics;
            d.index = Some(i);
            Ok((d, path))
        };
        let (d, path) = run().map_err(|e| Error::Frame {
            frame: i,
            source: Box::new(e),
        })?;
        log::info!("frame {i}: {:.0} ms", d.timings.total_ms);
        report.frames.push(d);
        report.files.push(path);
    }
    let diag_path = out_dir.join(DIAGNOSTICS_FILE);
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    fs::write(&diag_path, json).map_err(|e| Error::io(&diag_path, e))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AlphaAblation {
    pub alphas: Vec<f64>,
    pub images: Vec<Image>,
    /// Images tiled two per row, in `alphas` order.
    pub sheet: Image,
}

impl AlphaAblation {
    /// Mean absolute pixel delta between the renders at two alphas.
    pub fn delta(&self, a: f64, b: f64) -> Option<f64> {
        let ia = self.alphas.iter().position(|&x| x == a)?;
        let ib = self.alphas.iter().position(|&x| x == b)?;
        self.images[ia].mean_abs_delta(&self.images[ib]).ok()
    }
}

/// Renders the same drive with rigs built at each additional-landmark distance.
pub fn ablate_alpha(
    asset: &AvatarAsset,
    drive: &ExpressionDrive,
    alphas: &[f64],
    camera: &CameraPose,
    settings: &RenderSettings,
) -> Result<AlphaAblation> {
    let mut images = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let rig = Rig::new(
            asset,
            RigOptions {
                alpha,
                ..RigOptions::from_asset(asset)
            },
        )?;
        let out = animate_frame(&rig, asset, Some(drive), &PoseParams::default(), camera, settings)?;
        images.push(out.rendered.image);
    }
    let sheet = Image::contact_sheet(&images, 2, [0, 0, 0, 255])?;
    Ok(AlphaAblation {
        alphas: alphas.to_vec(),
        images,
        sheet,
    })
}

/// Image-space position of each expression landmark after the frame's
/// expression and pose deformation.
pub fn projected_landmarks(
    frame: &FrameDeformation,
    neutral: &LandmarkSet3D,
    camera: &CameraPose,
) -> Vec<(usize, [f64; 2])> {
    let moved = frame.transfer.as_ref().map_or(neutral, |t| &t.expressive);
    moved
        .points
        .iter()
        .filter_map(|(&i, p)| {
            let q = frame.deformation.pose.as_ref().map_or(*p, |w| w.forward(p));
            camera.project(&q).map(|uv| (i, uv))
        })
        .collect()
}
