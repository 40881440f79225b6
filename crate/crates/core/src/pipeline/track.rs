//! Animation tracks and the per-frame drive/camera descriptions shared with
//! the service.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::asset::AvatarAsset;
use super::driver::{parse_landmark_map, DriverLibrary};
use crate::camera::{CameraPose, CameraSpec};
use crate::error::{Error, Result};
use crate::motion::ExpressionDrive;
use crate::warp::PoseParams;

/// Expression input for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriveSpec {
    /// Linear blend from the driver neutral toward a named pose.
    Blend { pose: String, w: f64 },
    /// Explicit driver landmarks, keyed by index.
    Expressive { expressive: BTreeMap<String, [f64; 3]> },
}

impl DriveSpec {
    pub fn validate(&self, drivers: Option<&DriverLibrary>) -> Result<()> {
        let lib = drivers.ok_or_else(|| Error::invalid("expression drive requires a driver library"))?;
        match self {
            DriveSpec::Blend { pose, w } => {
                if !(0.0..=1.0).contains(w) {
                    return Err(Error::invalid(format!("blend weight {w} outside [0, 1]")));
                }
                lib.pose(pose).map(|_| ())
            }
            DriveSpec::Expressive { expressive } => {
                let set = parse_landmark_map(expressive)?;
                ExpressionDrive::new(lib.neutral.clone(), set).map(|_| ())
            }
        }
    }

    pub fn resolve(&self, drivers: Option<&DriverLibrary>) -> Result<ExpressionDrive> {
        let lib = drivers.ok_or_else(|| Error::invalid("expression drive requires a driver library"))?;
        match self {
            DriveSpec::Blend { pose, w } => lib.drive(pose, *w),
            DriveSpec::Expressive { expressive } => lib.drive_to(parse_landmark_map(expressive)?),
        }
    }
}

/// A camera given explicitly or as an orbit about the asset center.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraChoice {
    Orbit {
        azimuth: f64,
        elevation: f64,
        /// Defaults to the front camera's distance from the asset center.
        #[serde(default)]
        distance: Option<f64>,
    },
    Pose(CameraSpec),
}

impl CameraChoice {
    pub fn resolve(&self, asset: &AvatarAsset) -> Result<CameraPose> {
        match self {
            CameraChoice::Orbit {
                azimuth,
                elevation,
                distance,
            } => orbit_camera(asset, *azimuth, *elevation, *distance),
            CameraChoice::Pose(spec) => spec.clone().try_into(),
        }
    }
}

/// Camera orbiting the asset center, keeping the front camera's projection.
/// Orbit about the point of the front camera's view axis nearest the asset
/// center, so azimuth and elevation 0 reproduce a level front view. `distance`
/// defaults to the front camera's distance from that point.
pub fn orbit_camera(asset: &AvatarAsset, azimuth: f64, elevation: f64, distance: Option<f64>) -> Result<CameraPose> {
    let front = &asset.front_camera;
    let dir = front.view_direction();
    let along = (asset.bounds().center() - front.position).dot(&dir).max(0.0);
    let center = front.position + dir * along;
    let distance = distance.unwrap_or(along);
    let orbit = front.orbit(&center, azimuth, elevation, distance)?;
    // orbit() places azimuth 0 on +z; turn it onto the front camera's side
    let base = dir.z.atan2(dir.x) + std::f64::consts::FRAC_PI_2;
    Ok(orbit.rotated_about_vertical(&center, -base))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSpec>,
    #[serde(default)]
    pub pose: PoseParams,
    /// Defaults to the asset's front camera.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraChoice>,
}

impl TrackFrame {
    pub fn camera(&self, asset: &AvatarAsset) -> Result<CameraPose> {
        match &self.camera {
            Some(c) => c.resolve(asset),
            None => Ok(asset.front_camera.clone()),
        }
    }

    pub fn validate(&self, asset: &AvatarAsset, pose_enabled: bool) -> Result<()> {
        if let Some(d) = &self.drive {
            d.validate(asset.drivers.as_ref())?;
        }
        self.pose.validate()?;
        if !self.pose.is_identity() && !pose_enabled {
            return Err(Error::TorsoLineUnset);
        }
        self.camera(asset)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnimationTrack {
    pub frames: Vec<TrackFrame>,
}

impl AnimationTrack {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed track: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Checks every frame up front, so no frame renders from an invalid track.
    pub fn validate(&self, asset: &AvatarAsset, pose_enabled: bool) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::invalid("track has no frames"));
        }
        for (i, f) in self.frames.iter().enumerate() {
            f.validate(asset, pose_enabled)
                .map_err(|e| Error::invalid(format!("track frame {i}: {e}")))?;
        }
        Ok(())
    }
}
