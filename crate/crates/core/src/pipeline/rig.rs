//! Rig construction: landmark projection, source part frames, the neutral
//! expression tetrahedralization and the cage geometry.

use serde::Serialize;

use super::asset::{AugmentationSite, AvatarAsset};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::landmarks::{
    augment_landmarks, partition_ibug68, project_landmarks, FacialPart, FacialPartition, LandmarkSet3D,
    ProjectedLandmarks,
};
use crate::motion::{ExpressionDrive, FrameSettings, MotionTransfer, PartFrame, TransferResult};
use crate::warp::{
    anchor_points, CageGeometry, DelaunayReport, ExpressionTopology, PoseDeformation, PoseParams, WarpField,
};

/// Projection tolerance as a fraction of the asset diagonal.
pub const PROJECTION_EPS_FRACTION: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigOptions {
    pub alpha: f64,
    pub augmentation: AugmentationSite,
    pub samples_per_loop: usize,
}

impl RigOptions {
    pub fn from_asset(asset: &AvatarAsset) -> Self {
        Self {
            alpha: asset.alpha,
            augmentation: asset.manifest.augmentation,
            samples_per_loop: asset.samples_per_loop(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RigDiagnostics {
    pub alpha: f64,
    pub projection_fallback: Vec<usize>,
    pub max_projection_residual: f64,
    pub clamped_source_parts: Vec<FacialPart>,
    pub expression_delaunay: Option<DelaunayReport>,
    pub neck_delaunay: Option<DelaunayReport>,
    pub loops_found: Option<[usize; 2]>,
    pub samples_per_loop: usize,
}

#[derive(Debug, Clone)]
pub struct Rig {
    pub options: RigOptions,
    pub projection: ProjectedLandmarks,
    pub front_axis: Vec3,
    pub anchors: [Vec3; 8],
    transfer: MotionTransfer,
    source_settings: FrameSettings,
    expression: Option<ExpressionTopology>,
    cages: Option<CageGeometry>,
}

impl Rig {
    pub fn new(asset: &AvatarAsset, options: RigOptions) -> Result<Self> {
        if !(options.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", options.alpha)));
        }
        let bounds = asset.bounds();
        let eps = PROJECTION_EPS_FRACTION * bounds.diagonal();
        let projection = project_landmarks(&asset.sdf, &asset.front_camera, &asset.landmarks_2d, eps)?;
        let front_axis = asset.front_axis();
        let source_settings = FrameSettings::for_bounds(front_axis, &bounds);
        let transfer = MotionTransfer::new(projection.landmarks.clone(), partition_ibug68(), &source_settings)?;
        let anchors = anchor_points(&bounds);
        let expression = match options.augmentation {
            AugmentationSite::SourceNeutral => {
                let aug = augment_landmarks(&projection.landmarks, options.alpha, &front_axis)?;
                Some(ExpressionTopology::new(&aug, &anchors)?)
            }
            AugmentationSite::DriverNeutral => None,
        };
        let mut rig = Self {
            options,
            projection,
            front_axis,
            anchors,
            transfer,
            source_settings,
            expression,
            cages: None,
        };
        rig.set_torso_line(asset, asset.y_torso)?;
        Ok(rig)
    }

    pub fn src_neutral(&self) -> &LandmarkSet3D {
        &self.projection.landmarks
    }

    pub fn partition(&self) -> &FacialPartition {
        self.transfer.partition()
    }

    pub fn source_frames(&self) -> &[PartFrame] {
        self.transfer.frames()
    }

    pub fn source_settings(&self) -> &FrameSettings {
        &self.source_settings
    }

    pub fn cages(&self) -> Option<&CageGeometry> {
        self.cages.as_ref()
    }

    pub fn pose_enabled(&self) -> bool {
        self.cages.is_some()
    }

    /// Rebuilds the cage geometry for a new torso line (`None` disables posing).
    pub fn set_torso_line(&mut self, asset: &AvatarAsset, y_torso: Option<f64>) -> Result<()> {
        self.cages = match y_torso {
            Some(t) => Some(CageGeometry::new(
                &asset.mesh,
                asset.y_head,
                t,
                self.options.samples_per_loop,
                &self.anchors,
            )?),
            None => None,
        };
        Ok(())
    }

    pub fn transfer(&self, drive: &ExpressionDrive, driver: &FrameSettings) -> Result<TransferResult> {
        self.transfer.transfer(drive, driver)
    }

    /// Expression warp taking the neutral control points to `expressive`.
    pub fn expression_warp(&self, expressive: &LandmarkSet3D, driver_neutral: &LandmarkSet3D) -> Result<WarpField> {
        let deformed = augment_landmarks(expressive, self.options.alpha, &self.front_axis)?;
        match &self.expression {
            Some(topology) => topology.warp(&deformed),
            None => {
                let neutral = augment_landmarks(driver_neutral, self.options.alpha, &self.front_axis)?;
                ExpressionTopology::new(&neutral, &self.anchors)?.warp(&deformed)
            }
        }
    }

    /// `None` for the identity pose on a rig without a torso line.
    pub fn pose_warp(&self, pose: &PoseParams) -> Result<Option<PoseDeformation>> {
        pose.validate()?;
        match &self.cages {
            Some(c) => c.pose(pose).map(Some),
            None if pose.is_identity() => Ok(None),
            None => Err(Error::TorsoLineUnset),
        }
    }

    pub fn diagnostics(&self) -> RigDiagnostics {
        RigDiagnostics {
            alpha: self.options.alpha,
            projection_fallback: self.projection.fallback.clone(),
            max_projection_residual: self.projection.residuals.values().copied().fold(0.0, f64::max),
            clamped_source_parts: self
                .source_frames()
                .iter()
                .filter(|f| f.clamped)
                .map(|f| f.part)
                .collect(),
            expression_delaunay: self.expression.as_ref().map(|e| e.report.clone()),
            neck_delaunay: self.cages.as_ref().map(|c| c.delaunay.clone()),
            loops_found: self.cages.as_ref().map(|c| c.loops_found),
            samples_per_loop: self.options.samples_per_loop,
        }
    }
}

pub fn rig_avatar(asset: &AvatarAsset) -> Result<Rig> {
    Rig::new(asset, RigOptions::from_asset(asset))
}
