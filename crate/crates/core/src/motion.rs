//! Per-part motion transfer from a driver face to the avatar.
//!
//! Each facial part gets a frame: an orientation `n` (least-squares normal to
//! every chord between the part's orientation landmarks), the minimal
//! rotation taking `n` to +z, and the extents of the aligned bounding box.
//! A driver displacement is expressed in the driver part's normalized frame
//! and re-expanded in the avatar part's frame:
//!
//! ```text
//! u_s = R_sᵀ · A_s⁻¹ · A_d · R_d · u_d,   A = diag(1/a_x, 1/a_y, 1/a_z)
//! ```
//!
//! which zeroes `Σ ‖A_d R_d u_d − A_s R_s u_s‖²` landmark by landmark.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Mat3, Vec3};
use crate::landmarks::{FacialPart, FacialPartition, LandmarkSet3D, Provenance};

/// Relative eigenvalue threshold below which a part counts as collinear.
const COLLINEAR_REL: f64 = 1e-9;
/// Extent floor as a fraction of the reference bounding-box diagonal.
pub const EXTENT_FLOOR_FRACTION: f64 = 1e-4;

/// Unit normal minimizing `Σ_{i<j} (n · (p_i − p_j))²`, oriented so that
/// `n · front_axis ≥ 0` (ties broken by `n_z`, then `n_y`, then `n_x ≥ 0`).
pub fn part_orientation(points: &[Vec3], front_axis: &Vec3) -> Result<Vec3> {
    if points.len() < 3 {
        return Err(Error::invalid("part orientation needs at least 3 points"));
    }
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    // Σ_{i<j} d dᵀ = N · Σ_i (p_i − p̄)(p_i − p̄)ᵀ
    let scatter = points
        .iter()
        .map(|p| {
            let d = p - mean;
            d * d.transpose()
        })
        .sum::<Mat3>()
        * points.len() as f64;
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    if largest <= 0.0 || eig.eigenvalues[order[1]] <= COLLINEAR_REL * largest {
        return Err(Error::invalid("part landmarks are collinear"));
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).normalize();
    Ok(orient_like(n, front_axis))
}

fn orient_like(n: Vec3, front: &Vec3) -> Vec3 {
    let d = n.dot(front);
    if d > 1e-12 {
        return n;
    }
    if d < -1e-12 {
        return -n;
    }
    for c in [2, 1, 0] {
        if n[c] > 0.0 {
            return n;
        }
        if n[c] < 0.0 {
            return -n;
        }
    }
    n
}

/// Minimal rotation taking unit `n` onto +z; the antipodal case uses a
/// half-turn about x.
pub fn align_rotation(n: &Vec3) -> Mat3 {
    let z = Vec3::z();
    let c = n.dot(&z);
    if c < -1.0 + 1e-9 {
        return Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    }
    let v = n.cross(&z);
    let k = v.cross_matrix();
    Mat3::identity() + k + k * k / (1.0 + c)
}

/// Orientation, alignment and size of one facial part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartFrame {
    pub part: FacialPart,
    pub normal: Vec3,
    pub rotation: Mat3,
    /// Aligned bounding-box extents, floored at `extent_floor`.
    pub extents: Vec3,
    /// Diagonal of `A`: reciprocal extents.
    pub scale: Vec3,
    /// Whether any extent hit the floor.
    pub clamped: bool,
}

pub fn part_frame(part: FacialPart, points: &[Vec3], front_axis: &Vec3, extent_floor: f64) -> Result<PartFrame> {
    let normal = part_orientation(points, front_axis).map_err(|_| Error::DegeneratePart { part })?;
    let rotation = align_rotation(&normal);
    let aligned: Vec<Vec3> = points.iter().map(|p| rotation * p).collect();
    let raw = Aabb::from_points(&aligned).extent();
    let extents = raw.map(|e| e.max(extent_floor));
    Ok(PartFrame {
        part,
        normal,
        rotation,
        extents,
        scale: extents.map(|e| 1.0 / e),
        clamped: raw.iter().any(|&e| e < extent_floor),
    })
}

/// Driver motion: neutral and expressive landmarks over the same indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDrive {
    pub neutral: LandmarkSet3D,
    pub expressive: LandmarkSet3D,
}

impl ExpressionDrive {
    pub fn new(neutral: LandmarkSet3D, expressive: LandmarkSet3D) -> Result<Self> {
        if !neutral.points.keys().eq(expressive.points.keys()) {
            return Err(Error::invalid(
                "driver neutral and expressive landmarks cover different indices",
            ));
        }
        Ok(Self { neutral, expressive })
    }

    /// Driver held at its neutral pose.
    pub fn still(neutral: LandmarkSet3D) -> Self {
        Self {
            expressive: neutral.clone(),
            neutral,
        }
    }

    /// Linear blend `neutral + w · (expressive − neutral)` of the driver.
    pub fn blended(neutral: &LandmarkSet3D, target: &LandmarkSet3D, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!("blend weight {w} outside [0, 1]")));
        }
        let mut points = BTreeMap::new();
        for (i, n) in &neutral.points {
            let t = target
                .get(*i)
                .ok_or_else(|| Error::invalid(format!("driver pose lacks landmark {i}")))?;
            points.insert(*i, n + (t - n) * w);
        }
        Self::new(neutral.clone(), LandmarkSet3D::new(points, Provenance::Driver)?)
    }

    pub fn displacement(&self, i: usize) -> Option<Vec3> {
        Some(self.expressive.get(i)? - self.neutral.get(i)?)
    }
}

/// Where a side's part frames come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSettings {
    pub front_axis: Vec3,
    pub extent_floor: f64,
}

impl FrameSettings {
    /// Floor derived from a reference bounding box.
    pub fn for_bounds(front_axis: Vec3, bounds: &Aabb) -> Self {
        Self {
            front_axis,
            extent_floor: EXTENT_FLOOR_FRACTION * bounds.diagonal(),
        }
    }
}

pub fn part_frames(
    landmarks: &LandmarkSet3D,
    partition: &FacialPartition,
    settings: &FrameSettings,
) -> Result<Vec<PartFrame>> {
    FacialPart::ALL
        .iter()
        .map(|&part| {
            let pts = landmarks.gather(partition.orientation_subset(part))?;
            part_frame(part, &pts, &settings.front_axis, settings.extent_floor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    /// Avatar displacement per landmark.
    pub displacements: BTreeMap<usize, Vec3>,
    /// Avatar landmarks after applying the displacements.
    pub expressive: LandmarkSet3D,
    pub driver_frames: Vec<PartFrame>,
    /// Parts whose frames were extent-clamped on either side.
    pub clamped_parts: Vec<FacialPart>,
}

/// Avatar side of the transfer, precomputed once per rig.
#[derive(Debug, Clone)]
pub struct MotionTransfer {
    partition: FacialPartition,
    neutral: LandmarkSet3D,
    frames: Vec<PartFrame>,
}

impl MotionTransfer {
    pub fn new(neutral: LandmarkSet3D, partition: FacialPartition, settings: &FrameSettings) -> Result<Self> {
        neutral.require_expression_indices(&partition)?;
        let frames = part_frames(&neutral, &partition, settings)?;
        Ok(Self {
            partition,
            neutral,
            frames,
        })
    }

    pub fn frames(&self) -> &[PartFrame] {
        &self.frames
    }

    pub fn neutral(&self) -> &LandmarkSet3D {
        &self.neutral
    }

    pub fn partition(&self) -> &FacialPartition {
        &self.partition
    }

    pub fn transfer(&self, drive: &ExpressionDrive, driver: &FrameSettings) -> Result<TransferResult> {
        drive.neutral.require_expression_indices(&self.partition)?;
        drive.expressive.require_expression_indices(&self.partition)?;
        let driver_frames = part_frames(&drive.neutral, &self.partition, driver)?;
        let mut displacements = BTreeMap::new();
        let mut points = BTreeMap::new();
        let mut clamped_parts = Vec::new();
        for (k, (part, members)) in self.partition.parts().enumerate() {
            let (src, drv) = (&self.frames[k], &driver_frames[k]);
            if src.clamped || drv.clamped {
                clamped_parts.push(part);
            }
            let ratio = Mat3::from_diagonal(&src.extents.component_mul(&drv.scale));
            let map = src.rotation.transpose() * ratio * drv.rotation;
            for &i in members {
                let ud = drive.displacement(i).expect("checked above");
                let us = map * ud;
                displacements.insert(i, us);
                points.insert(i, self.neutral.points[&i] + us);
            }
        }
        Ok(TransferResult {
            displacements,
            expressive: LandmarkSet3D::new(points, Provenance::Deformed)?,
            driver_frames,
            clamped_parts,
        })
    }
}

/// One-shot transfer: `L^{s,exp}` from the avatar's neutral landmarks and a drive.
pub fn transfer_displacements(
    src_neutral: &LandmarkSet3D,
    drive: &ExpressionDrive,
    partition: &FacialPartition,
    source: &FrameSettings,
    driver: &FrameSettings,
) -> Result<LandmarkSet3D> {
    MotionTransfer::new(src_neutral.clone(), partition.clone(), source)?
        .transfer(drive, driver)
        .map(|r| r.expressive)
}
