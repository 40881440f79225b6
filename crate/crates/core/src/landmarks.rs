//! The 68-point (iBUG) facial landmark schema, its six expression parts,
//! projection of 2D landmarks onto the avatar surface and the ±α
//! augmentation that thickens the deformable band around them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::geom::{is_finite, Vec3};
use crate::sdf::{ray_surface_intersection, DistanceField, ScalarField};

pub const LANDMARK_COUNT: usize = 68;
/// Jaw contour indices `0..17` are excluded from expression transfer.
pub const JAW: std::ops::Range<usize> = 0..17;
pub const EXPRESSION_LANDMARK_COUNT: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacialPart {
    RightBrow,
    LeftBrow,
    Nose,
    RightEye,
    LeftEye,
    Mouth,
}

impl FacialPart {
    pub const ALL: [FacialPart; 6] = [
        FacialPart::RightBrow,
        FacialPart::LeftBrow,
        FacialPart::Nose,
        FacialPart::RightEye,
        FacialPart::LeftEye,
        FacialPart::Mouth,
    ];

    /// iBUG-68 index range of the part.
    pub fn ibug_range(self) -> std::ops::Range<usize> {
        match self {
            FacialPart::RightBrow => 17..22,
            FacialPart::LeftBrow => 22..27,
            FacialPart::Nose => 27..36,
            FacialPart::RightEye => 36..42,
            FacialPart::LeftEye => 42..48,
            FacialPart::Mouth => 48..68,
        }
    }
}

impl fmt::Display for FacialPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FacialPart::RightBrow => "right brow",
            FacialPart::LeftBrow => "left brow",
            FacialPart::Nose => "nose",
            FacialPart::RightEye => "right eye",
            FacialPart::LeftEye => "left eye",
            FacialPart::Mouth => "mouth",
        };
        f.write_str(s)
    }
}

/// Six disjoint landmark groups plus, per group, the members used to
/// estimate the group's orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FacialPartition {
    parts: Vec<(FacialPart, Vec<usize>)>,
    orientation: Vec<Vec<usize>>,
}

impl FacialPartition {
    pub fn parts(&self) -> impl Iterator<Item = (FacialPart, &[usize])> {
        self.parts.iter().map(|(p, idx)| (*p, idx.as_slice()))
    }

    pub fn members(&self, part: FacialPart) -> &[usize] {
        &self.parts[part as usize].1
    }

    pub fn orientation_subset(&self, part: FacialPart) -> &[usize] {
        &self.orientation[part as usize]
    }

    pub fn part_of(&self, index: usize) -> Option<FacialPart> {
        self.parts.iter().find(|(_, idx)| idx.contains(&index)).map(|(p, _)| *p)
    }

    /// All expression indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.parts.iter().flat_map(|(_, i)| i.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    /// Replaces the orientation subset of `part`; members must belong to the
    /// part and number at least three.
    pub fn set_orientation_subset(&mut self, part: FacialPart, subset: Vec<usize>) -> Result<()> {
        if subset.len() < 3 {
            return Err(Error::invalid(format!(
                "orientation subset of {part} needs at least 3 landmarks"
            )));
        }
        if let Some(i) = subset.iter().find(|i| !self.members(part).contains(i)) {
            return Err(Error::invalid(format!("landmark {i} is not part of the {part}")));
        }
        self.orientation[part as usize] = subset;
        Ok(())
    }
}

/// Canonical partition of the iBUG-68 expression landmarks (jaw excluded).
/// Orientation subsets default to the whole part.
pub fn partition_ibug68() -> FacialPartition {
    let parts: Vec<(FacialPart, Vec<usize>)> = FacialPart::ALL.iter().map(|&p| (p, p.ibug_range().collect())).collect();
    let orientation = parts.iter().map(|(_, i)| i.clone()).collect();
    FacialPartition { parts, orientation }
}

/// 68 detected landmarks in image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet2D {
    pub image_size: [u32; 2],
    pub points: Vec<[f64; 2]>,
}

impl LandmarkSet2D {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "expected {LANDMARK_COUNT} landmarks, found {}",
                self.points.len()
            )));
        }
        let [w, h] = self.image_size.map(f64::from);
        if let Some((i, p)) = self
            .points
            .iter()
            .enumerate()
            .find(|(_, p)| !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h))
        {
            return Err(Error::invalid(format!(
                "landmark {i} at {p:?} lies outside the {w}x{h} image"
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        set.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Projected,
    Driver,
    Deformed,
}

/// Sparse 3D landmarks keyed by iBUG index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet3D {
    pub points: BTreeMap<usize, Vec3>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl LandmarkSet3D {
    pub fn new(points: BTreeMap<usize, Vec3>, provenance: Provenance) -> Result<Self> {
        if let Some((i, _)) = points.iter().find(|(_, p)| !is_finite(p)) {
            return Err(Error::invalid(format!("landmark {i} is not finite")));
        }
        if let Some(i) = points.keys().find(|&&i| i >= LANDMARK_COUNT) {
            return Err(Error::invalid(format!("landmark index {i} out of range")));
        }
        Ok(Self { points, provenance })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Vec3> {
        self.points.get(&i)
    }

    /// Points at `indices`, failing on the first missing one.
    pub fn gather(&self, indices: &[usize]) -> Result<Vec<Vec3>> {
        indices
            .iter()
            .map(|i| {
                self.points
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("landmark {i} missing")))
            })
            .collect()
    }

    /// Checks that exactly the expression indices of `partition` are present.
    pub fn require_expression_indices(&self, partition: &FacialPartition) -> Result<()> {
        let want = partition.indices();
        let missing: Vec<usize> = want.iter().copied().filter(|i| !self.points.contains_key(i)).collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!("expression landmarks missing: {missing:?}")));
        }
        if self.points.len() != want.len() {
            return Err(Error::invalid(format!(
                "expected exactly {} expression landmarks, found {}",
                want.len(),
                self.points.len()
            )));
        }
        Ok(())
    }

    /// Restricts to the given indices (silently skipping absent ones).
    pub fn restricted(&self, indices: &[usize]) -> Self {
        Self {
            points: indices
                .iter()
                .filter_map(|i| self.points.get(i).map(|p| (*i, *p)))
                .collect(),
            provenance: self.provenance,
        }
    }
}

/// Outcome of projecting 2D landmarks onto the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedLandmarks {
    pub landmarks: LandmarkSet3D,
    /// Indices resolved by the dense arg-min fallback.
    pub fallback: Vec<usize>,
    /// |f(x)| per index.
    pub residuals: BTreeMap<usize, f64>,
}

/// Casts the camera ray through each expression landmark and keeps its first
/// surface intersection.
pub fn project_landmarks(
    field: &ScalarField,
    camera: &CameraPose,
    lms2d: &LandmarkSet2D,
    eps: f64,
) -> Result<ProjectedLandmarks> {
    project_landmarks_with(field, &field.bounds(), camera, lms2d, eps)
}

pub(crate) fn project_landmarks_with<F: DistanceField + ?Sized>(
    field: &F,
    bounds: &crate::geom::Aabb,
    camera: &CameraPose,
    lms2d: &LandmarkSet2D,
    eps: f64,
) -> Result<ProjectedLandmarks> {
    if camera.image_size != lms2d.image_size {
        return Err(Error::invalid(format!(
            "camera image size {:?} differs from landmark image size {:?}",
            camera.image_size, lms2d.image_size
        )));
    }
    lms2d.validate()?;
    if !(eps > 0.0) {
        return Err(Error::invalid("projection eps must be positive"));
    }
    let t_max = (camera.position - bounds.center()).norm() + bounds.diagonal();
    let partition = partition_ibug68();
    let mut points = BTreeMap::new();
    let mut residuals = BTreeMap::new();
    let mut fallback = Vec::new();
    let mut missing = Vec::new();
    for i in partition.indices() {
        let [u, v] = lms2d.points[i];
        match ray_surface_intersection(field, &camera.ray(u, v), t_max, eps) {
            Some(hit) => {
                points.insert(i, hit.point);
                residuals.insert(i, hit.residual);
                if hit.fallback {
                    fallback.push(i);
                }
            }
            None => missing.push(i),
        }
    }
    if !missing.is_empty() {
        return Err(Error::ProjectionIncomplete { missing });
    }
    Ok(ProjectedLandmarks {
        landmarks: LandmarkSet3D::new(points, Provenance::Projected)?,
        fallback,
        residuals,
    })
}

/// Landmarks plus copies offset by ±α along the front axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLandmarks {
    pub base: LandmarkSet3D,
    pub alpha: f64,
    pub front_axis: Vec3,
    pub plus: BTreeMap<usize, Vec3>,
    pub minus: BTreeMap<usize, Vec3>,
}

impl AugmentedLandmarks {
    /// Base points, then the `+α` copies, then the `−α` copies, each in index order.
    pub fn control_points(&self) -> Vec<Vec3> {
        self.base
            .points
            .values()
            .chain(self.plus.values())
            .chain(self.minus.values())
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        3 * self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

pub fn augment_landmarks(lms: &LandmarkSet3D, alpha: f64, front_axis: &Vec3) -> Result<AugmentedLandmarks> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "additional landmark distance must be positive, got {alpha}"
        )));
    }
    let n = front_axis.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid("front axis must be a non-zero vector"));
    }
    let offset = front_axis / n * alpha;
    Ok(AugmentedLandmarks {
        base: lms.clone(),
        alpha,
        front_axis: front_axis / n,
        plus: lms.points.iter().map(|(&i, p)| (i, p + offset)).collect(),
        minus: lms.points.iter().map(|(&i, p)| (i, p - offset)).collect(),
    })
}
