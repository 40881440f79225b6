//! Space deformations: the expression warp around the face landmarks and
//! the pose warp of head, torso and neck, composed into one deformation
//! whose inverse the renderer evaluates.

pub mod cage;
pub mod delaunay;
pub mod field;

use std::sync::Arc;

pub use cage::{
    build_pose_warp, cage_membership, cage_transform, region_of, CageGeometry, CageSpec, CageTransform,
    PoseDeformation, PoseParams, Region, ANCHOR_INFLATION,
};
pub use delaunay::{delaunay_3d, DelaunayReport, TetMesh};
pub use field::{TetLocation, WarpDiagnostics, WarpField, BARYCENTRIC_TOLERANCE};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::landmarks::AugmentedLandmarks;

/// The eight far-field anchors for an asset box.
pub fn anchor_points(bounds: &Aabb) -> [Vec3; 8] {
    bounds.inflated(ANCHOR_INFLATION).corners()
}

/// Neutral tetrahedralization of augmented landmarks plus anchors.
#[derive(Debug, Clone)]
pub struct ExpressionTopology {
    mesh: Arc<TetMesh>,
    indices: Vec<usize>,
    anchors: Vec<Vec3>,
    pub report: DelaunayReport,
}

impl ExpressionTopology {
    pub fn new(aug_neutral: &AugmentedLandmarks, anchors: &[Vec3]) -> Result<Self> {
        let mut points = aug_neutral.control_points();
        points.extend(anchors);
        let (mesh, report) = delaunay_3d(&points)?;
        Ok(Self {
            mesh: Arc::new(mesh),
            indices: aug_neutral.base.points.keys().copied().collect(),
            anchors: anchors.to_vec(),
            report,
        })
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Warp moving the neutral control points onto `aug_deformed`.
    pub fn warp(&self, aug_deformed: &AugmentedLandmarks) -> Result<WarpField> {
        if !aug_deformed.base.points.keys().eq(self.indices.iter()) {
            return Err(Error::invalid(
                "deformed landmarks are not index-aligned with the neutral landmarks",
            ));
        }
        let mut deformed = aug_deformed.control_points();
        deformed.extend(&self.anchors);
        WarpField::new(self.mesh.clone(), deformed)
    }
}

pub fn build_expression_warp(
    aug_neutral: &AugmentedLandmarks,
    aug_deformed: &AugmentedLandmarks,
    anchors: &[Vec3],
) -> Result<WarpField> {
    ExpressionTopology::new(aug_neutral, anchors)?.warp(aug_deformed)
}

/// Walk hints for the two warps, one set per ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarpHints {
    pub expression: u32,
    pub neck: u32,
}

impl Default for WarpHints {
    fn default() -> Self {
        Self {
            expression: u32::MAX,
            neck: u32::MAX,
        }
    }
}

/// Expression warp followed by pose warp (canonical → animated).
#[derive(Debug, Clone, Default)]
pub struct Deformation {
    pub expression: Option<WarpField>,
    pub pose: Option<PoseDeformation>,
}

impl Deformation {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.expression.as_ref().is_none_or(WarpField::is_identity)
            && self.pose.as_ref().is_none_or(PoseDeformation::is_identity)
    }

    /// Canonical → animated.
    pub fn forward(&self, p: &Vec3) -> Vec3 {
        let q = self.expression.as_ref().map_or(*p, |w| w.forward(p));
        self.pose.as_ref().map_or(q, |w| w.forward(&q))
    }

    /// Animated → canonical: pose inverse first, then expression inverse.
    pub fn inverse(&self, x: &Vec3) -> Vec3 {
        self.inverse_hinted(x, &mut WarpHints::default()).0
    }

    pub fn inverse_hinted(&self, x: &Vec3, hints: &mut WarpHints) -> (Vec3, Option<Region>) {
        let (q, region) = match &self.pose {
            Some(pose) => {
                let (q, r) = pose.inverse_hinted(x, &mut hints.neck);
                (q, Some(r))
            }
            None => (*x, None),
        };
        let p = match &self.expression {
            Some(w) => w.backward_hinted(&q, &mut hints.expression),
            None => q,
        };
        (p, region)
    }

    /// Box that contains the deformed image of `bounds`.
    pub fn deformed_bounds(&self, bounds: &Aabb) -> Aabb {
        let mut out = *bounds;
        if let Some(w) = &self.expression {
            for p in w.deformed() {
                out.grow(p);
            }
        }
        match &self.pose {
            Some(pose) if !pose.is_identity() => pose.posed_bounds(&out),
            _ => out,
        }
    }
}

pub fn inverse_deform(deformation: &Deformation, point: &Vec3) -> Vec3 {
    deformation.inverse(point)
}
