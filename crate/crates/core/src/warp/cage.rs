//! Head and torso cages with a Delaunay-interpolated neck band.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::delaunay::{delaunay_3d, DelaunayReport, TetMesh};
use super::field::{WarpDiagnostics, WarpField};
use crate::error::{Error, Result};
use crate::geom::{rotation_from_euler_deg, Aabb, Mat3, Vec3};
use crate::mesh::{cross_section_loops, resample_loop, TriMesh};

pub const MIN_SAMPLES_PER_LOOP: usize = 8;
pub const DEFAULT_SAMPLES_PER_LOOP: usize = 48;
/// Anchors sit on the corners of the asset box inflated by this factor.
pub const ANCHOR_INFLATION: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Head,
    Torso,
    Neck,
}

pub fn region_of(y: f64, y_head: f64, y_torso: f64) -> Region {
    if y > y_head {
        Region::Head
    } else if y < y_torso {
        Region::Torso
    } else {
        Region::Neck
    }
}

fn check_cuts(y_head: f64, y_torso: f64) -> Result<()> {
    if !(y_torso < y_head) {
        return Err(Error::invalid(format!(
            "y_torso ({y_torso}) must be below y_head ({y_head})"
        )));
    }
    Ok(())
}

pub fn cage_membership(points: &[Vec3], y_head: f64, y_torso: f64) -> Result<Vec<Region>> {
    check_cuts(y_head, y_torso)?;
    Ok(points.iter().map(|p| region_of(p.y, y_head, y_torso)).collect())
}

/// Translation, rotation (Euler degrees, x then y then z) and axis scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CageTransform {
    pub t: [f64; 3],
    pub euler: [f64; 3],
    pub s: [f64; 3],
}

impl Default for CageTransform {
    fn default() -> Self {
        Self {
            t: [0.0; 3],
            euler: [0.0; 3],
            s: [1.0; 3],
        }
    }
}

impl CageTransform {
    pub fn translation(t: Vec3) -> Self {
        Self {
            t: t.into(),
            ..Self::default()
        }
    }

    pub fn rotation_deg(euler: [f64; 3]) -> Self {
        Self {
            euler,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.iter().chain(&self.euler).chain(&self.s).any(|v| !v.is_finite()) {
            return Err(Error::invalid("cage transform has non-finite entries"));
        }
        if self.s.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid(format!("cage scale must be positive, got {:?}", self.s)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_euler_deg(self.euler)
    }

    /// `R · S`.
    pub fn linear(&self) -> Mat3 {
        self.rotation() * Mat3::from_diagonal(&Vec3::from(self.s))
    }
}

/// Head and torso transforms; together they form the pose code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseParams {
    pub head: CageTransform,
    pub torso: CageTransform,
}

impl PoseParams {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        self.torso.validate()
    }

    pub fn is_identity(&self) -> bool {
        self.head.is_identity() && self.torso.is_identity()
    }
}

/// One cage: the half-space beyond its cut height, moved as
/// `x' = center + T + R·S·(x − center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CageSpec {
    pub kind: Region,
    pub cut_height: f64,
    pub center: Vec3,
    pub transform: CageTransform,
    linear: Mat3,
    inverse: Mat3,
}

impl CageSpec {
    pub fn new(kind: Region, cut_height: f64, center: Vec3, transform: CageTransform) -> Result<Self> {
        if kind == Region::Neck {
            return Err(Error::invalid("the neck is not a cage"));
        }
        transform.validate()?;
        let linear = transform.linear();
        let inverse = linear
            .try_inverse()
            .ok_or_else(|| Error::invalid("cage transform is singular"))?;
        Ok(Self {
            kind,
            cut_height,
            center,
            transform,
            linear,
            inverse,
        })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        if self.transform.is_identity() {
            return *p;
        }
        self.center + Vec3::from(self.transform.t) + self.linear * (p - self.center)
    }

    pub fn invert(&self, x: &Vec3) -> Vec3 {
        if self.transform.is_identity() {
            return *x;
        }
        self.inverse * (x - self.center - Vec3::from(self.transform.t)) + self.center
    }

    /// How far a neutral point lies inside this cage's half-space (positive inside).
    pub fn margin(&self, p: &Vec3) -> f64 {
        match self.kind {
            Region::Head => p.y - self.cut_height,
            _ => self.cut_height - p.y,
        }
    }
}

pub fn cage_transform(cage: &CageSpec, point: &Vec3) -> Vec3 {
    cage.apply(point)
}

/// Rig-time cage data: cut loops, cage centers and the neck tetrahedralization.
#[derive(Debug, Clone)]
pub struct CageGeometry {
    pub y_head: f64,
    pub y_torso: f64,
    pub head_center: Vec3,
    pub torso_center: Vec3,
    pub head_loop: Vec<Vec3>,
    pub torso_loop: Vec<Vec3>,
    /// Number of disjoint loops found at (y_head, y_torso); the largest is used.
    pub loops_found: [usize; 2],
    pub anchors: Vec<Vec3>,
    neck: Arc<TetMesh>,
    pub delaunay: DelaunayReport,
}

impl CageGeometry {
    pub fn new(mesh: &TriMesh, y_head: f64, y_torso: f64, samples_per_loop: usize, anchors: &[Vec3]) -> Result<Self> {
        check_cuts(y_head, y_torso)?;
        if samples_per_loop < MIN_SAMPLES_PER_LOOP {
            return Err(Error::invalid(format!(
                "samples_per_loop must be at least {MIN_SAMPLES_PER_LOOP}, got {samples_per_loop}"
            )));
        }
        let section = |height: f64| {
            let loops = cross_section_loops(mesh, height);
            let first = loops.first().ok_or(Error::EmptyCrossSection { height })?;
            Ok::<_, Error>((resample_loop(first, samples_per_loop), loops.len()))
        };
        let (head_loop, nh) = section(y_head)?;
        let (torso_loop, nt) = section(y_torso)?;
        let centroid = |keep: &dyn Fn(f64) -> bool| {
            let pts: Vec<&Vec3> = mesh.vertices.iter().filter(|p| keep(p.y)).collect();
            (!pts.is_empty()).then(|| pts.iter().copied().sum::<Vec3>() / pts.len() as f64)
        };
        let head_center = centroid(&|y| y > y_head).ok_or_else(|| Error::invalid("no mesh vertices above y_head"))?;
        let torso_center =
            centroid(&|y| y < y_torso).ok_or_else(|| Error::invalid("no mesh vertices below y_torso"))?;
        let mut control = head_loop.clone();
        control.extend(&torso_loop);
        control.extend(anchors);
        let (neck, delaunay) = delaunay_3d(&control)?;
        Ok(Self {
            y_head,
            y_torso,
            head_center,
            torso_center,
            head_loop,
            torso_loop,
            loops_found: [nh, nt],
            anchors: anchors.to_vec(),
            neck: Arc::new(neck),
            delaunay,
        })
    }

    pub fn neck_mesh(&self) -> &Arc<TetMesh> {
        &self.neck
    }

    pub fn head_cage(&self, t: CageTransform) -> Result<CageSpec> {
        CageSpec::new(Region::Head, self.y_head, self.head_center, t)
    }

    pub fn torso_cage(&self, t: CageTransform) -> Result<CageSpec> {
        CageSpec::new(Region::Torso, self.y_torso, self.torso_center, t)
    }

    pub fn pose(&self, pose: &PoseParams) -> Result<PoseDeformation> {
        let head = self.head_cage(pose.head)?;
        let torso = self.torso_cage(pose.torso)?;
        let neck = if pose.is_identity() {
            WarpField::identity(self.neck.clone())
        } else {
            let mut deformed: Vec<Vec3> = self.head_loop.iter().map(|p| head.apply(p)).collect();
            deformed.extend(self.torso_loop.iter().map(|p| torso.apply(p)));
            deformed.extend(&self.anchors);
            WarpField::new(self.neck.clone(), deformed)?
        };
        Ok(PoseDeformation {
            y_head: self.y_head,
            y_torso: self.y_torso,
            identity: pose.is_identity(),
            head,
            torso,
            neck,
        })
    }
}

/// Composite pose map: rigid head and torso, warped neck.
#[derive(Debug, Clone)]
pub struct PoseDeformation {
    pub y_head: f64,
    pub y_torso: f64,
    pub head: CageSpec,
    pub torso: CageSpec,
    pub neck: WarpField,
    identity: bool,
}

impl PoseDeformation {
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn neck_diagnostics(&self) -> WarpDiagnostics {
        self.neck.diagnostics()
    }

    /// Neutral → posed.
    pub fn forward(&self, p: &Vec3) -> Vec3 {
        if self.identity {
            return *p;
        }
        match region_of(p.y, self.y_head, self.y_torso) {
            Region::Head => self.head.apply(p),
            Region::Torso => self.torso.apply(p),
            Region::Neck => self.neck.forward(p),
        }
    }

    /// Region of a posed-space point, with its rigid preimage when it is
    /// in a cage. A point claimed by both cages goes to the one whose
    /// preimage lies deeper past its cut; an exact tie goes to the neck.
    pub fn classify(&self, x: &Vec3) -> (Region, Vec3) {
        if self.identity {
            return (region_of(x.y, self.y_head, self.y_torso), *x);
        }
        let qh = self.head.invert(x);
        let qt = self.torso.invert(x);
        let (mh, mt) = (self.head.margin(&qh), self.torso.margin(&qt));
        match (mh > 0.0, mt > 0.0) {
            (true, false) => (Region::Head, qh),
            (false, true) => (Region::Torso, qt),
            (true, true) if mh > mt => (Region::Head, qh),
            (true, true) if mt > mh => (Region::Torso, qt),
            _ => (Region::Neck, *x),
        }
    }

    /// Posed → neutral.
    pub fn inverse(&self, x: &Vec3) -> Vec3 {
        let mut hint = u32::MAX;
        self.inverse_hinted(x, &mut hint).0
    }

    pub fn inverse_hinted(&self, x: &Vec3, hint: &mut u32) -> (Vec3, Region) {
        if self.identity {
            return (*x, region_of(x.y, self.y_head, self.y_torso));
        }
        match self.classify(x) {
            (Region::Neck, _) => (self.neck.backward_hinted(x, hint), Region::Neck),
            (r, q) => (q, r),
        }
    }

    /// Box covering where `bounds` can end up after posing.
    pub fn posed_bounds(&self, bounds: &Aabb) -> Aabb {
        let mut out = *bounds;
        for c in bounds.corners() {
            out.grow(&self.head.apply(&c));
            out.grow(&self.torso.apply(&c));
        }
        out
    }
}

/// Builds cage geometry from `mesh` and poses it in one step.
pub fn build_pose_warp(
    mesh: &TriMesh,
    y_head: f64,
    y_torso: f64,
    pose: &PoseParams,
    samples_per_loop: usize,
) -> Result<PoseDeformation> {
    let anchors = mesh.bounds().inflated(ANCHOR_INFLATION).corners();
    CageGeometry::new(mesh, y_head, y_torso, samples_per_loop, &anchors)?.pose(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use approx::assert_relative_eq;

    #[test]
    fn membership_boundaries() {
        let pts = [
            vec3(0.0, 0.5, 0.0),
            vec3(0.0, 0.2, 0.0),
            vec3(0.0, -0.2, 0.0),
            vec3(0.0, -0.1, 0.0),
        ];
        let r = cage_membership(&pts, 0.2, -0.1).unwrap();
        assert_eq!(r, [Region::Head, Region::Neck, Region::Torso, Region::Neck]);
        assert!(cage_membership(&pts, 0.0, 0.0).is_err());
    }

    #[test]
    fn cage_transform_algebra() {
        let c = vec3(0.1, 0.5, -0.2);
        let p = vec3(0.3, 0.9, 0.4);
        let id = CageSpec::new(Region::Head, 0.0, c, CageTransform::default()).unwrap();
        assert_eq!(cage_transform(&id, &p), p);
        let tr = CageSpec::new(Region::Head, 0.0, c, CageTransform::translation(vec3(0.0, 0.1, 0.0))).unwrap();
        assert_relative_eq!(tr.apply(&p), p + vec3(0.0, 0.1, 0.0), epsilon = 1e-15);
        let sc = CageTransform {
            s: [2.0; 3],
            ..Default::default()
        };
        let sc = CageSpec::new(Region::Torso, 0.0, c, sc).unwrap();
        assert_relative_eq!(sc.apply(&p), 2.0 * p - c, epsilon = 1e-15);
        let full = CageTransform {
            t: [0.1, -0.2, 0.3],
            euler: [10.0, 20.0, -30.0],
            s: [1.5, 0.7, 1.1],
        };
        let full = CageSpec::new(Region::Head, 0.0, c, full).unwrap();
        assert_relative_eq!(full.invert(&full.apply(&p)), p, epsilon = 1e-12);
    }

    #[test]
    fn scale_must_be_positive() {
        let bad = CageTransform {
            s: [1.0, 0.0, 1.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(CageSpec::new(Region::Head, 0.0, Vec3::zeros(), bad).is_err());
    }

    #[test]
    fn transform_json_defaults() {
        let t: CageTransform = serde_json::from_str(r#"{"euler":[0,15,0]}"#).unwrap();
        assert_eq!(t.s, [1.0; 3]);
        assert_eq!(t.t, [0.0; 3]);
        let p: PoseParams = serde_json::from_str(r#"{"head":{"t":[0,0.1,0]}}"#).unwrap();
        assert!(p.torso.is_identity());
        assert!(!p.is_identity());
    }

    fn column() -> TriMesh {
        // closed box column standing on y in [-1, 1]
        let v = Aabb::new(vec3(-0.3, -1.0, -0.3), vec3(0.3, 1.0, 0.3)).corners();
        let mut mesh = TriMesh::new(v.to_vec(), Vec::new());
        // corner index bits: x = 1, y = 2, z = 4 (see Aabb::corners)
        let quads = [
            [0, 4, 6, 2],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 2, 3, 1],
            [4, 5, 7, 6],
        ];
        for q in quads {
            mesh.triangles.push([q[0], q[1], q[2]]);
            mesh.triangles.push([q[0], q[2], q[3]]);
        }
        mesh
    }

    #[test]
    fn identity_pose_is_identity() {
        let mesh = column();
        let pose = build_pose_warp(&mesh, 0.3, -0.3, &PoseParams::default(), 16).unwrap();
        assert!(pose.is_identity());
        for p in [vec3(0.1, 0.5, 0.0), vec3(0.1, 0.0, 0.2), vec3(-0.2, -0.8, 0.1)] {
            assert_eq!(pose.inverse(&p), p);
            assert_eq!(pose.forward(&p), p);
        }
    }

    #[test]
    fn head_translation_moves_neck_partially() {
        let mesh = column();
        let t = vec3(0.1, 0.0, 0.0);
        let pose = PoseParams {
            head: CageTransform::translation(t),
            ..Default::default()
        };
        let warp = build_pose_warp(&mesh, 0.3, -0.3, &pose, 16).unwrap();
        let head_pt = vec3(0.0, 0.8, 0.1);
        assert_relative_eq!(warp.forward(&head_pt), head_pt + t, epsilon = 1e-12);
        assert_relative_eq!(warp.inverse(&(head_pt + t)), head_pt, epsilon = 1e-12);
        let torso_pt = vec3(0.1, -0.7, 0.0);
        assert_eq!(warp.forward(&torso_pt), torso_pt);
        let mid = vec3(0.3, 0.0, 0.0);
        let moved = (warp.forward(&mid) - mid).x;
        assert!(moved > 0.0 && moved < 0.1, "neck moved {moved}");
        assert_relative_eq!(warp.inverse(&warp.forward(&mid)), mid, epsilon = 1e-9);
    }

    #[test]
    fn empty_section_is_an_error() {
        let mesh = column();
        assert!(matches!(
            build_pose_warp(&mesh, 2.0, -0.3, &PoseParams::default(), 16),
            Err(Error::EmptyCrossSection { .. })
        ));
    }
}
