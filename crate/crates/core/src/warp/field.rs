//! Piecewise-linear space deformation over a fixed tetrahedralization.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use super::delaunay::{TetMesh, NO_NEIGHBOR};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Mat3, Vec3};

/// Barycentric slack accepted by `locate`.
pub const BARYCENTRIC_TOLERANCE: f64 = 1e-9;
const MAX_WALK: usize = 48;
const MAX_INDEX_CELLS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetLocation {
    pub tet: usize,
    pub barycentric: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpDiagnostics {
    pub vertices: usize,
    pub tets: usize,
    pub inverted_tets: usize,
    pub identity: bool,
}

/// Affine frames of one set of tet positions plus a grid index over them.
#[derive(Debug, Clone)]
struct Frames {
    /// Inverse of `[p1 − p0 | p2 − p0 | p3 − p0]`; `None` when not positively oriented.
    inverse: Vec<Option<Mat3>>,
    origin: Vec<Vec3>,
    index: TetIndex,
}

impl Frames {
    fn new(positions: &[Vec3], mesh: &TetMesh) -> Self {
        let mut inverse = Vec::with_capacity(mesh.len());
        let mut origin = Vec::with_capacity(mesh.len());
        for tet in &mesh.tets {
            let [a, b, c, d] = tet.map(|i| positions[i as usize]);
            let m = Mat3::from_columns(&[b - a, c - a, d - a]);
            inverse.push(if m.determinant() > 0.0 { m.try_inverse() } else { None });
            origin.push(a);
        }
        let index = TetIndex::build(positions, mesh, &inverse);
        Self { inverse, origin, index }
    }

    #[inline]
    fn barycentric(&self, t: usize, p: &Vec3) -> Option<[f64; 4]> {
        let inv = self.inverse[t].as_ref()?;
        let l = inv * (p - self.origin[t]);
        Some([1.0 - l.x - l.y - l.z, l.x, l.y, l.z])
    }

    /// Lowest-numbered positively oriented tet containing `p`.
    fn locate(&self, p: &Vec3) -> Option<TetLocation> {
        self.index.candidates(p).iter().find_map(|&t| {
            let b = self.barycentric(t as usize, p)?;
            contains(&b).then(|| TetLocation {
                tet: t as usize,
                barycentric: normalize(b),
            })
        })
    }

    /// Walks from `hint` toward `p`, falling back to the index.
    fn locate_from(&self, mesh: &TetMesh, p: &Vec3, hint: &mut u32) -> Option<TetLocation> {
        let mut t = *hint;
        if (t as usize) < mesh.len() {
            for _ in 0..MAX_WALK {
                let Some(b) = self.barycentric(t as usize, p) else {
                    break;
                };
                if contains(&b) {
                    *hint = t;
                    return Some(TetLocation {
                        tet: t as usize,
                        barycentric: normalize(b),
                    });
                }
                let k = (0..4).min_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap();
                t = mesh.neighbors[t as usize][k];
                if t == NO_NEIGHBOR {
                    break;
                }
            }
        }
        let found = self.locate(p);
        if let Some(loc) = &found {
            *hint = loc.tet as u32;
        }
        found
    }
}

#[inline]
fn contains(b: &[f64; 4]) -> bool {
    b.iter().all(|&x| x >= -BARYCENTRIC_TOLERANCE)
}

#[inline]
fn normalize(b: [f64; 4]) -> [f64; 4] {
    if b.iter().all(|&x| x >= 0.0) {
        return b;
    }
    let c = b.map(|x| x.max(0.0));
    let s: f64 = c.iter().sum();
    c.map(|x| x / s)
}

/// Uniform grid of tet candidate lists (CSR layout, ascending tet ids).
#[derive(Debug, Clone)]
struct TetIndex {
    bounds: Aabb,
    dims: [usize; 3],
    inv_cell: Vec3,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl TetIndex {
    fn build(positions: &[Vec3], mesh: &TetMesh, inverse: &[Option<Mat3>]) -> Self {
        let live: Vec<usize> = (0..mesh.len()).filter(|&t| inverse[t].is_some()).collect();
        let mut bounds = Aabb::empty();
        for &t in &live {
            for &v in &mesh.tets[t] {
                bounds.grow(&positions[v as usize]);
            }
        }
        if live.is_empty() {
            return Self {
                bounds,
                dims: [1, 1, 1],
                inv_cell: Vec3::zeros(),
                starts: vec![0, 0],
                items: Vec::new(),
            };
        }
        let pad = 1e-9 * bounds.diagonal();
        let bounds = bounds.padded(pad);
        let per_axis = ((live.len() as f64).cbrt().ceil() as usize).clamp(1, MAX_INDEX_CELLS);
        let dims = [per_axis; 3];
        let ext = bounds.extent();
        let inv_cell = Vec3::from_fn(|i, _| dims[i] as f64 / ext[i]);
        let cell_range = |lo: f64, hi: f64, axis: usize| {
            let a = ((lo - bounds.min[axis]) * inv_cell[axis]).floor().max(0.0) as usize;
            let b = ((hi - bounds.min[axis]) * inv_cell[axis]).floor().max(0.0) as usize;
            (a.min(dims[axis] - 1), b.min(dims[axis] - 1))
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncell + 1];
        let mut spans = Vec::with_capacity(live.len());
        for &t in &live {
            let tb = Aabb::from_points(&mesh.tets[t].map(|v| positions[v as usize])).padded(pad);
            let r = [0, 1, 2].map(|a| cell_range(tb.min[a], tb.max[a], a));
            for z in r[2].0..=r[2].1 {
                for y in r[1].0..=r[1].1 {
                    for x in r[0].0..=r[0].1 {
                        counts[x + dims[0] * (y + dims[1] * z)] += 1;
                    }
                }
            }
            spans.push((t, r));
        }
        let mut starts = vec![0u32; ncell + 1];
        for c in 0..ncell {
            starts[c + 1] = starts[c] + counts[c];
        }
        let mut fill = starts.clone();
        let mut items = vec![0u32; starts[ncell] as usize];
        for (t, r) in spans {
            for z in r[2].0..=r[2].1 {
                for y in r[1].0..=r[1].1 {
                    for x in r[0].0..=r[0].1 {
                        let c = x + dims[0] * (y + dims[1] * z);
                        items[fill[c] as usize] = t as u32;
                        fill[c] += 1;
                    }
                }
            }
        }
        Self {
            bounds,
            dims,
            inv_cell,
            starts,
            items,
        }
    }

    #[inline]
    fn candidates(&self, p: &Vec3) -> &[u32] {
        if !self.bounds.contains(p) {
            return &[];
        }
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.bounds.min[a]) * self.inv_cell[a]) as usize;
            c[a] = f.min(self.dims[a] - 1);
        }
        let cell = c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2]);
        &self.items[self.starts[cell] as usize..self.starts[cell + 1] as usize]
    }
}

/// Neutral and deformed control points over a shared tetrahedralization.
/// The backward map sends a deformed-space point to the neutral position
/// with the same barycentric coordinates; points outside every tet map to
/// themselves.
#[derive(Debug, Clone)]
pub struct WarpField {
    mesh: Arc<TetMesh>,
    deformed: Vec<Vec3>,
    frames: Frames,
    neutral_frames: OnceLock<Frames>,
    identity: bool,
    /// Deformed-space bounds of every tet with a moved vertex.
    support: Aabb,
    inverted: usize,
}

impl WarpField {
    pub fn new(mesh: Arc<TetMesh>, deformed: Vec<Vec3>) -> Result<Self> {
        if deformed.len() != mesh.vertices.len() {
            return Err(Error::invalid(format!(
                "warp has {} neutral but {} deformed control points",
                mesh.vertices.len(),
                deformed.len()
            )));
        }
        if deformed.iter().any(|p| !crate::geom::is_finite(p)) {
            return Err(Error::invalid("non-finite deformed control point"));
        }
        let moved: Vec<bool> = mesh.vertices.iter().zip(&deformed).map(|(a, b)| a != b).collect();
        let identity = !moved.iter().any(|&m| m);
        let mut support = Aabb::empty();
        for tet in &mesh.tets {
            if tet.iter().any(|&v| moved[v as usize]) {
                for &v in tet {
                    support.grow(&deformed[v as usize]);
                }
            }
        }
        let support = if support.is_valid() {
            support.padded(1e-9 * support.diagonal())
        } else {
            support
        };
        let frames = Frames::new(&deformed, &mesh);
        let inverted = (0..mesh.len())
            .filter(|&t| {
                let [a, b, c, d] = mesh.tets[t].map(|i| deformed[i as usize]);
                super::delaunay::signed_volume(&a, &b, &c, &d) <= 0.0
            })
            .count();
        Ok(Self {
            mesh,
            deformed,
            frames,
            neutral_frames: OnceLock::new(),
            identity,
            support,
            inverted,
        })
    }

    pub fn identity(mesh: Arc<TetMesh>) -> Self {
        let deformed = mesh.vertices.clone();
        Self::new(mesh, deformed).expect("neutral positions are valid")
    }

    pub fn mesh(&self) -> &TetMesh {
        &self.mesh
    }

    pub fn neutral(&self) -> &[Vec3] {
        &self.mesh.vertices
    }

    pub fn deformed(&self) -> &[Vec3] {
        &self.deformed
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn inverted_count(&self) -> usize {
        self.inverted
    }

    pub fn diagnostics(&self) -> WarpDiagnostics {
        WarpDiagnostics {
            vertices: self.deformed.len(),
            tets: self.mesh.len(),
            inverted_tets: self.inverted,
            identity: self.identity,
        }
    }

    /// Lowest-numbered non-inverted deformed tet containing `p`.
    pub fn locate(&self, p: &Vec3) -> Option<TetLocation> {
        self.frames.locate(p)
    }

    fn neutral_point(&self, loc: &TetLocation) -> Vec3 {
        let tet = &self.mesh.tets[loc.tet];
        let b = &loc.barycentric;
        let v = |k: usize| self.mesh.vertices[tet[k] as usize];
        v(0) * b[0] + v(1) * b[1] + v(2) * b[2] + v(3) * b[3]
    }

    pub fn backward(&self, p: &Vec3) -> Vec3 {
        if self.identity || !self.support.contains(p) {
            return *p;
        }
        self.locate(p).map_or(*p, |loc| self.neutral_point(&loc))
    }

    /// `backward` with a walking search seeded by `hint`, which is updated
    /// to the containing tet. Callers evaluating coherent sequences of
    /// points (samples along a ray) should reuse one hint.
    pub fn backward_hinted(&self, p: &Vec3, hint: &mut u32) -> Vec3 {
        if self.identity || !self.support.contains(p) {
            return *p;
        }
        self.frames
            .locate_from(&self.mesh, p, hint)
            .map_or(*p, |loc| self.neutral_point(&loc))
    }

    /// Neutral → deformed map through the neutral tets.
    pub fn forward(&self, p: &Vec3) -> Vec3 {
        if self.identity {
            return *p;
        }
        let frames = self
            .neutral_frames
            .get_or_init(|| Frames::new(&self.mesh.vertices, &self.mesh));
        match frames.locate(p) {
            Some(loc) => {
                let tet = &self.mesh.tets[loc.tet];
                let b = &loc.barycentric;
                (0..4).map(|k| self.deformed[tet[k] as usize] * b[k]).sum()
            }
            None => *p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use crate::warp::delaunay::delaunay_3d;
    use approx::assert_relative_eq;

    fn cube_mesh() -> Arc<TetMesh> {
        let mut pts = Aabb::new(vec3(-1.0, -1.0, -1.0), vec3(1.0, 1.0, 1.0))
            .corners()
            .to_vec();
        pts.extend([vec3(0.1, 0.2, 0.05), vec3(-0.3, 0.1, 0.4), vec3(0.2, -0.5, -0.3)]);
        Arc::new(delaunay_3d(&pts).unwrap().0)
    }

    #[test]
    fn unmoved_is_identity() {
        let w = WarpField::identity(cube_mesh());
        assert!(w.is_identity());
        let p = vec3(0.123, -0.456, 0.789);
        assert_eq!(w.backward(&p), p);
        assert_eq!(w.forward(&p), p);
    }

    #[test]
    fn centroid_location() {
        let mesh = cube_mesh();
        let w = WarpField::identity(mesh.clone());
        let c = mesh.corners(0).iter().sum::<Vec3>() / 4.0;
        let loc = w.locate(&c).unwrap();
        assert_eq!(loc.tet, 0);
        for b in loc.barycentric {
            assert_relative_eq!(b, 0.25, epsilon = 1e-9);
        }
        assert!(w.locate(&vec3(10.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn translation_is_reproduced() {
        let mesh = cube_mesh();
        let t = vec3(0.05, -0.02, 0.03);
        let deformed = mesh.vertices.iter().map(|p| p + t).collect();
        let w = WarpField::new(mesh, deformed).unwrap();
        let p = vec3(0.2, 0.3, -0.1);
        assert_relative_eq!(w.backward(&p), p - t, epsilon = 1e-9);
        let mut hint = 0;
        assert_relative_eq!(w.backward_hinted(&p, &mut hint), p - t, epsilon = 1e-9);
        assert_relative_eq!(w.forward(&(p - t)), p, epsilon = 1e-9);
    }

    #[test]
    fn inverted_tets_are_counted() {
        let mesh = cube_mesh();
        let mut deformed = mesh.vertices.clone();
        // push an interior point through the far side of the cube
        deformed[8] = vec3(5.0, 0.0, 0.0);
        let w = WarpField::new(mesh, deformed).unwrap();
        assert!(w.inverted_count() > 0);
        assert!(w.diagnostics().inverted_tets == w.inverted_count());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mesh = cube_mesh();
        assert!(WarpField::new(mesh, vec![Vec3::zeros()]).is_err());
    }
}
