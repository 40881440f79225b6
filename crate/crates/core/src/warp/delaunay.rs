//! Bowyer–Watson Delaunay tetrahedralization on exact predicates.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust::Coord3D;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

pub const NO_NEIGHBOR: u32 = u32::MAX;
/// Jitter magnitude as a fraction of the input bounding-box diagonal.
pub const JITTER_FRACTION: f64 = 1e-7;
/// Seed of the first jittered attempt; attempt `k` uses `JITTER_SEED + k`.
pub const JITTER_SEED: u64 = 0x5eed_0001;
/// Tets with volume at or below this fraction of diagonal³ are dropped.
pub const VOLUME_FLOOR_FRACTION: f64 = 1e-12;
const MAX_ATTEMPTS: u64 = 8;
const SUPER_SCALE: f64 = 1e5;

/// Tetrahedral mesh with face adjacency. Neighbor `k` of a tet lies across
/// the face opposite its vertex `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[u32; 4]>,
    pub neighbors: Vec<[u32; 4]>,
}

impl TetMesh {
    /// Builds adjacency by matching faces.
    pub fn from_tets(vertices: Vec<Vec3>, tets: Vec<[u32; 4]>) -> Self {
        let mut neighbors = vec![[NO_NEIGHBOR; 4]; tets.len()];
        let mut open: HashMap<[u32; 3], (u32, usize)> = HashMap::with_capacity(tets.len() * 2);
        for (t, tet) in tets.iter().enumerate() {
            for k in 0..4 {
                let key = face_key(tet, k);
                if let Some((o, ok)) = open.remove(&key) {
                    neighbors[t][k] = o;
                    neighbors[o as usize][ok] = t as u32;
                } else {
                    open.insert(key, (t as u32, k));
                }
            }
        }
        Self {
            vertices,
            tets,
            neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 4] {
        self.tets[t].map(|i| self.vertices[i as usize])
    }

    pub fn signed_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.corners(t);
        signed_volume(&a, &b, &c, &d)
    }

    pub fn volume(&self) -> f64 {
        (0..self.len()).map(|t| self.signed_volume(t)).sum()
    }

    pub fn neighbor(&self, t: usize, k: usize) -> Option<usize> {
        let n = self.neighbors[t][k];
        (n != NO_NEIGHBOR).then_some(n as usize)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }
}

pub fn signed_volume(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

fn face_key(tet: &[u32; 4], k: usize) -> [u32; 3] {
    let mut f = [0u32; 3];
    let mut j = 0;
    for (i, &v) in tet.iter().enumerate() {
        if i != k {
            f[j] = v;
            j += 1;
        }
    }
    f.sort_unstable();
    f
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaunayReport {
    pub points: usize,
    pub attempts: u32,
    /// Seed of the jitter that produced the mesh, if any was needed.
    pub jitter_seed: Option<u64>,
    pub jitter_magnitude: f64,
    /// Tets whose volume in unjittered coordinates fell to `vol_floor`.
    pub dropped_tets: usize,
}

fn coord(p: &Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Exact sign of the standard signed volume of `abcd`.
fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    -robust::orient3d(coord(a), coord(b), coord(c), coord(d))
}

/// Positive when `e` is strictly inside the circumsphere of positively
/// oriented `abcd`.
fn in_sphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> f64 {
    robust::insphere(coord(b), coord(a), coord(c), coord(d), coord(e))
}

/// Delaunay tetrahedralization of `points`. Vertex `i` of the result is
/// `points[i]`; the returned tets are positively oriented in those
/// (unjittered) coordinates.
pub fn delaunay_3d(points: &[Vec3]) -> Result<(TetMesh, DelaunayReport)> {
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "tetrahedralization needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !crate::geom::is_finite(p)) {
        return Err(Error::invalid("non-finite point in tetrahedralization input"));
    }
    check_duplicates(points)?;
    if !spans_volume(points) {
        return Err(Error::Coplanar);
    }
    let bounds = Aabb::from_points(points);
    let diag = bounds.diagonal();
    let magnitude = JITTER_FRACTION * diag;
    let vol_floor = VOLUME_FLOOR_FRACTION * diag.powi(3);

    for attempt in 0..MAX_ATTEMPTS {
        let seed = (attempt > 0).then(|| JITTER_SEED + attempt);
        let coords: Vec<Vec3> = match seed {
            None => points.to_vec(),
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                points
                    .iter()
                    .map(|p| {
                        p + Vec3::new(
                            rng.gen_range(-magnitude..=magnitude),
                            rng.gen_range(-magnitude..=magnitude),
                            rng.gen_range(-magnitude..=magnitude),
                        )
                    })
                    .collect()
            }
        };
        let Some(raw) = Triangulation::build(&coords, &bounds) else {
            log::debug!("delaunay attempt {attempt} hit a degeneracy, retrying with jitter");
            continue;
        };
        let total = raw.len();
        let tets: Vec<[u32; 4]> = raw
            .into_iter()
            .filter(|t| {
                let [a, b, c, d] = t.map(|i| points[i as usize]);
                signed_volume(&a, &b, &c, &d) > vol_floor
            })
            .collect();
        if tets.is_empty() {
            return Err(Error::Coplanar);
        }
        let report = DelaunayReport {
            points: points.len(),
            attempts: attempt as u32 + 1,
            jitter_seed: seed,
            jitter_magnitude: if seed.is_some() { magnitude } else { 0.0 },
            dropped_tets: total - tets.len(),
        };
        return Ok((TetMesh::from_tets(points.to_vec(), tets), report));
    }
    Err(Error::Delaunay(format!(
        "input stayed degenerate after {MAX_ATTEMPTS} jittered attempts"
    )))
}

fn check_duplicates(points: &[Vec3]) -> Result<()> {
    let mut seen = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        if let Some(j) = seen.insert(key, i) {
            return Err(Error::invalid(format!("points {j} and {i} coincide")));
        }
    }
    Ok(())
}

fn spans_volume(points: &[Vec3]) -> bool {
    let a = points[0];
    let Some(b) = points.iter().find(|p| **p != a) else {
        return false;
    };
    points
        .iter()
        .any(|c| (b - a).cross(&(c - a)) != Vec3::zeros() && points.iter().any(|d| orient(&a, b, c, d) != 0.0))
}

#[derive(Debug, Clone, Copy)]
struct Tet {
    v: [u32; 4],
    n: [u32; 4],
    alive: bool,
}

struct Triangulation {
    pts: Vec<Vec3>,
    tets: Vec<Tet>,
    real: usize,
}

impl Triangulation {
    /// Returns real-vertex tets, or `None` on an exact degeneracy.
    fn build(coords: &[Vec3], bounds: &Aabb) -> Option<Vec<[u32; 4]>> {
        let n = coords.len();
        let c = bounds.center();
        let s = SUPER_SCALE * bounds.diagonal().max(f64::MIN_POSITIVE);
        let mut pts = coords.to_vec();
        // skewed so axis-aligned inputs are not cospherical with it
        pts.extend([
            c + Vec3::new(1.0, 1.13, 0.97) * s,
            c + Vec3::new(1.07, -0.91, -1.11) * s,
            c + Vec3::new(-0.93, 1.05, -1.03) * s,
            c + Vec3::new(-1.09, -0.95, 1.01) * s,
        ]);
        let mut root = [n as u32, n as u32 + 1, n as u32 + 2, n as u32 + 3];
        if orient(&pts[n], &pts[n + 1], &pts[n + 2], &pts[n + 3]) < 0.0 {
            root.swap(0, 1);
        }
        let mut tr = Triangulation {
            pts,
            tets: vec![Tet {
                v: root,
                n: [NO_NEIGHBOR; 4],
                alive: true,
            }],
            real: n,
        };
        let mut last = 0u32;
        for i in 0..n {
            last = tr.insert(i as u32, last)?;
        }
        let real = tr.real as u32;
        Some(
            tr.tets
                .iter()
                .filter(|t| t.alive && t.v.iter().all(|&v| v < real))
                .map(|t| t.v)
                .collect(),
        )
    }

    fn orient_with(&self, t: &Tet, k: usize, p: &Vec3) -> f64 {
        let mut c = t.v.map(|i| &self.pts[i as usize]);
        c[k] = p;
        orient(c[0], c[1], c[2], c[3])
    }

    fn locate(&self, p: &Vec3, start: u32) -> Option<u32> {
        let mut t = start;
        let limit = 4 * self.tets.len() + 16;
        for step in 0..limit {
            let tet = &self.tets[t as usize];
            let mut next = None;
            for j in 0..4 {
                // rotate the starting face to avoid cycling
                let k = (j + step) % 4;
                if self.orient_with(tet, k, p) < 0.0 {
                    next = Some(tet.n[k]);
                    break;
                }
            }
            match next {
                None => return Some(t),
                Some(NO_NEIGHBOR) => return None,
                Some(nb) => t = nb,
            }
        }
        None
    }

    fn insert(&mut self, pi: u32, start: u32) -> Option<u32> {
        let p = self.pts[pi as usize];
        let t0 = self.locate(&p, start)?;
        let sphere = |tr: &Self, t: u32| {
            let v = tr.tets[t as usize].v.map(|i| &tr.pts[i as usize]);
            in_sphere(v[0], v[1], v[2], v[3], &p)
        };
        if sphere(self, t0) <= 0.0 {
            return None;
        }
        // grow the cavity of tets whose circumsphere contains p
        let mut cavity = vec![t0];
        let mut in_cavity = HashMap::new();
        in_cavity.insert(t0, true);
        let mut boundary = Vec::new();
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for k in 0..4 {
                let nb = self.tets[t as usize].n[k];
                if nb == NO_NEIGHBOR {
                    boundary.push((t, k, nb));
                    continue;
                }
                let inside = match in_cavity.get(&nb) {
                    Some(&b) => b,
                    None => {
                        let s = sphere(self, nb);
                        if s == 0.0 {
                            return None;
                        }
                        in_cavity.insert(nb, s > 0.0);
                        if s > 0.0 {
                            cavity.push(nb);
                        }
                        s > 0.0
                    }
                };
                if !inside {
                    boundary.push((t, k, nb));
                }
            }
        }

        let mut faces: HashMap<[u32; 3], (u32, usize)> = HashMap::with_capacity(boundary.len() * 3);
        let mut newest = t0;
        for &t in &cavity {
            self.tets[t as usize].alive = false;
        }
        for (t, k, nb) in boundary {
            let mut v = self.tets[t as usize].v;
            v[k] = pi;
            let tv = v.map(|i| &self.pts[i as usize]);
            if orient(tv[0], tv[1], tv[2], tv[3]) <= 0.0 {
                return None;
            }
            let id = self.tets.len() as u32;
            let mut n = [NO_NEIGHBOR; 4];
            n[k] = nb;
            if nb != NO_NEIGHBOR {
                let other = &mut self.tets[nb as usize];
                let slot = other.n.iter().position(|&x| x == t)?;
                other.n[slot] = id;
            }
            self.tets.push(Tet { v, n, alive: true });
            for j in (0..4).filter(|&j| j != k) {
                let key = face_key(&v, j);
                if let Some((o, oj)) = faces.remove(&key) {
                    self.tets[id as usize].n[j] = o;
                    self.tets[o as usize].n[oj] = id;
                } else {
                    faces.insert(key, (id, j));
                }
            }
            newest = id;
        }
        if !faces.is_empty() {
            return None;
        }
        Some(newest)
    }
}
