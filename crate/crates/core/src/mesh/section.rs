use std::collections::HashMap;

use super::TriMesh;
use crate::geom::Vec3;

/// A closed polyline in a horizontal plane.
#[derive(Debug, Clone)]
pub struct SectionLoop {
    pub points: Vec<Vec3>,
}

impl SectionLoop {
    /// Signed area of the loop's projection onto the xz plane.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                a.x * b.z - b.x * a.z
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n).map(|i| (self.points[(i + 1) % n] - self.points[i]).norm()).sum()
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }
}

type EdgeKey = (u32, u32);

/// Intersects the mesh with the plane `y = height`, returning closed loops
/// sorted by decreasing enclosed area. Every loop has positive signed area.
pub fn cross_section_loops(mesh: &TriMesh, height: f64) -> Vec<SectionLoop> {
    let above = |i: u32| mesh.vertices[i as usize].y >= height;
    let mut points: HashMap<EdgeKey, Vec3> = HashMap::new();
    let mut links: HashMap<EdgeKey, Vec<EdgeKey>> = HashMap::new();
    for t in &mesh.triangles {
        let mut hits: Vec<EdgeKey> = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            if above(a) != above(b) {
                let key = (a.min(b), a.max(b));
                points.entry(key).or_insert_with(|| {
                    let (pa, pb) = (mesh.vertices[key.0 as usize], mesh.vertices[key.1 as usize]);
                    let s = (height - pa.y) / (pb.y - pa.y);
                    let mut p = pa + (pb - pa) * s;
                    p.y = height;
                    p
                });
                hits.push(key);
            }
        }
        if hits.len() == 2 {
            links.entry(hits[0]).or_default().push(hits[1]);
            links.entry(hits[1]).or_default().push(hits[0]);
        }
    }

    let mut keys: Vec<EdgeKey> = links.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<EdgeKey, bool> = HashMap::new();
    let mut loops = Vec::new();
    for &start in &keys {
        if visited.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut prev = start;
        let mut cur = links[&start][0];
        let mut closed = false;
        loop {
            if cur == start {
                closed = true;
                break;
            }
            if visited.contains_key(&cur) {
                break;
            }
            visited.insert(cur, true);
            chain.push(cur);
            let next = links[&cur].iter().copied().find(|&k| k != prev);
            match next {
                Some(n) => {
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        if closed && chain.len() >= 3 {
            let mut l = SectionLoop {
                points: chain.iter().map(|k| points[k]).collect(),
            };
            if l.signed_area() < 0.0 {
                l.points.reverse();
            }
            loops.push(l);
        }
    }
    loops.sort_by(|a, b| b.signed_area().total_cmp(&a.signed_area()));
    loops
}

/// Resamples a closed loop to `count` points at uniform arc length, starting
/// from the vertex with the largest x (ties: smallest z).
pub fn resample_loop(l: &SectionLoop, count: usize) -> Vec<Vec3> {
    let n = l.points.len();
    let start = (0..n)
        .max_by(|&a, &b| {
            let (pa, pb) = (l.points[a], l.points[b]);
            pa.x.total_cmp(&pb.x).then(pb.z.total_cmp(&pa.z))
        })
        .unwrap_or(0);
    let pts: Vec<Vec3> = (0..=n).map(|i| l.points[(start + i) % n]).collect();
    let mut cum = vec![0.0; n + 1];
    for i in 1..=n {
        cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / count as f64;
        while seg + 1 < n && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_equator_section() {
        let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 4);
        let loops = cross_section_loops(&m, 0.013);
        assert_eq!(loops.len(), 1);
        let r = (1.0f64 - 0.013 * 0.013).sqrt();
        assert_relative_eq!(
            loops[0].signed_area(),
            std::f64::consts::PI * r * r,
            max_relative = 0.01
        );
        let samples = resample_loop(&loops[0], 32);
        assert_eq!(samples.len(), 32);
        for p in &samples {
            assert_relative_eq!(p.y, 0.013, epsilon = 1e-12);
            assert!((p.xz().norm() - r).abs() < 0.01);
        }
        // uniform spacing
        let d0 = (samples[1] - samples[0]).norm();
        for w in samples.windows(2) {
            assert_relative_eq!((w[1] - w[0]).norm(), d0, max_relative = 0.05);
        }
    }

    #[test]
    fn plane_missing_mesh_gives_no_loops() {
        let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 2);
        assert!(cross_section_loops(&m, 2.0).is_empty());
    }
}
