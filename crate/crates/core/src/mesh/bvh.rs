use std::f64::consts::PI;

use super::TriMesh;
use crate::geom::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;
/// Far-field expansion is used once the query is this many cluster radii away.
const WINDING_ACCURACY: f64 = 3.0;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `start..start + count` into `order`; inner: children at `start`, `start + 1`.
    start: u32,
    count: u32,
    /// Area-weighted normal sum of every triangle below the node.
    normal_sum: Vec3,
    /// Area-weighted centroid.
    centroid: Vec3,
    radius: f64,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Closest surface point query result.
#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub triangle: usize,
    pub point: Vec3,
    /// Barycentric weights of `point` with respect to the triangle's corners.
    pub barycentric: [f64; 3],
    pub distance: f64,
}

/// Bounding volume hierarchy over a triangle mesh, supporting closest-point
/// queries and fast (far-field approximated) generalized winding numbers.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let n = mesh.triangles.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Vec3> = (0..n)
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                (a + b + c) / 3.0
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        nodes.push(placeholder());
        if n > 0 {
            build_node(mesh, &centroids, &mut order, &mut nodes, 0, 0, n);
        }
        Self { nodes, order }
    }

    pub fn closest_point(&self, mesh: &TriMesh, p: &Vec3) -> Option<ClosestPoint> {
        if self.order.is_empty() {
            return None;
        }
        let mut best: Option<ClosestPoint> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_squared(p) >= best_d2 {
                continue;
            }
            if node.is_leaf() {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let [a, b, c] = mesh.corners(t as usize);
                    let (q, bary) = closest_on_triangle(p, &a, &b, &c);
                    let d2 = (q - p).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = Some(ClosestPoint {
                            triangle: t as usize,
                            point: q,
                            barycentric: bary,
                            distance: 0.0,
                        });
                    }
                }
            } else {
                let (l, r) = (node.start as usize, node.start as usize + 1);
                let dl = self.nodes[l].bounds.distance_squared(p);
                let dr = self.nodes[r].bounds.distance_squared(p);
                // visit nearer child first
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.map(|mut c| {
            c.distance = best_d2.sqrt();
            c
        })
    }

    /// Generalized winding number of the mesh around `p` (1 inside a closed,
    /// outward-oriented surface, 0 outside).
    pub fn winding_number(&self, mesh: &TriMesh, p: &Vec3) -> f64 {
        if self.order.is_empty() {
            return 0.0;
        }
        let mut w = 0.0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let d = node.centroid - p;
            let dist = d.norm();
            if dist > WINDING_ACCURACY * node.radius && dist > 0.0 {
                w += d.dot(&node.normal_sum) / (4.0 * PI * dist * dist * dist);
                continue;
            }
            if node.is_leaf() {
                let s = node.start as usize;
                for &t in &self.order[s..s + node.count as usize] {
                    let [a, b, c] = mesh.corners(t as usize);
                    w += triangle_solid_angle(p, &a, &b, &c) / (4.0 * PI);
                }
            } else {
                stack.push(node.start as usize);
                stack.push(node.start as usize + 1);
            }
        }
        w
    }
}

fn placeholder() -> Node {
    Node {
        bounds: Aabb::empty(),
        start: 0,
        count: 0,
        normal_sum: Vec3::zeros(),
        centroid: Vec3::zeros(),
        radius: 0.0,
    }
}

fn build_node(
    mesh: &TriMesh,
    centroids: &[Vec3],
    order: &mut [u32],
    nodes: &mut Vec<Node>,
    index: usize,
    start: usize,
    end: usize,
) {
    let tris = &order[start..end];
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    let mut normal_sum = Vec3::zeros();
    let mut weighted = Vec3::zeros();
    let mut area_sum = 0.0;
    for &t in tris {
        let [a, b, c] = mesh.corners(t as usize);
        bounds.grow(&a);
        bounds.grow(&b);
        bounds.grow(&c);
        cbounds.grow(&centroids[t as usize]);
        let n = 0.5 * (b - a).cross(&(c - a));
        let area = n.norm();
        normal_sum += n;
        weighted += centroids[t as usize] * area;
        area_sum += area;
    }
    let centroid = if area_sum > 0.0 {
        weighted / area_sum
    } else {
        bounds.center()
    };
    let radius = bounds
        .corners()
        .iter()
        .map(|c| (c - centroid).norm())
        .fold(0.0, f64::max);
    nodes[index] = Node {
        bounds,
        start: start as u32,
        count: 0,
        normal_sum,
        centroid,
        radius,
    };

    let count = end - start;
    let ext = cbounds.extent();
    if count <= LEAF_SIZE || ext.max() <= 0.0 {
        nodes[index].count = count as u32;
        return;
    }
    let axis = ext.imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
    });
    let left = nodes.len();
    nodes.push(placeholder());
    nodes.push(placeholder());
    nodes[index].start = left as u32;
    build_node(mesh, centroids, order, nodes, left, start, mid);
    build_node(mesh, centroids, order, nodes, left + 1, mid, end);
}

/// Signed solid angle subtended by triangle `abc` at `p`.
pub(crate) fn triangle_solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
    2.0 * det.atan2(denom)
}

/// Closest point on triangle `abc` to `p` with its barycentric weights.
pub(crate) fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closest_point_matches_brute_force() {
        let mesh = TriMesh::icosphere(vec3(0.1, -0.2, 0.3), 0.8, 2);
        let bvh = Bvh::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = vec3(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let brute = (0..mesh.triangles.len())
                .map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    (closest_on_triangle(&p, &a, &b, &c).0 - p).norm()
                })
                .fold(f64::INFINITY, f64::min);
            let got = bvh.closest_point(&mesh, &p).unwrap();
            assert_relative_eq!(got.distance, brute, epsilon = 1e-12);
            let [a, b, c] = mesh.corners(got.triangle);
            let [u, v, w] = got.barycentric;
            assert_relative_eq!(a * u + b * v + c * w, got.point, epsilon = 1e-12);
        }
    }

    #[test]
    fn winding_number_inside_and_outside() {
        let mesh = TriMesh::icosphere(Vec3::zeros(), 1.0, 3);
        let bvh = Bvh::build(&mesh);
        // far-field clusters are dipole approximations, good to about a percent
        assert_relative_eq!(bvh.winding_number(&mesh, &Vec3::zeros()), 1.0, epsilon = 2e-2);
        assert_relative_eq!(bvh.winding_number(&mesh, &vec3(0.3, 0.5, -0.2)), 1.0, epsilon = 2e-2);
        assert!(bvh.winding_number(&mesh, &vec3(1.5, 0.0, 0.0)).abs() < 2e-2);
        assert!(bvh.winding_number(&mesh, &vec3(5.0, 4.0, 0.0)).abs() < 2e-2);
        let exact: f64 = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                triangle_solid_angle(&vec3(0.3, 0.5, -0.2), &a, &b, &c)
            })
            .sum::<f64>()
            / (4.0 * PI);
        assert_relative_eq!(exact, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn solid_angle_of_octant_triangle() {
        // the triangle x + y + z = 1 seen from the origin spans one octant
        let w = triangle_solid_angle(&Vec3::zeros(), &Vec3::x(), &Vec3::y(), &Vec3::z());
        assert_relative_eq!(w, 4.0 * PI / 8.0, epsilon = 1e-12);
    }
}
