use std::collections::HashMap;

use super::TriMesh;
use crate::geom::{Aabb, Vec3};

/// Cube corners are numbered `x + 2y + 4z`; each tet walks from corner 0 to 7
/// along one axis permutation, which keeps face diagonals consistent between
/// neighbouring cells.
const KUHN_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Extracts the `iso` level set of a lattice of samples (x-fastest layout over
/// `bounds`) with marching tetrahedra. Triangles are wound so their normals
/// point toward increasing values.
pub fn extract_isosurface(dims: [usize; 3], bounds: &Aabb, values: &[f32], iso: f64) -> TriMesh {
    let [nx, ny, nz] = dims;
    assert_eq!(values.len(), nx * ny * nz);
    let step = bounds
        .extent()
        .component_div(&Vec3::new((nx - 1) as f64, (ny - 1) as f64, (nz - 1) as f64));
    let lattice = |i: usize| -> Vec3 {
        let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
        bounds.min + step.component_mul(&Vec3::new(x as f64, y as f64, z as f64))
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut cache: HashMap<(usize, usize), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    let mut edge_vertex = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> u32 {
        let (va, vb) = (values[a] as f64 - iso, values[b] as f64 - iso);
        // a sample exactly on the level set becomes a shared vertex
        let key = if va == 0.0 {
            (a, a)
        } else if vb == 0.0 {
            (b, b)
        } else {
            (a.min(b), a.max(b))
        };
        *cache.entry(key).or_insert_with(|| {
            let t = (va / (va - vb)).clamp(0.0, 1.0);
            let (pa, pb) = (lattice(a), lattice(b));
            vertices.push(pa + (pb - pa) * t);
            vertices.len() as u32 - 1
        })
    };

    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let base = x + nx * (y + ny * z);
                let corner = |c: usize| base + (c & 1) + nx * ((c >> 1) & 1) + nx * ny * (c >> 2);
                let ids: [usize; 8] = std::array::from_fn(corner);
                let inside = ids.map(|i| (values[i] as f64) < iso);
                if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                    continue;
                }
                for tet in KUHN_TETS {
                    let v = tet.map(|c| ids[c]);
                    let ins: Vec<usize> = v.iter().copied().filter(|&i| (values[i] as f64) < iso).collect();
                    let outs: Vec<usize> = v.iter().copied().filter(|&i| (values[i] as f64) >= iso).collect();
                    let mut tris: Vec<[u32; 3]> = Vec::new();
                    match ins.len() {
                        1 => tris.push([
                            edge_vertex(ins[0], outs[0], &mut vertices),
                            edge_vertex(ins[0], outs[1], &mut vertices),
                            edge_vertex(ins[0], outs[2], &mut vertices),
                        ]),
                        3 => tris.push([
                            edge_vertex(ins[0], outs[0], &mut vertices),
                            edge_vertex(ins[1], outs[0], &mut vertices),
                            edge_vertex(ins[2], outs[0], &mut vertices),
                        ]),
                        2 => {
                            let ac = edge_vertex(ins[0], outs[0], &mut vertices);
                            let ad = edge_vertex(ins[0], outs[1], &mut vertices);
                            let bd = edge_vertex(ins[1], outs[1], &mut vertices);
                            let bc = edge_vertex(ins[1], outs[0], &mut vertices);
                            tris.push([ac, ad, bd]);
                            tris.push([ac, bd, bc]);
                        }
                        _ => continue,
                    }
                    let centroid = |s: &[usize]| s.iter().map(|&i| lattice(i)).sum::<Vec3>() / s.len() as f64;
                    let outward = centroid(&outs) - centroid(&ins);
                    for mut t in tris {
                        let [p0, p1, p2] = t.map(|i| vertices[i as usize]);
                        if (p1 - p0).cross(&(p2 - p0)).dot(&outward) < 0.0 {
                            t.swap(1, 2);
                        }
                        triangles.push(t);
                    }
                }
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles);
    mesh.remove_degenerate();
    mesh
}
