use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::mesh::{Bvh, ClosestPoint, TriMesh};
use crate::sdf::GridField;
use crate::Execution;

/// Winding numbers within this distance of 0.5 count as ambiguous.
const AMBIGUOUS_BAND: f64 = 0.1;
/// Ambiguous-voxel fraction above which the mesh is reported as open.
const AMBIGUOUS_LIMIT: f64 = 0.05;

/// Signed distance to a triangle mesh: unsigned nearest-triangle distance,
/// negative where the generalized winding number exceeds 0.5.
#[derive(Debug, Clone)]
pub struct MeshField {
    mesh: Arc<TriMesh>,
    bvh: Arc<Bvh>,
}

impl MeshField {
    pub fn new(mesh: TriMesh) -> Result<Self> {
        mesh.validate()?;
        if mesh.triangles.is_empty() {
            return Err(Error::invalid("mesh field needs at least one triangle"));
        }
        let bvh = Bvh::build(&mesh);
        Ok(Self {
            mesh: Arc::new(mesh),
            bvh: Arc::new(bvh),
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bounds(&self) -> Aabb {
        self.mesh.bounds()
    }

    pub fn closest(&self, p: &Vec3) -> ClosestPoint {
        self.bvh
            .closest_point(&self.mesh, p)
            .expect("mesh field is never empty")
    }

    pub fn winding_number(&self, p: &Vec3) -> f64 {
        self.bvh.winding_number(&self.mesh, p)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = self.closest(p).distance;
        if self.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }

    /// Barycentric blend of the closest triangle's vertex colors (white when
    /// the mesh carries none).
    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        let Some(colors) = &self.mesh.colors else {
            return [1.0; 3];
        };
        let c = self.closest(p);
        let tri = self.mesh.triangles[c.triangle];
        let mut out = [0.0; 3];
        for (k, &vi) in tri.iter().enumerate() {
            for (o, ch) in out.iter_mut().zip(colors[vi as usize]) {
                *o += c.barycentric[k] * ch as f64;
            }
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Diagnostics from voxelizing a mesh.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct MeshGridReport {
    pub open_edges: usize,
    pub ambiguous_fraction: f64,
    pub inside_fraction: f64,
    pub warnings: Vec<String>,
}

/// Samples the mesh's signed distance on an `n³` lattice over its bounding box
/// padded by `padding` world units.
pub fn mesh_to_grid(field: &MeshField, n: usize, padding: f64, exec: Execution) -> Result<(GridField, MeshGridReport)> {
    if n < 16 {
        return Err(Error::invalid(format!(
            "mesh_to_grid needs at least 16 samples per axis, got {n}"
        )));
    }
    let bounds = field.bounds().padded(padding.max(0.0));
    let lattice = crate::sdf::Lattice::new([n, n, n], bounds)?;
    let samples: Vec<(f32, f64)> = exec.map_range(lattice.len(), |i| {
        let p = lattice.point_of(i);
        let d = field.closest(&p).distance;
        let w = field.winding_number(&p);
        ((if w > 0.5 { -d } else { d }) as f32, w)
    });

    let total = samples.len() as f64;
    let ambiguous = samples.iter().filter(|(_, w)| (w - 0.5).abs() < AMBIGUOUS_BAND).count() as f64;
    let inside = samples.iter().filter(|(_, w)| *w > 0.5).count() as f64;
    let mut report = MeshGridReport {
        open_edges: field.mesh().open_edge_count(),
        ambiguous_fraction: ambiguous / total,
        inside_fraction: inside / total,
        warnings: Vec::new(),
    };
    if report.open_edges > 0 {
        report
            .warnings
            .push(format!("mesh is not watertight ({} open edges)", report.open_edges));
    }
    if report.ambiguous_fraction > AMBIGUOUS_LIMIT {
        report.warnings.push(format!(
            "winding number near 0.5 over {:.1}% of voxels",
            100.0 * report.ambiguous_fraction
        ));
    }
    if inside == 0.0 {
        report
            .warnings
            .push("mesh encloses no volume; field is unsigned".into());
    }
    for w in &report.warnings {
        log::warn!("mesh_to_grid: {w}");
    }
    let grid = GridField {
        lattice,
        values: samples.into_iter().map(|(v, _)| v).collect(),
    };
    Ok((grid, report))
}
