//! Signed distance and color fields of the avatar, and ray/surface queries.
//!
//! Sign convention: negative strictly inside the surface.

mod grid;
mod mesh_field;
mod shape;
mod trace;

use std::fmt;
use std::sync::Arc;

pub use grid::{ColorGrid, GridField, Lattice, GRID_VERSION, RGB_MAGIC, SDF_MAGIC};
pub use mesh_field::{mesh_to_grid, MeshField, MeshGridReport};
pub use shape::{smooth_min, Shape};
pub use trace::{ray_surface_intersection, Ray, RayHit, FALLBACK_EPS_FACTOR, FALLBACK_SAMPLES};

use crate::error::{Error, Result};
use crate::geom::{is_finite, Aabb, Vec3};

/// Anything that can be evaluated as a signed distance.
pub trait DistanceField: Sync {
    fn distance(&self, p: &Vec3) -> f64;
}

impl<F> DistanceField for F
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    fn distance(&self, p: &Vec3) -> f64 {
        self(p)
    }
}

/// The avatar's signed distance function.
#[derive(Debug, Clone)]
pub enum ScalarField {
    Analytic(Shape),
    Grid(GridField),
    Mesh(MeshField),
}

impl ScalarField {
    pub fn bounds(&self) -> Aabb {
        match self {
            ScalarField::Analytic(s) => s.bounds(),
            ScalarField::Grid(g) => g.bounds(),
            ScalarField::Mesh(m) => m.bounds(),
        }
    }
}

impl DistanceField for ScalarField {
    #[inline]
    fn distance(&self, p: &Vec3) -> f64 {
        match self {
            ScalarField::Analytic(s) => s.distance(p),
            ScalarField::Grid(g) => g.distance(p),
            ScalarField::Mesh(m) => m.distance(p),
        }
    }
}

impl DistanceField for GridField {
    #[inline]
    fn distance(&self, p: &Vec3) -> f64 {
        GridField::distance(self, p)
    }
}

impl DistanceField for Shape {
    fn distance(&self, p: &Vec3) -> f64 {
        Shape::distance(self, p)
    }
}

pub fn eval_sdf(field: &ScalarField, point: &Vec3) -> Result<f64> {
    if !is_finite(point) {
        return Err(Error::invalid("sdf query point is not finite"));
    }
    Ok(field.distance(point))
}

pub type ColorFn = Arc<dyn Fn(&Vec3) -> [f64; 3] + Send + Sync>;

/// Position-dependent albedo in `[0, 1]³`.
#[derive(Clone)]
pub enum ColorField {
    Constant([f64; 3]),
    Grid(ColorGrid),
    /// Vertex colors of the closest surface point.
    Vertex(MeshField),
    Function(ColorFn),
}

impl fmt::Debug for ColorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColorField::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            ColorField::Grid(g) => f.debug_tuple("Grid").field(&g.lattice.dims).finish(),
            ColorField::Vertex(_) => f.write_str("Vertex"),
            ColorField::Function(_) => f.write_str("Function"),
        }
    }
}

impl ColorField {
    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        let c = match self {
            ColorField::Constant(c) => *c,
            ColorField::Grid(g) => g.color(p),
            ColorField::Vertex(m) => m.color(p),
            ColorField::Function(f) => f(p),
        };
        c.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
    }
}

pub fn eval_color(field: &ColorField, point: &Vec3) -> [f64; 3] {
    field.color(point)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vec3,
    /// Gradient vanished; `normal` is the +z fallback.
    pub degenerate: bool,
}

/// Normalized central-difference gradient with step `h`.
#[inline]
pub fn estimate_normal<F: DistanceField + ?Sized>(field: &F, p: &Vec3, h: f64) -> NormalEstimate {
    let dx = Vec3::new(h, 0.0, 0.0);
    let dy = Vec3::new(0.0, h, 0.0);
    let dz = Vec3::new(0.0, 0.0, h);
    let g = Vec3::new(
        field.distance(&(p + dx)) - field.distance(&(p - dx)),
        field.distance(&(p + dy)) - field.distance(&(p - dy)),
        field.distance(&(p + dz)) - field.distance(&(p - dz)),
    ) / (2.0 * h);
    let n = g.norm();
    if n < 1e-12 || !n.is_finite() {
        NormalEstimate {
            normal: Vec3::z(),
            degenerate: true,
        }
    } else {
        NormalEstimate {
            normal: g / n,
            degenerate: false,
        }
    }
}
