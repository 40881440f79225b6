use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec3};

/// Closed-form signed distance primitives and their combinations.
///
/// Every variant is 1-Lipschitz (ellipsoids use the scaled-sphere lower
/// bound), so sphere tracing with unit step scale never tunnels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Ellipsoid {
        center: Vec3,
        radii: Vec3,
    },
    Capsule {
        a: Vec3,
        b: Vec3,
        radius: f64,
    },
    /// Half-space `normal · p < offset`.
    Plane {
        normal: Vec3,
        offset: f64,
    },
    Union {
        parts: Vec<Shape>,
    },
    SmoothUnion {
        a: Box<Shape>,
        b: Box<Shape>,
        k: f64,
    },
    /// `a` with `b` carved away, blended over `k`.
    SmoothSubtract {
        a: Box<Shape>,
        b: Box<Shape>,
        k: f64,
    },
}

impl Shape {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Shape::Sphere { center, radius }
    }

    pub fn smooth_union(a: Shape, b: Shape, k: f64) -> Self {
        Shape::SmoothUnion {
            a: Box::new(a),
            b: Box::new(b),
            k,
        }
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Ellipsoid { center, radii } => {
                let q = (p - center).component_div(radii);
                (q.norm() - 1.0) * radii.min()
            }
            Shape::Capsule { a, b, radius } => {
                let ab = b - a;
                let h = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - a - ab * h).norm() - radius
            }
            Shape::Plane { normal, offset } => normal.dot(p) - offset,
            Shape::Union { parts } => parts.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min),
            Shape::SmoothUnion { a, b, k } => smooth_min(a.distance(p), b.distance(p), *k),
            Shape::SmoothSubtract { a, b, k } => -smooth_min(-a.distance(p), b.distance(p), *k),
        }
    }

    /// A box containing the zero level set (unbounded shapes report a unit box).
    pub fn bounds(&self) -> Aabb {
        match self {
            Shape::Sphere { center, radius } => {
                Aabb::new(center - Vec3::repeat(*radius), center + Vec3::repeat(*radius))
            }
            Shape::Ellipsoid { center, radii } => Aabb::new(center - radii, center + radii),
            Shape::Capsule { a, b, radius } => {
                let r = Vec3::repeat(*radius);
                Aabb::new(a.inf(b) - r, a.sup(b) + r)
            }
            Shape::Plane { .. } => Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)),
            Shape::Union { parts } => parts
                .iter()
                .map(Shape::bounds)
                .reduce(|a, b| a.union(&b))
                .unwrap_or_else(Aabb::empty),
            Shape::SmoothUnion { a, b, k } => a.bounds().union(&b.bounds()).padded(*k * 0.25),
            Shape::SmoothSubtract { a, .. } => a.bounds(),
        }
    }
}

/// Polynomial smooth minimum with blend width `k`.
pub fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b + (a - b) * h - k * h * (1.0 - h)
}
