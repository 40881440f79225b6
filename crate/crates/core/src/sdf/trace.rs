use super::DistanceField;
use crate::error::{Error, Result};
use crate::geom::{is_finite, Vec3};

/// Samples used by the dense fallback when no sign change is found.
pub const FALLBACK_SAMPLES: usize = 256;
/// Fallback acceptance threshold as a multiple of `eps`.
pub const FALLBACK_EPS_FACTOR: f64 = 4.0;
const MAX_TRACE_STEPS: usize = 1024;
const MAX_BISECTIONS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails for zero or non-finite input.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !is_finite(&origin) || !n.is_finite() || n == 0.0 {
            return Err(Error::invalid("ray needs a finite origin and non-zero direction"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: Vec3,
    /// |f(point)|.
    pub residual: f64,
    /// Found by the dense arg-min fallback rather than a sign change.
    pub fallback: bool,
}

/// First point along the ray where the field is within `eps` of zero.
///
/// Sphere traces from `t = 0`, bisecting across the first sign change. When
/// the ray never crosses the surface before `t_max`, `FALLBACK_SAMPLES` uniform
/// samples are scanned and the arg-min of |f| is accepted if it is within
/// `FALLBACK_EPS_FACTOR · eps`.
pub fn ray_surface_intersection<F: DistanceField + ?Sized>(
    field: &F,
    ray: &Ray,
    t_max: f64,
    eps: f64,
) -> Option<RayHit> {
    debug_assert!(t_max > 0.0 && eps > 0.0);
    let hit = |t: f64, f: f64, fallback| {
        Some(RayHit {
            t,
            point: ray.at(t),
            residual: f.abs(),
            fallback,
        })
    };

    let mut t_prev = 0.0;
    let mut f_prev = field.distance(&ray.origin);
    if f_prev.abs() <= eps {
        return hit(0.0, f_prev, false);
    }
    for _ in 0..MAX_TRACE_STEPS {
        let t = (t_prev + f_prev.abs().max(eps)).min(t_max);
        let f = field.distance(&ray.at(t));
        if f.abs() <= eps {
            return hit(t, f, false);
        }
        if f.signum() != f_prev.signum() {
            if let Some((tb, fb)) = bisect(field, ray, (t_prev, f_prev), (t, f), eps) {
                return hit(tb, fb, false);
            }
            break;
        }
        if t >= t_max {
            break;
        }
        t_prev = t;
        f_prev = f;
    }

    let (t, f) = (0..FALLBACK_SAMPLES)
        .map(|i| {
            let t = t_max * i as f64 / (FALLBACK_SAMPLES - 1) as f64;
            (t, field.distance(&ray.at(t)))
        })
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
    if f.abs() <= FALLBACK_EPS_FACTOR * eps {
        hit(t, f, true)
    } else {
        None
    }
}

fn bisect<F: DistanceField + ?Sized>(
    field: &F,
    ray: &Ray,
    lo: (f64, f64),
    hi: (f64, f64),
    eps: f64,
) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..MAX_BISECTIONS {
        let t = 0.5 * (lo.0 + hi.0);
        let f = field.distance(&ray.at(t));
        if f.abs() <= eps {
            return Some((t, f));
        }
        if f.signum() == lo.1.signum() {
            lo = (t, f);
        } else {
            hi = (t, f);
        }
        if hi.0 - lo.0 <= f64::EPSILON * hi.0.abs().max(1.0) {
            break;
        }
    }
    None
}
