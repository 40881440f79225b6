//! Procedural bust used by the tests, the benches and `avatar make-fixture`.
//!
//! The bust is a smooth CSG of a head, nose, neck and torso inside `[-1, 1]³`,
//! sampled to a 128³ distance grid and a 64³ color grid. The 68 landmarks are
//! laid out on the face and projected through the front camera; the driver
//! library holds a differently proportioned face at another scale.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::camera::{CameraPose, Projection};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom::{vec3, Aabb, Vec3};
use crate::landmarks::{LandmarkSet2D, LandmarkSet3D, Provenance, LANDMARK_COUNT};
use crate::pipeline::DriverLibrary;
use crate::sdf::{ray_surface_intersection, ColorGrid, GridField, Ray, Shape};

pub const SDF_RESOLUTION: usize = 128;
pub const COLOR_RESOLUTION: usize = 64;
pub const IMAGE_SIZE: [u32; 2] = [256, 256];
pub const Y_HEAD: f64 = -0.05;
pub const Y_TORSO: f64 = -0.45;
pub const TRACK_FRAMES: usize = 10;
pub const TRACK_YAW_DEG: f64 = 15.0;

pub const MANIFEST_FILE: &str = "avatar.json";
pub const TRACK_FILE: &str = "track.json";

const HEAD_CENTER: [f64; 3] = [0.0, 0.35, 0.0];
const HEAD_RADII: [f64; 3] = [0.38, 0.48, 0.42];
/// Driver faces are given in centimeters.
const DRIVER_SCALE: f64 = 10.0;

pub fn bounds() -> Aabb {
    Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0))
}

pub fn bust_shape() -> Shape {
    let head = Shape::Ellipsoid {
        center: Vec3::from(HEAD_CENTER),
        radii: Vec3::from(HEAD_RADII),
    };
    let nose = Shape::Ellipsoid {
        center: vec3(0.0, 0.3, 0.39),
        radii: vec3(0.05, 0.1, 0.07),
    };
    let neck = Shape::Capsule {
        a: vec3(0.0, -0.5, -0.02),
        b: vec3(0.0, 0.05, -0.02),
        radius: 0.16,
    };
    let torso = Shape::Ellipsoid {
        center: vec3(0.0, -0.68, 0.0),
        radii: vec3(0.7, 0.3, 0.32),
    };
    Shape::smooth_union(
        Shape::smooth_union(Shape::smooth_union(head, nose, 0.03), neck, 0.06),
        torso,
        0.08,
    )
}

pub fn front_camera() -> CameraPose {
    CameraPose::look_at(
        vec3(0.0, 0.1, 4.5),
        vec3(0.0, 0.1, 0.0),
        Vec3::y(),
        Projection::Perspective { fov_y_deg: 28.0 },
        IMAGE_SIZE,
    )
    .expect("valid camera")
}

/// Albedo: skin with darker brows, pale eyes and red lips near the landmark layout.
pub fn albedo(p: &Vec3) -> [f64; 3] {
    let skin = [0.93, 0.76, 0.62];
    let shirt = [0.25, 0.4, 0.7];
    if p.y < Y_TORSO - 0.05 {
        return shirt;
    }
    if p.z < 0.15 || p.y < 0.0 {
        return skin;
    }
    let near = |c: [f64; 2], r: [f64; 2]| ((p.x - c[0]) / r[0]).powi(2) + ((p.y - c[1]) / r[1]).powi(2) < 1.0;
    if near([-0.17, 0.525], [0.12, 0.025]) || near([0.17, 0.525], [0.12, 0.025]) {
        return [0.35, 0.22, 0.15];
    }
    if near([-0.15, 0.42], [0.065, 0.03]) || near([0.15, 0.42], [0.065, 0.03]) {
        return [0.97, 0.97, 0.95];
    }
    if near([0.0, 0.16], [0.11, 0.04]) {
        return [0.8, 0.25, 0.28];
    }
    skin
}

fn arc(n: usize, x0: f64, x1: f64, y: impl Fn(f64) -> f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
            [x, y(x)]
        })
        .collect()
}

fn ring(center: [f64; 2], half: [f64; 2], angles: &[f64]) -> Vec<[f64; 2]> {
    angles
        .iter()
        .map(|a| {
            let a = a.to_radians();
            [center[0] + half[0] * a.cos(), center[1] + half[1] * a.sin()]
        })
        .collect()
}

/// Face layout in the front plane: `(x, y)` for each of the 68 landmarks.
///
/// `eye_gap` is the horizontal eye-center offset, `mouth_width` the
/// half-width of the outer lip line; the rest scales with them.
fn face_layout(eye_gap: f64, mouth_width: f64, brow_y: f64, eye_y: f64, mouth_y: f64) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);
    // jaw, subject's right to left
    let jaw: Vec<f64> = (0..17).map(|i| 180.0 + 180.0 * i as f64 / 16.0).collect();
    pts.extend(ring([0.0, eye_y - 0.02], [0.34, 0.4], &jaw));
    let bw = 0.1;
    pts.extend(arc(5, -eye_gap - bw, -eye_gap + bw, |x| {
        brow_y + 0.025 - 2.0 * (x + eye_gap).powi(2)
    }));
    pts.extend(arc(5, eye_gap - bw, eye_gap + bw, |x| {
        brow_y + 0.025 - 2.0 * (x - eye_gap).powi(2)
    }));
    pts.extend((0..4).map(|i| [0.0, eye_y + 0.02 - 0.045 * i as f64]));
    pts.extend(arc(5, -0.07, 0.07, |x| eye_y - 0.16 + 1.5 * x * x));
    let eye = [180.0, 120.0, 60.0, 0.0, -60.0, -120.0];
    pts.extend(ring([-eye_gap, eye_y], [0.06, 0.025], &eye));
    // left eye starts at its inner corner
    let left: Vec<f64> = eye.iter().map(|a| 180.0 - a).collect();
    pts.extend(ring([eye_gap, eye_y], [0.06, 0.025], &left));
    let outer: Vec<f64> = (0..12).map(|i| 180.0 - 30.0 * i as f64).collect();
    pts.extend(ring([0.0, mouth_y], [mouth_width, 0.045], &outer));
    let inner = [180.0, 120.0, 90.0, 60.0, 0.0, -60.0, -90.0, -120.0];
    pts.extend(ring([0.0, mouth_y], [0.75 * mouth_width, 0.015], &inner));
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    pts
}

fn avatar_layout() -> Vec<[f64; 2]> {
    face_layout(0.15, 0.1, 0.5, 0.42, 0.16)
}

/// 3D landmarks on the bust surface, by casting the layout along −z.
pub fn surface_landmarks(shape: &Shape) -> Vec<Vec3> {
    avatar_layout()
        .into_iter()
        .map(|[x, y]| {
            let ray = Ray::new(vec3(x, y, 2.0), -Vec3::z()).expect("valid ray");
            match ray_surface_intersection(shape, &ray, 4.0, 1e-7) {
                Some(hit) => hit.point,
                None => vec3(x, y, 0.0),
            }
        })
        .collect()
}

pub fn landmarks_2d(shape: &Shape, camera: &CameraPose) -> LandmarkSet2D {
    let points = surface_landmarks(shape)
        .iter()
        .map(|p| camera.project(p).expect("landmark in front of the camera"))
        .collect();
    LandmarkSet2D {
        image_size: camera.image_size,
        points,
    }
}

fn driver_set(layout: &[[f64; 2]], displace: impl Fn(usize, [f64; 2]) -> [f64; 2]) -> LandmarkSet3D {
    let radius = 0.55;
    let points = layout
        .iter()
        .enumerate()
        .skip(17)
        .map(|(i, &xy)| {
            let [x, y] = displace(i, xy);
            let z = (radius * radius - x * x - (y - 0.3).powi(2)).max(0.0).sqrt();
            (i, vec3(x, y, z) * DRIVER_SCALE)
        })
        .collect::<BTreeMap<_, _>>();
    LandmarkSet3D::new(points, Provenance::Driver).expect("finite driver landmarks")
}

/// Driver library with `mouth_open`, `smile`, `brows_up` and `eyes_closed`.
pub fn driver_library() -> DriverLibrary {
    let layout = face_layout(0.17, 0.12, 0.52, 0.43, 0.12);
    let lower_lip = |i: usize| matches!(i, 55..=59 | 65..=67);
    let poses = [
        (
            "mouth_open",
            Box::new(move |i: usize, [x, y]: [f64; 2]| {
                if lower_lip(i) {
                    [x, y - 0.08]
                } else if matches!(i, 48 | 54 | 60 | 64) {
                    [x * 0.9, y - 0.03]
                } else {
                    [x, y]
                }
            }) as Box<dyn Fn(usize, [f64; 2]) -> [f64; 2]>,
        ),
        (
            "smile",
            Box::new(move |i: usize, [x, y]: [f64; 2]| {
                if (48..68).contains(&i) {
                    let k = (x / 0.12).abs();
                    [x * (1.0 + 0.15 * k), y + 0.03 * k * k]
                } else {
                    [x, y]
                }
            }),
        ),
        (
            "brows_up",
            Box::new(|i: usize, [x, y]: [f64; 2]| if (17..27).contains(&i) { [x, y + 0.04] } else { [x, y] }),
        ),
        (
            "eyes_closed",
            Box::new(|i: usize, [x, y]: [f64; 2]| {
                if matches!(i, 37 | 38 | 43 | 44) {
                    [x, y - 0.045]
                } else {
                    [x, y]
                }
            }),
        ),
    ];
    let neutral = driver_set(&layout, |_, p| p);
    let poses = poses
        .into_iter()
        .map(|(name, f)| (name.to_string(), driver_set(&layout, f)))
        .collect();
    DriverLibrary::new(neutral, poses, Vec3::z()).expect("valid driver library")
}

/// Mouth opening ramping 0→1 while the head turns to `TRACK_YAW_DEG`.
pub fn track_json() -> serde_json::Value {
    let frames: Vec<_> = (0..TRACK_FRAMES)
        .map(|i| {
            let w = i as f64 / (TRACK_FRAMES - 1) as f64;
            json!({
                "drive": {"pose": "mouth_open", "w": w},
                "pose": {"head": {"euler": [0.0, TRACK_YAW_DEG * w, 0.0]}},
            })
        })
        .collect();
    json!({ "frames": frames })
}

#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub track: PathBuf,
}

/// Writes the bust, its manifest, landmarks, drivers and a 10-frame track.
pub fn write_fixture(dir: &Path, exec: Execution) -> Result<FixturePaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = bust_shape();
    let n = SDF_RESOLUTION;
    let sdf = GridField::sample([n; 3], bounds(), exec, |p| shape.distance(p))?;
    sdf.write(&dir.join("bust.sdf"))?;
    let n = COLOR_RESOLUTION;
    let color = ColorGrid::sample([n; 3], bounds(), exec, albedo)?;
    color.write(&dir.join("bust.rgb"))?;

    let camera = front_camera();
    let write_json = |name: &str, value: &serde_json::Value| -> Result<()> {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(value).expect("serializable");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write_json(
        "landmarks2d.json",
        &serde_json::to_value(landmarks_2d(&shape, &camera)).expect("serializable"),
    )?;
    let drivers = dir.join("drivers.json");
    fs::write(&drivers, driver_library().to_json()).map_err(|e| Error::io(&drivers, e))?;
    write_json(
        MANIFEST_FILE,
        &json!({
            "sdf": "bust.sdf",
            "color": "bust.rgb",
            "front_camera": {
                "position": [0.0, 0.1, 4.5],
                "target": [0.0, 0.1, 0.0],
                "projection": {"type": "perspective", "fov_y_deg": 28.0},
                "image_size": IMAGE_SIZE,
            },
            "landmarks2d": "landmarks2d.json",
            "y_head": Y_HEAD,
            "y_torso": Y_TORSO,
            "alpha": crate::pipeline::DEFAULT_ALPHA,
            "drivers": "drivers.json",
        }),
    )?;
    write_json(TRACK_FILE, &track_json())?;
    Ok(FixturePaths {
        dir: dir.to_path_buf(),
        manifest: dir.join(MANIFEST_FILE),
        track: dir.join(TRACK_FILE),
    })
}
