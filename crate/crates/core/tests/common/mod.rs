#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use avatar_core::fixture::{write_fixture, FixturePaths};
use avatar_core::geom::{vec3, Mat3, Vec3};
use avatar_core::landmarks::{partition_ibug68, FacialPart, LandmarkSet3D, Provenance};
use avatar_core::Execution;
use nalgebra::Rotation3;
use rand::Rng;

/// The procedural bust, written once per test binary.
pub fn fixture() -> &'static FixturePaths {
    static PATHS: OnceLock<FixturePaths> = OnceLock::new();
    PATHS.get_or_init(|| {
        let dir = scratch_dir("bust");
        write_fixture(&dir, Execution::default()).expect("fixture writes")
    })
}

/// A directory under cargo's per-target scratch space, unique to this binary.
pub fn scratch_dir(name: &str) -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    let stem = exe.file_stem().unwrap().to_string_lossy().into_owned();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(stem).join(name);
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

pub fn random_rotation(rng: &mut impl Rng, max_deg: f64) -> Mat3 {
    let axis = loop {
        let v = vec3(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            break v.normalize();
        }
    };
    let angle = rng.gen_range(-max_deg..max_deg).to_radians();
    *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

fn part_center(part: FacialPart) -> Vec3 {
    match part {
        FacialPart::RightBrow => vec3(-1.5, 1.5, 0.0),
        FacialPart::LeftBrow => vec3(1.5, 1.5, 0.0),
        FacialPart::Nose => vec3(0.0, 0.0, 0.5),
        FacialPart::RightEye => vec3(-1.5, 0.7, 0.0),
        FacialPart::LeftEye => vec3(1.5, 0.7, 0.0),
        FacialPart::Mouth => vec3(0.0, -1.5, 0.0),
    }
}

/// One box-shaped cloud per facial part, tilted by up to 30°, with extents
/// between 0.2 and 2 so every part frame is well conditioned.
pub fn random_face(rng: &mut impl Rng) -> LandmarkSet3D {
    let partition = partition_ibug68();
    let mut points = BTreeMap::new();
    for (part, members) in partition.parts() {
        let half = vec3(
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.3..0.8),
            rng.gen_range(0.1..0.25),
        );
        let r = random_rotation(rng, 30.0);
        let c = part_center(part)
            + vec3(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
            );
        for &i in members {
            let local = vec3(
                rng.gen_range(-1.0..1.0) * half.x,
                rng.gen_range(-1.0..1.0) * half.y,
                rng.gen_range(-1.0..1.0) * half.z,
            );
            points.insert(i, c + r * local);
        }
    }
    LandmarkSet3D::new(points, Provenance::Driver).unwrap()
}

/// Like [`random_face`] but each part is mirror-symmetric in x about its own
/// center and tilted only about x, so every part normal lies in the y-z plane.
pub fn random_symmetric_face(rng: &mut impl Rng) -> LandmarkSet3D {
    let partition = partition_ibug68();
    let mut points = BTreeMap::new();
    for (part, members) in partition.parts() {
        let half = vec3(
            rng.gen_range(0.5..1.0),
            rng.gen_range(0.3..0.6),
            rng.gen_range(0.05..0.15),
        );
        let tilt = rng.gen_range(-30.0f64..30.0).to_radians();
        let r = *Rotation3::from_axis_angle(&Vec3::x_axis(), tilt).matrix();
        let c = part_center(part);
        let mut local = Vec::with_capacity(members.len());
        let pairs = members.len() / 2;
        for k in 0..pairs {
            // pairs spread evenly in y keep the part thin along its normal
            let y = half.y * (-1.0 + 2.0 * (k as f64 + rng.gen_range(0.25..0.75)) / pairs as f64);
            let p = vec3(rng.gen_range(0.1..1.0) * half.x, y, rng.gen_range(-1.0..1.0) * half.z);
            local.push(p);
            local.push(vec3(-p.x, p.y, p.z));
        }
        if local.len() < members.len() {
            local.push(vec3(
                0.0,
                rng.gen_range(-1.0..1.0) * half.y,
                rng.gen_range(-1.0..1.0) * half.z,
            ));
        }
        for (&i, p) in members.iter().zip(local) {
            points.insert(i, c + r * p);
        }
    }
    LandmarkSet3D::new(points, Provenance::Driver).unwrap()
}

/// `set` with each landmark moved by a random vector of length up to `scale`.
pub fn perturbed(rng: &mut impl Rng, set: &LandmarkSet3D, scale: f64) -> LandmarkSet3D {
    let points = set
        .points
        .iter()
        .map(|(&i, p)| {
            let d = vec3(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            (i, p + d * scale)
        })
        .collect();
    LandmarkSet3D::new(points, set.provenance).unwrap()
}

pub fn mapped(set: &LandmarkSet3D, f: impl Fn(&Vec3) -> Vec3) -> LandmarkSet3D {
    let points = set.points.iter().map(|(&i, p)| (i, f(p))).collect();
    LandmarkSet3D::new(points, set.provenance).unwrap()
}

/// Barycentric coordinates of `p` in tetrahedron `c` by direct solve.
pub fn barycentric(c: &[Vec3; 4], p: &Vec3) -> [f64; 4] {
    let m = Mat3::from_columns(&[c[1] - c[0], c[2] - c[0], c[3] - c[0]]);
    let x = m.lu().solve(&(p - c[0])).expect("non-degenerate tet");
    [1.0 - x.x - x.y - x.z, x.x, x.y, x.z]
}

pub fn random_barycentric(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-6f64..1.0).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}
