mod common;

use std::collections::HashSet;
use std::sync::Arc;

use avatar_core::geom::{vec3, Mat3, Vec3};
use avatar_core::landmarks::{augment_landmarks, LandmarkSet3D, Provenance};
use avatar_core::motion::align_rotation;
use avatar_core::sdf::Shape;
use avatar_core::warp::{cage_membership, delaunay_3d, Region, TetMesh, WarpField};
use proptest::prelude::*;
use robust::Coord3D;

fn point() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| vec3(x, y, z))
}

fn cloud(min: usize, max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(point(), min..max)
}

fn c(p: &Vec3) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

/// Exact: positive when `e` lies strictly inside the circumsphere of positively oriented `abcd`.
fn strictly_inside(a: &Vec3, b: &Vec3, cc: &Vec3, d: &Vec3, e: &Vec3) -> bool {
    robust::insphere(c(b), c(a), c(cc), c(d), c(e)) > 0.0
}

fn unit_vector() -> impl Strategy<Value = Vec3> {
    point()
        .prop_filter("non-zero", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn delaunay_is_positive_empty_sphere_and_adjacent(points in cloud(5, 70)) {
        let (mesh, report) = delaunay_3d(&points).unwrap();
        prop_assert_eq!(report.points, points.len());
        prop_assert_eq!(&mesh.vertices, &points);
        let mut used = HashSet::new();
        for t in 0..mesh.len() {
            prop_assert!(mesh.signed_volume(t) > 0.0, "tet {} volume {}", t, mesh.signed_volume(t));
            let [a, b, cc, d] = mesh.corners(t);
            for (i, e) in points.iter().enumerate() {
                if !mesh.tets[t].contains(&(i as u32)) {
                    prop_assert!(!strictly_inside(&a, &b, &cc, &d, e), "point {} inside sphere of tet {}", i, t);
                }
            }
            used.extend(mesh.tets[t]);
            for k in 0..4 {
                if let Some(n) = mesh.neighbor(t, k) {
                    prop_assert!(mesh.neighbors[n].contains(&(t as u32)));
                    let shared = mesh.tets[t].iter().filter(|v| mesh.tets[n].contains(v)).count();
                    prop_assert_eq!(shared, 3);
                    prop_assert!(!mesh.tets[n].contains(&mesh.tets[t][k]));
                }
            }
        }
        prop_assert_eq!(used.len(), points.len());
    }

    #[test]
    fn inverted_count_matches_brute_force(points in cloud(8, 40), seed in any::<u64>(), scale in 0.0..0.6f64) {
        use rand::{Rng, SeedableRng};
        let (mesh, _) = delaunay_3d(&points).unwrap();
        let mesh = Arc::new(mesh);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let deformed: Vec<Vec3> = points
            .iter()
            .map(|p| p + vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
            .collect();
        let warp = WarpField::new(mesh.clone(), deformed.clone()).unwrap();
        let expected = mesh
            .tets
            .iter()
            .filter(|tet| {
                let [a, b, cc, d] = tet.map(|i| deformed[i as usize]);
                Mat3::from_columns(&[b - a, cc - a, d - a]).determinant() <= 0.0
            })
            .count();
        prop_assert_eq!(warp.inverted_count(), expected);
        prop_assert_eq!(warp.diagnostics().inverted_tets, expected);
    }

    /// Moving one control point leaves every tet away from it fixed.
    #[test]
    fn single_point_warp_is_local(points in cloud(12, 40), which in any::<prop::sample::Index>(), shift in point(), probes in cloud(50, 51)) {
        let (mesh, _) = delaunay_3d(&points).unwrap();
        let mesh = Arc::new(mesh);
        let moved = which.index(points.len());
        let mut deformed = points.clone();
        deformed[moved] += shift * 0.05;
        let warp = WarpField::new(mesh.clone(), deformed).unwrap();
        for p in &probes {
            match warp.locate(p) {
                Some(loc) if !mesh.tets[loc.tet].contains(&(moved as u32)) => {
                    prop_assert!((warp.backward(p) - p).norm() <= 1e-12);
                }
                Some(_) => {}
                None => prop_assert_eq!(warp.backward(p), *p),
            }
        }
        let far = vec3(10.0, 10.0, 10.0);
        prop_assert_eq!(warp.backward(&far), far);
    }

    #[test]
    fn align_rotation_maps_n_to_z(n in unit_vector()) {
        let r = align_rotation(&n);
        prop_assert!((r * n - Vec3::z()).norm() < 1e-12);
        prop_assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn align_rotation_near_antipode(dx in -1e-5..1e-5f64, dy in -1e-5..1e-5f64) {
        let n = vec3(dx, dy, -1.0).normalize();
        let r = align_rotation(&n);
        prop_assert!((r * n - Vec3::z()).norm() < 1e-4);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn augmentation_is_symmetric(points in cloud(3, 20), alpha in 0.01..2.0f64, axis in unit_vector(), len in 0.1..10.0f64) {
        let set = LandmarkSet3D::new(points.iter().copied().enumerate().map(|(i, p)| (17 + i, p)).collect(), Provenance::Projected).unwrap();
        let aug = augment_landmarks(&set, alpha, &(axis * len)).unwrap();
        prop_assert_eq!(aug.len(), 3 * points.len());
        for (i, p) in &set.points {
            let up = aug.plus[i] - p;
            let down = p - aug.minus[i];
            prop_assert!((up - down).norm() <= 4.0 * f64::EPSILON * (p.norm() + alpha));
            prop_assert!((up.norm() - alpha).abs() <= 1e-12 * (1.0 + p.norm()));
            prop_assert!((up.normalize() - axis).norm() <= 1e-9);
        }
        let cp = aug.control_points();
        prop_assert_eq!(cp.len(), aug.len());
        prop_assert_eq!(cp[points.len()], aug.plus[&17]);
    }
}

/// Volume of a vertical capsule (axis from y = −h to y = h, radius r) above height `y`.
fn capsule_volume_above(h: f64, r: f64, y: f64) -> f64 {
    let cap = |d: f64| {
        // volume of a sphere cap of height d ∈ [0, 2r]
        let d = d.clamp(0.0, 2.0 * r);
        std::f64::consts::PI * d * d * (3.0 * r - d) / 3.0
    };
    let cyl = std::f64::consts::PI * r * r * (h - y.clamp(-h, h));
    let top = cap((h + r - y).min(r));
    let bottom = if y < -h { cap(r) - cap(y + h + r) } else { 0.0 };
    cyl + top + bottom
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cage_membership_volume_fractions(y_torso in -0.9..0.2f64, gap in 0.1..0.6f64, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let (h, r) = (0.6, 0.4);
        let y_head = y_torso + gap;
        let capsule = Shape::Capsule { a: vec3(0.0, -h, 0.0), b: vec3(0.0, h, 0.0), radius: r };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(20_000);
        while samples.len() < 20_000 {
            let p = vec3(rng.gen_range(-r..r), rng.gen_range(-h - r..h + r), rng.gen_range(-r..r));
            if capsule.distance(&p) < 0.0 {
                samples.push(p);
            }
        }
        let regions = cage_membership(&samples, y_head, y_torso).unwrap();
        let total = capsule_volume_above(h, r, -h - r);
        let expect_head = capsule_volume_above(h, r, y_head) / total;
        let expect_torso = 1.0 - capsule_volume_above(h, r, y_torso) / total;
        let frac = |want: Region| regions.iter().filter(|&&g| g == want).count() as f64 / samples.len() as f64;
        prop_assert!((frac(Region::Head) - expect_head).abs() <= 0.02, "head {} vs {}", frac(Region::Head), expect_head);
        prop_assert!((frac(Region::Torso) - expect_torso).abs() <= 0.02);
        prop_assert!((frac(Region::Neck) - (1.0 - expect_head - expect_torso)).abs() <= 0.02);
        prop_assert!(cage_membership(&samples, y_torso, y_head).is_err());
    }
}

#[test]
fn capsule_volume_oracle_is_consistent() {
    let (h, r) = (0.6f64, 0.4f64);
    let sphere = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
    let full = sphere + std::f64::consts::PI * r * r * 2.0 * h;
    assert!((capsule_volume_above(h, r, -h - r) - full).abs() < 1e-12);
    assert!((capsule_volume_above(h, r, 0.0) - full / 2.0).abs() < 1e-12);
    assert!(capsule_volume_above(h, r, h + r).abs() < 1e-12);
    assert!((capsule_volume_above(h, r, h) - sphere / 2.0).abs() < 1e-12);
}

#[test]
fn tet_mesh_adjacency_from_two_tets() {
    let v = vec![
        vec3(0.0, 0.0, 0.0),
        vec3(1.0, 0.0, 0.0),
        vec3(0.0, 1.0, 0.0),
        vec3(0.0, 0.0, 1.0),
        vec3(1.0, 1.0, 1.0),
    ];
    let mesh = TetMesh::from_tets(v, vec![[0, 1, 2, 3], [4, 2, 1, 3]]);
    assert_eq!(mesh.neighbor(0, 0), Some(1));
    assert_eq!(mesh.neighbor(1, 0), Some(0));
    assert_eq!(mesh.neighbor(0, 1), None);
}
