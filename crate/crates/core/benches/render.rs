use std::hint::black_box;

use avatar_core::fixture::write_fixture;
use avatar_core::pipeline::{animate_frame, load_avatar, rig_avatar};
use avatar_core::render::{render, RenderSettings};
use avatar_core::warp::{CageTransform, PoseParams};
use avatar_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn render_fixture(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path(), Execution::default()).unwrap();
    let asset = load_avatar(&paths.manifest).unwrap();
    let rig = rig_avatar(&asset).unwrap();
    let drive = asset.drivers.as_ref().unwrap().drive("mouth_open", 1.0).unwrap();
    let pose = PoseParams {
        head: CageTransform {
            t: [0.02, 0.0, 0.0],
            euler: [5.0, 15.0, 0.0],
            s: [1.0; 3],
        },
        ..PoseParams::default()
    };

    let mut group = c.benchmark_group("render_256");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let settings = RenderSettings::default().with_execution(exec);
        let name = format!("{exec:?}").to_lowercase();
        group.bench_function(BenchmarkId::new("static", &name), |b| {
            b.iter(|| black_box(render(&asset.sdf, &asset.color, None, &asset.front_camera, &settings).unwrap()))
        });
        group.bench_function(BenchmarkId::new("deformed", &name), |b| {
            b.iter(|| {
                black_box(animate_frame(&rig, &asset, Some(&drive), &pose, &asset.front_camera, &settings).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, render_fixture);
criterion_main!(benches);
