mod common;

use std::fs;
use std::path::Path;

use avatar_core::fixture::{IMAGE_SIZE, TRACK_FRAMES};
use avatar_core::render::Image;
use common::{avatar, cli_render, fixture, scratch_dir, variant_manifest};
use serde_json::{json, Value};

fn code(o: &std::process::Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn frames(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    names.sort();
    names.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn make_fixture_writes_manifest_and_track() {
    let dir = scratch_dir("made");
    let o = avatar(["make-fixture".as_ref(), dir.as_os_str()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("avatar.json") && out.contains("track.json"));
    for f in [
        "avatar.json",
        "track.json",
        "bust.sdf",
        "bust.rgb",
        "landmarks2d.json",
        "drivers.json",
    ] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert_eq!(
        fs::read(dir.join("bust.sdf")).unwrap(),
        fs::read(fixture().dir.join("bust.sdf")).unwrap()
    );
}

#[test]
fn render_front_orbit_and_resolution() {
    let dir = scratch_dir("render");
    let front = cli_render(&fixture().manifest, &dir.join("front.png"));
    let img = Image::read_png(&dir.join("front.png")).unwrap();
    assert_eq!([img.width, img.height], IMAGE_SIZE);

    let m = fixture().manifest.as_os_str();
    let small = dir.join("small.png");
    let o = avatar([
        "render".as_ref(),
        m,
        "--res".as_ref(),
        "64x48".as_ref(),
        "--out".as_ref(),
        small.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let img = Image::read_png(&small).unwrap();
    assert_eq!([img.width, img.height], [64, 48]);

    let side = dir.join("side.png");
    let o = avatar([
        "render".as_ref(),
        m,
        "--yaw".as_ref(),
        "-40".as_ref(),
        "--pitch".as_ref(),
        "10".as_ref(),
        "--out".as_ref(),
        side.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_ne!(fs::read(&side).unwrap(), front);

    // yaw 0 / pitch 0 orbits to the front camera's own position
    let zero = dir.join("zero.png");
    let o = avatar([
        "render".as_ref(),
        m,
        "--yaw".as_ref(),
        "0".as_ref(),
        "--out".as_ref(),
        zero.as_os_str(),
    ]);
    assert_eq!(code(&o), 0);
    let a = Image::read_png(&zero).unwrap();
    let b = Image::read_png(&dir.join("front.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn project_landmarks_to_json() {
    let out = scratch_dir("project").join("lms3d.json");
    let o = avatar([
        "project-landmarks".as_ref(),
        fixture().manifest.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let points = v["landmarks"]["points"].as_object().unwrap();
    assert_eq!(points.len(), 51);
    assert!(points.contains_key("17") && points.contains_key("67") && !points.contains_key("16"));
    assert_eq!(v["fallback"], json!([]));

    let o = avatar(["project-landmarks".as_ref(), fixture().manifest.as_os_str()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["landmarks"]["points"].as_object().unwrap().len(), 51);
}

#[test]
fn animate_is_deterministic() {
    let m = fixture().manifest.as_os_str();
    let t = fixture().track.as_os_str();
    let a = scratch_dir("animate_a");
    let b = scratch_dir("animate_b");
    for dir in [&a, &b] {
        let o = avatar([
            "animate".as_ref(),
            m,
            t,
            "--out-dir".as_ref(),
            dir.as_os_str(),
            "--res".as_ref(),
            "96x96".as_ref(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let fa = frames(&a);
    assert_eq!(fa.len(), TRACK_FRAMES);
    assert_eq!(fa, frames(&b));
    let diag: Value = serde_json::from_str(&fs::read_to_string(a.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["frames"].as_array().unwrap().len(), TRACK_FRAMES);

    let seq = scratch_dir("animate_seq");
    let o = avatar([
        "--sequential".as_ref(),
        "animate".as_ref(),
        m,
        t,
        "--out-dir".as_ref(),
        seq.as_os_str(),
        "--res".as_ref(),
        "96x96".as_ref(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fa, frames(&seq));
}

#[test]
fn ablate_alpha_writes_sheet() {
    let out = scratch_dir("ablate").join("sheet.png");
    let o = avatar([
        "ablate-alpha".as_ref(),
        fixture().manifest.as_os_str(),
        "--res".as_ref(),
        "48x48".as_ref(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sheet = Image::read_png(&out).unwrap();
    assert_eq!([sheet.width, sheet.height], [96, 96]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("alpha ")).count(), 3);
}

#[test]
fn validation_errors_exit_2() {
    let missing = scratch_dir("none").join("avatar.json");
    let o = avatar(["render".as_ref(), missing.as_os_str()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("avatar.json"));

    let bad = variant_manifest("cli_bad_alpha", |v| v["alpha"] = json!(-1.0));
    let o = avatar(["render".as_ref(), bad.as_os_str()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha"));

    let dir = scratch_dir("bad_track");
    let track = dir.join("track.json");
    fs::write(
        &track,
        json!({"frames": [{"drive": {"pose": "mouth_open", "w": 1.5}}]}).to_string(),
    )
    .unwrap();
    let out = dir.join("frames");
    let o = avatar([
        "animate".as_ref(),
        fixture().manifest.as_os_str(),
        track.as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!out.join("frame_00000.png").exists());

    let o = avatar([
        "render".as_ref(),
        fixture().manifest.as_os_str(),
        "--res".as_ref(),
        "wide".as_ref(),
    ]);
    assert_eq!(code(&o), 2);
    let o = avatar(["serve".as_ref(), missing.as_os_str(), "--port".as_ref(), "0".as_ref()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = avatar(["frobnicate"]);
    assert_eq!(code(&o), 2);

    let unset = variant_manifest("cli_unset", |v| v["y_torso"] = Value::Null);
    let track = dir.join("posed.json");
    fs::write(
        &track,
        json!({"frames": [{"pose": {"head": {"euler": [0, 15, 0]}}}]}).to_string(),
    )
    .unwrap();
    let o = avatar([
        "animate".as_ref(),
        unset.as_os_str(),
        track.as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("y_torso"));
}

#[test]
fn runtime_errors_exit_3() {
    // the output's parent is a regular file
    let blocker = scratch_dir("runtime").join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = blocker.join("img.png");
    let o = avatar([
        "render".as_ref(),
        fixture().manifest.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let dir = scratch_dir("runtime_frames");
    fs::create_dir_all(dir.join("frame_00000.png")).unwrap();
    let o = avatar([
        "animate".as_ref(),
        fixture().manifest.as_os_str(),
        fixture().track.as_os_str(),
        "--out-dir".as_ref(),
        dir.as_os_str(),
        "--res".as_ref(),
        "32x32".as_ref(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("frame 0"));
}
