#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use avatar_core::fixture::{write_fixture, FixturePaths};
use avatar_core::Execution;

pub fn fixture() -> &'static FixturePaths {
    static PATHS: OnceLock<FixturePaths> = OnceLock::new();
    PATHS.get_or_init(|| write_fixture(&scratch_dir("bust"), Execution::default()).expect("fixture writes"))
}

pub fn scratch_dir(name: &str) -> PathBuf {
    let exe = std::env::current_exe().expect("test executable path");
    let stem = exe.file_stem().unwrap().to_string_lossy().into_owned();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(stem).join(name);
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

/// The fixture manifest with `edit` applied, written next to the original.
pub fn variant_manifest(name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(&fixture().manifest).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = fixture().dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

pub fn avatar<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_avatar"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("avatar runs")
}

pub fn cli_render(manifest: &Path, out: &Path) -> Vec<u8> {
    let o = avatar([
        "render".as_ref(),
        manifest.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out).unwrap()
}
