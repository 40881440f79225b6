//! Asset loading, rigging and animation playback.

mod animate;
mod asset;
mod driver;
mod rig;
mod track;

pub use animate::{
    ablate_alpha, animate_frame, animate_track, build_deformation, driver_settings, frame_path, projected_landmarks,
    render_track_frame, AlphaAblation, FrameDeformation, FrameDiagnostics, FrameOutput, Timings, TrackReport,
    ABLATION_ALPHAS, DIAGNOSTICS_FILE,
};
pub use asset::{
    extract_canonical_mesh, load_avatar, pick_torso_line, AugmentationSite, AvatarAsset, ColorSource, Manifest,
    SdfSource, TorsoPick, DEFAULT_ALPHA,
};
pub use driver::{parse_landmark_map, DriverLibrary};
pub use rig::{rig_avatar, Rig, RigDiagnostics, RigOptions, PROJECTION_EPS_FRACTION};
pub use track::{orbit_camera, AnimationTrack, CameraChoice, DriveSpec, TrackFrame};
