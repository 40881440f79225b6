//! Avatar manifests and the loaded asset bundle.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::driver::DriverLibrary;
use crate::camera::{CameraPose, CameraSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geom::{Aabb, Vec3};
use crate::landmarks::LandmarkSet2D;
use crate::mesh::{extract_isosurface, io::load_mesh, TriMesh};
use crate::sdf::{
    mesh_to_grid, ray_surface_intersection, ColorField, ColorGrid, DistanceField, GridField, Lattice, MeshField,
    ScalarField, Shape,
};
use crate::warp::cage::DEFAULT_SAMPLES_PER_LOOP;

pub const DEFAULT_ALPHA: f64 = 0.45;

/// Where the `±α` copies are attached.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationSite {
    /// Neutral control points from the avatar's neutral landmarks.
    #[default]
    SourceNeutral,
    /// Neutral control points from the driver's neutral landmarks, taken
    /// as-is in avatar space.
    DriverNeutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SdfSource {
    Grid(PathBuf),
    Mesh {
        mesh: PathBuf,
        /// Voxelize the mesh at this resolution for rendering.
        #[serde(default)]
        grid_resolution: Option<usize>,
    },
    Analytic {
        analytic: Shape,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColorSource {
    /// A color grid file, or the literal `"vertex"`.
    Named(String),
    Constant {
        constant: [f64; 3],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub sdf: SdfSource,
    pub color: ColorSource,
    pub front_camera: CameraSpec,
    pub landmarks2d: PathBuf,
    pub y_head: f64,
    #[serde(default)]
    pub y_torso: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivers: Option<PathBuf>,
    /// Explicit canonical mesh; otherwise extracted from the SDF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    /// Lattice resolution for canonical-mesh extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_loop: Option<usize>,
    #[serde(default)]
    pub augmentation: AugmentationSite,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

const REQUIRED: [&str; 5] = ["sdf", "color", "front_camera", "landmarks2d", "y_head"];

fn field_error(field: &str, reason: impl ToString) -> Error {
    Error::Manifest {
        field: field.into(),
        reason: reason.to_string(),
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| field_error("<root>", e))?;
        let obj = value
            .as_object()
            .ok_or_else(|| field_error("<root>", "manifest must be a JSON object"))?;
        if let Some(missing) = REQUIRED.iter().find(|k| !obj.contains_key(**k)) {
            return Err(field_error(missing, "missing"));
        }
        let manifest: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let field = e
                .path()
                .iter()
                .next()
                .and_then(|seg| match seg {
                    serde_path_to_error::Segment::Map { key } => Some(key.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| "<root>".into());
            field_error(&field, e.into_inner())
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(field_error("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !self.y_head.is_finite() {
            return Err(field_error("y_head", "must be finite"));
        }
        if let Some(t) = self.y_torso {
            if !(t < self.y_head) {
                return Err(field_error(
                    "y_torso",
                    format!("{t} must be below y_head {}", self.y_head),
                ));
            }
        }
        if let Some(n) = self.mesh_resolution {
            if n < 16 {
                return Err(field_error("mesh_resolution", "must be at least 16"));
            }
        }
        if let Some(n) = self.samples_per_loop {
            if n < crate::warp::cage::MIN_SAMPLES_PER_LOOP {
                return Err(field_error("samples_per_loop", "must be at least 8"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Everything needed to rig and render one avatar.
#[derive(Debug, Clone)]
pub struct AvatarAsset {
    pub manifest: Manifest,
    pub root: PathBuf,
    pub sdf: Arc<ScalarField>,
    pub color: Arc<ColorField>,
    /// Canonical surface mesh used for the cages.
    pub mesh: Arc<TriMesh>,
    pub front_camera: CameraPose,
    pub landmarks_2d: LandmarkSet2D,
    pub y_head: f64,
    pub y_torso: Option<f64>,
    pub alpha: f64,
    pub drivers: Option<DriverLibrary>,
    pub warnings: Vec<String>,
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn in_field<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Manifest { .. } => e,
        other => field_error(field, other),
    })
}

impl AvatarAsset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_manifest(manifest, &root)
    }

    pub fn from_manifest(manifest: Manifest, root: &Path) -> Result<Self> {
        manifest.validate()?;
        let exec = Execution::default();
        let mut warnings = Vec::new();
        let mut source_mesh: Option<MeshField> = None;
        let sdf = in_field(
            "sdf",
            match &manifest.sdf {
                SdfSource::Grid(p) => GridField::read(&resolve(root, p)).map(ScalarField::Grid),
                SdfSource::Mesh { mesh, grid_resolution } => (|| {
                    let field = MeshField::new(load_mesh(&resolve(root, mesh))?)?;
                    source_mesh = Some(field.clone());
                    match grid_resolution {
                        Some(n) => {
                            let pad = 0.05 * field.bounds().diagonal();
                            let (grid, report) = mesh_to_grid(&field, *n, pad, exec)?;
                            warnings.extend(report.warnings);
                            Ok(ScalarField::Grid(grid))
                        }
                        None => Ok(ScalarField::Mesh(field)),
                    }
                })(),
                SdfSource::Analytic { analytic } => Ok(ScalarField::Analytic(analytic.clone())),
            },
        )?;
        check_sign_convention(&sdf)?;

        let mesh = match (&manifest.mesh, manifest.mesh_resolution, &source_mesh) {
            (Some(p), _, _) => in_field("mesh", load_mesh(&resolve(root, p)))?,
            (None, None, Some(m)) => m.mesh().clone(),
            (None, res, _) => in_field("mesh_resolution", extract_canonical_mesh(&sdf, res, exec))?,
        };

        let color = in_field(
            "color",
            match &manifest.color {
                ColorSource::Constant { constant } => Ok(ColorField::Constant(*constant)),
                ColorSource::Named(s) if s == "vertex" => {
                    let field = match &source_mesh {
                        Some(m) => Ok(m.clone()),
                        None => MeshField::new(mesh.clone()),
                    }?;
                    if field.mesh().colors.is_none() {
                        Err(Error::invalid("\"vertex\" color requires a mesh with vertex colors"))
                    } else {
                        Ok(ColorField::Vertex(field))
                    }
                }
                ColorSource::Named(p) => ColorGrid::read(&resolve(root, Path::new(p))).map(ColorField::Grid),
            },
        )?;

        let front_camera: CameraPose = in_field("front_camera", manifest.front_camera.clone().try_into())?;
        let landmarks_2d = in_field(
            "landmarks2d",
            LandmarkSet2D::load(&resolve(root, &manifest.landmarks2d)),
        )?;
        if landmarks_2d.image_size != front_camera.image_size {
            return Err(field_error(
                "landmarks2d",
                format!(
                    "image size {:?} differs from the front camera's {:?}",
                    landmarks_2d.image_size, front_camera.image_size
                ),
            ));
        }
        let drivers = match &manifest.drivers {
            Some(p) => Some(in_field("drivers", DriverLibrary::load(&resolve(root, p)))?),
            None => None,
        };
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self {
            y_head: manifest.y_head,
            y_torso: manifest.y_torso,
            alpha: manifest.alpha,
            root: root.to_path_buf(),
            manifest,
            sdf: Arc::new(sdf),
            color: Arc::new(color),
            mesh: Arc::new(mesh),
            front_camera,
            landmarks_2d,
            drivers,
            warnings,
        })
    }

    pub fn bounds(&self) -> Aabb {
        self.sdf.bounds()
    }

    /// Unit axis from the scene toward the front camera.
    pub fn front_axis(&self) -> Vec3 {
        self.front_camera.back()
    }

    pub fn samples_per_loop(&self) -> usize {
        self.manifest.samples_per_loop.unwrap_or(DEFAULT_SAMPLES_PER_LOOP)
    }

    pub fn set_y_torso(&mut self, y_torso: Option<f64>) -> Result<()> {
        if let Some(t) = y_torso {
            if !(t < self.y_head) {
                return Err(Error::invalid(format!(
                    "y_torso {t} must be below y_head {}",
                    self.y_head
                )));
            }
        }
        self.y_torso = y_torso;
        Ok(())
    }
}

/// Surface point under a click on the front image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorsoPick {
    pub y_torso: f64,
    pub point: [f64; 3],
    /// The ray missed and the closest approach to the surface was used.
    pub fallback: bool,
    pub residual: f64,
}

/// Height of the surface under front-image pixel `(u, v)`, for use as the
/// torso line. A ray that passes the silhouette falls back to its closest
/// approach when that is within the fallback tolerance.
pub fn pick_torso_line(asset: &AvatarAsset, pixel: [f64; 2]) -> Result<TorsoPick> {
    if !pixel.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("click pixel is not finite"));
    }
    let bounds = asset.bounds();
    let camera = &asset.front_camera;
    let eps = super::rig::PROJECTION_EPS_FRACTION * bounds.diagonal();
    let t_max = (camera.position - bounds.center()).norm() + bounds.diagonal();
    let hit = ray_surface_intersection(asset.sdf.as_ref(), &camera.ray(pixel[0], pixel[1]), t_max, eps)
        .ok_or(Error::ClickMissed { pixel })?;
    if !(hit.point.y < asset.y_head) {
        return Err(Error::invalid(format!(
            "y_torso must be below y_head ({:.4} >= {:.4})",
            hit.point.y, asset.y_head
        )));
    }
    Ok(TorsoPick {
        y_torso: hit.point.y,
        point: hit.point.into(),
        fallback: hit.fallback,
        residual: hit.residual,
    })
}

pub fn load_avatar(manifest_path: &Path) -> Result<AvatarAsset> {
    AvatarAsset::load(manifest_path)
}

/// The SDF must be positive (outside) at every corner of its box.
fn check_sign_convention(sdf: &ScalarField) -> Result<()> {
    let b = sdf.bounds();
    if b.corners().iter().any(|c| !(sdf.distance(c) > 0.0)) {
        return Err(field_error(
            "sdf",
            "field is not positive at its bounding-box corners (expected negative inside)",
        ));
    }
    Ok(())
}

/// Isosurface of the SDF on an `n³` lattice (the grid's own lattice when
/// `resolution` is unset and the field is a grid).
pub fn extract_canonical_mesh(sdf: &ScalarField, resolution: Option<usize>, exec: Execution) -> Result<TriMesh> {
    let mesh = match (sdf, resolution) {
        (ScalarField::Grid(g), None) => extract_isosurface(g.lattice.dims, &g.lattice.bounds, &g.values, 0.0),
        _ => {
            let n = resolution.unwrap_or(128);
            let bounds = sdf.bounds().inflated(1.05);
            let lattice = Lattice::new([n; 3], bounds)?;
            let values = exec.map_range(lattice.len(), |i| sdf.distance(&lattice.point_of(i)) as f32);
            extract_isosurface([n; 3], &bounds, &values, 0.0)
        }
    };
    if mesh.triangles.is_empty() {
        return Err(Error::invalid("the SDF has no zero level set inside its box"));
    }
    Ok(mesh)
}
