//! Driver face landmarks: one neutral set plus named expressive poses.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::landmarks::{partition_ibug68, LandmarkSet3D, Provenance};
use crate::motion::{ExpressionDrive, FrameSettings};

type RawSet = BTreeMap<String, [f64; 3]>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLibrary {
    neutral: RawSet,
    #[serde(default)]
    poses: BTreeMap<String, RawSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    front_axis: Option<[f64; 3]>,
}

/// Parses `{"17": [x, y, z], ...}` into a driver landmark set.
pub fn parse_landmark_map(raw: &BTreeMap<String, [f64; 3]>) -> Result<LandmarkSet3D> {
    let mut points = BTreeMap::new();
    for (k, v) in raw {
        let i: usize = k
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("landmark key {k:?} is not an index")))?;
        points.insert(i, Vec3::from(*v));
    }
    LandmarkSet3D::new(points, Provenance::Driver)
}

fn to_raw(set: &LandmarkSet3D) -> RawSet {
    set.points
        .iter()
        .map(|(i, p)| (i.to_string(), [p.x, p.y, p.z]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverLibrary {
    pub neutral: LandmarkSet3D,
    pub poses: BTreeMap<String, LandmarkSet3D>,
    /// The driver face's forward direction (default +z).
    pub front_axis: Vec3,
}

impl DriverLibrary {
    pub fn new(neutral: LandmarkSet3D, poses: BTreeMap<String, LandmarkSet3D>, front_axis: Vec3) -> Result<Self> {
        let partition = partition_ibug68();
        neutral.require_expression_indices(&partition)?;
        for (name, pose) in &poses {
            if !pose.points.keys().eq(neutral.points.keys()) {
                return Err(Error::invalid(format!(
                    "driver pose {name:?} covers different landmarks than the neutral set"
                )));
            }
        }
        let n = front_axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("driver front axis must be non-zero"));
        }
        Ok(Self {
            neutral,
            poses,
            front_axis: front_axis / n,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawLibrary = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        let neutral = parse_landmark_map(&raw.neutral)?;
        let poses = raw
            .poses
            .iter()
            .map(|(k, v)| Ok((k.clone(), parse_landmark_map(v)?)))
            .collect::<Result<_>>()?;
        Self::new(neutral, poses, raw.front_axis.map_or(Vec3::z(), Vec3::from))
    }

    pub fn to_json(&self) -> String {
        let raw = RawLibrary {
            neutral: to_raw(&self.neutral),
            poses: self.poses.iter().map(|(k, v)| (k.clone(), to_raw(v))).collect(),
            front_axis: Some(self.front_axis.into()),
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn pose_names(&self) -> impl Iterator<Item = &str> {
        self.poses.keys().map(String::as_str)
    }

    pub fn pose(&self, name: &str) -> Result<&LandmarkSet3D> {
        self.poses
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown driver pose {name:?}")))
    }

    /// Drive blending neutral toward pose `name` by `w ∈ [0, 1]`.
    pub fn drive(&self, name: &str, w: f64) -> Result<ExpressionDrive> {
        ExpressionDrive::blended(&self.neutral, self.pose(name)?, w)
    }

    /// Drive toward arbitrary expressive landmarks.
    pub fn drive_to(&self, expressive: LandmarkSet3D) -> Result<ExpressionDrive> {
        ExpressionDrive::new(self.neutral.clone(), expressive)
    }

    /// Frame settings with the floor scaled to the neutral landmark box.
    pub fn frame_settings(&self) -> FrameSettings {
        FrameSettings::for_bounds(self.front_axis, &Aabb::from_points(self.neutral.points.values()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neutral_json() -> String {
        let pts: Vec<String> = (17..68)
            .map(|i| {
                let a = i as f64 * 0.37;
                format!("\"{i}\": [{}, {}, {}]", a.cos(), a.sin(), 0.1 * (i % 5) as f64)
            })
            .collect();
        format!("{{{}}}", pts.join(","))
    }

    #[test]
    fn parse_and_drive() {
        let n = neutral_json();
        let text = format!(r#"{{"neutral": {n}, "poses": {{"same": {n}}}}}"#);
        let lib = DriverLibrary::from_json(&text).unwrap();
        assert_eq!(lib.neutral.len(), 51);
        assert_eq!(lib.pose_names().collect::<Vec<_>>(), ["same"]);
        let d = lib.drive("same", 0.5).unwrap();
        assert_eq!(d.displacement(30), Some(Vec3::zeros()));
        assert!(lib.drive("missing", 0.5).is_err());
        assert!(lib.drive("same", 1.5).is_err());
        let again = DriverLibrary::from_json(&lib.to_json()).unwrap();
        assert_eq!(again, lib);
    }

    #[test]
    fn incomplete_neutral_is_rejected() {
        assert!(DriverLibrary::from_json(r#"{"neutral": {"17": [0, 0, 0]}}"#).is_err());
    }
}
