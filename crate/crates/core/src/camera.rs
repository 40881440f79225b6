//! Pinhole and orthographic cameras.
//!
//! Image coordinates are continuous pixels with the origin at the top-left
//! corner; pixel `(i, j)` covers `[i, i+1) × [j, j+1)` and its center is
//! `(i + 0.5, j + 0.5)`. The camera looks down its local −z axis with +y up.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{is_finite, is_rotation, Mat3, Vec3};
use crate::sdf::Ray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Projection {
    Perspective { fov_y_deg: f64 },
    Orthographic { half_height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct CameraPose {
    pub position: Vec3,
    /// Camera-to-world rotation; columns are the right, up and back axes.
    pub rotation: Mat3,
    pub projection: Projection,
    pub image_size: [u32; 2],
}

/// JSON form: either `target` (+ optional `up`) or an explicit row-major
/// camera-to-world `rotation`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    pub projection: Projection,
    pub image_size: [u32; 2],
}

impl TryFrom<CameraSpec> for CameraPose {
    type Error = Error;

    fn try_from(s: CameraSpec) -> Result<Self> {
        let position = Vec3::from(s.position);
        match (s.rotation, s.target) {
            (Some(rows), _) => {
                let rotation = Mat3::from_row_slice(&rows.concat());
                CameraPose::new(position, rotation, s.projection, s.image_size)
            }
            (None, Some(target)) => CameraPose::look_at(
                position,
                Vec3::from(target),
                Vec3::from(s.up.unwrap_or([0.0, 1.0, 0.0])),
                s.projection,
                s.image_size,
            ),
            (None, None) => Err(Error::invalid("camera needs either `target` or `rotation`")),
        }
    }
}

impl From<CameraPose> for CameraSpec {
    fn from(c: CameraPose) -> Self {
        let r = c.rotation;
        CameraSpec {
            position: c.position.into(),
            target: None,
            up: None,
            rotation: Some([
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ]),
            projection: c.projection,
            image_size: c.image_size,
        }
    }
}

impl CameraPose {
    pub fn new(position: Vec3, rotation: Mat3, projection: Projection, image_size: [u32; 2]) -> Result<Self> {
        if !is_finite(&position) {
            return Err(Error::invalid("camera position is not finite"));
        }
        if !is_rotation(&rotation, 1e-9) {
            return Err(Error::invalid("camera rotation is not orthonormal with det +1"));
        }
        if image_size[0] == 0 || image_size[1] == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        match projection {
            Projection::Perspective { fov_y_deg } if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) => {
                return Err(Error::invalid("perspective fov must lie in (0, 180) degrees"))
            }
            Projection::Orthographic { half_height } if !(half_height > 0.0) => {
                return Err(Error::invalid("orthographic half height must be positive"))
            }
            _ => {}
        }
        Ok(Self {
            position,
            rotation,
            projection,
            image_size,
        })
    }

    pub fn look_at(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        projection: Projection,
        image_size: [u32; 2],
    ) -> Result<Self> {
        let back = position - target;
        if back.norm() == 0.0 {
            return Err(Error::invalid("camera target coincides with its position"));
        }
        let back = back.normalize();
        let right = up.cross(&back);
        if right.norm() < 1e-12 {
            return Err(Error::invalid("camera up vector is parallel to the view direction"));
        }
        let right = right.normalize();
        let true_up = back.cross(&right);
        let rotation = Mat3::from_columns(&[right, true_up, back]);
        Self::new(position, rotation, projection, image_size)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1).into()
    }

    /// Unit axis pointing from the scene toward the camera.
    pub fn back(&self) -> Vec3 {
        self.rotation.column(2).into()
    }

    pub fn view_direction(&self) -> Vec3 {
        -self.back()
    }

    pub fn width(&self) -> u32 {
        self.image_size[0]
    }

    pub fn height(&self) -> u32 {
        self.image_size[1]
    }

    /// Same camera at another output resolution (vertical extent preserved).
    pub fn with_image_size(&self, image_size: [u32; 2]) -> Self {
        Self {
            image_size,
            ..self.clone()
        }
    }

    fn ndc(&self, u: f64, v: f64) -> (f64, f64) {
        let half_h = self.height() as f64 * 0.5;
        let half_w = self.width() as f64 * 0.5;
        ((u - half_w) / half_h, (half_h - v) / half_h)
    }

    /// Ray through continuous image coordinates `(u, v)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        let (x, y) = self.ndc(u, v);
        match self.projection {
            Projection::Perspective { fov_y_deg } => {
                let s = (0.5 * fov_y_deg.to_radians()).tan();
                let d = self.rotation * Vec3::new(x * s, y * s, -1.0);
                Ray {
                    origin: self.position,
                    direction: d.normalize(),
                }
            }
            Projection::Orthographic { half_height } => Ray {
                origin: self.position + self.rotation * Vec3::new(x * half_height, y * half_height, 0.0),
                direction: self.view_direction(),
            },
        }
    }

    pub fn pixel_ray(&self, i: u32, j: u32) -> Ray {
        self.ray(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Image coordinates of a world point; `None` behind a perspective camera.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 2]> {
        let c = self.rotation.transpose() * (p - self.position);
        let (x, y) = match self.projection {
            Projection::Perspective { fov_y_deg } => {
                let depth = -c.z;
                if depth <= 0.0 {
                    return None;
                }
                let s = (0.5 * fov_y_deg.to_radians()).tan();
                (c.x / (depth * s), c.y / (depth * s))
            }
            Projection::Orthographic { half_height } => (c.x / half_height, c.y / half_height),
        };
        let half_h = self.height() as f64 * 0.5;
        let half_w = self.width() as f64 * 0.5;
        Some([half_w + x * half_h, half_h - y * half_h])
    }

    /// The camera rotated by `angle` radians about the vertical axis through `center`.
    pub fn rotated_about_vertical(&self, center: &Vec3, angle: f64) -> Self {
        if angle == 0.0 {
            return self.clone();
        }
        let r = Rotation3::from_axis_angle(&Vec3::y_axis(), angle);
        Self {
            position: center + r * (self.position - center),
            rotation: r.matrix() * self.rotation,
            ..self.clone()
        }
    }

    /// Camera on a sphere about `center`, looking at it, with this camera's
    /// projection and image size. Azimuth 0 / elevation 0 sits on +z.
    pub fn orbit(&self, center: &Vec3, azimuth_deg: f64, elevation_deg: f64, distance: f64) -> Result<Self> {
        if !(distance > 0.0) {
            return Err(Error::invalid("orbit distance must be positive"));
        }
        if elevation_deg.abs() >= 90.0 {
            return Err(Error::invalid("orbit elevation must lie in (-90, 90) degrees"));
        }
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let dir = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos());
        Self::look_at(
            center + dir * distance,
            *center,
            Vec3::y(),
            self.projection,
            self.image_size,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use approx::assert_relative_eq;

    fn persp() -> CameraPose {
        CameraPose::look_at(
            vec3(0.3, 0.2, 4.0),
            vec3(0.0, 0.1, 0.0),
            Vec3::y(),
            Projection::Perspective { fov_y_deg: 30.0 },
            [320, 240],
        )
        .unwrap()
    }

    #[test]
    fn project_inverts_ray() {
        for cam in [
            persp(),
            CameraPose::look_at(
                vec3(0.0, 0.0, 3.0),
                Vec3::zeros(),
                Vec3::y(),
                Projection::Orthographic { half_height: 1.5 },
                [64, 64],
            )
            .unwrap(),
        ] {
            for (u, v) in [(10.0, 20.0), (160.3, 120.7), (0.0, 0.0)] {
                let ray = cam.ray(u, v);
                let p = ray.at(2.5);
                let [pu, pv] = cam.project(&p).unwrap();
                assert_relative_eq!(pu, u, epsilon = 1e-9);
                assert_relative_eq!(pv, v, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn image_center_looks_at_target() {
        let cam = persp();
        let r = cam.ray(160.0, 120.0);
        let to_target = (vec3(0.0, 0.1, 0.0) - cam.position).normalize();
        assert_relative_eq!(r.direction, to_target, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let cam = persp();
        let s = serde_json::to_string(&cam).unwrap();
        let back: CameraPose = serde_json::from_str(&s).unwrap();
        assert_relative_eq!(back.rotation, cam.rotation, epsilon = 1e-15);
        let bad = r#"{"position":[0,0,1],"rotation":[[2,0,0],[0,1,0],[0,0,1]],"projection":{"type":"orthographic","half_height":1},"image_size":[4,4]}"#;
        assert!(serde_json::from_str::<CameraPose>(bad).is_err());
    }

    #[test]
    fn vertical_rotation_by_zero_is_identity() {
        let cam = persp();
        assert_eq!(cam.rotated_about_vertical(&Vec3::zeros(), 0.0), cam);
        let quarter = cam.rotated_about_vertical(&Vec3::zeros(), std::f64::consts::FRAC_PI_2);
        assert!(is_rotation(&quarter.rotation, 1e-12));
        assert_relative_eq!(quarter.position, vec3(4.0, 0.2, -0.3), epsilon = 1e-12);
    }
}
