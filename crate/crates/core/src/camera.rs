//! Orbit camera about the subject origin.
//!
//! Camera space follows the x-right, y-down, z-forward convention; depth is
//! the camera-space `z`. Azimuth 0 and elevation 0 place the camera on the
//! world `+z` axis looking at the origin with world `+y` up. Azimuth is kept
//! in `[0, 360)` degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov_y: f64,
    pub height: usize,
    pub width: usize,
    pub near: f64,
    pub far: f64,
}

impl CameraPose {
    pub fn new(azimuth: f64, elevation: f64, distance: f64, height: usize, width: usize) -> Self {
        Self {
            azimuth: wrap_degrees(azimuth),
            elevation,
            distance,
            fov_y: 40.0,
            height,
            width,
            near: 0.1,
            far: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.azimuth,
            self.elevation,
            self.distance,
            self.fov_y,
            self.near,
            self.far,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("camera has non-finite fields"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::validation(format!(
                "camera clip planes must satisfy 0 < near < far (near={}, far={})",
                self.near, self.far
            )));
        }
        if self.distance <= 0.0 {
            return Err(Error::validation("camera distance must be positive"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::validation("camera resolution must be positive"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(Error::validation("camera fov_y must be in (0, 180)"));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        let az = self.azimuth.to_radians();
        let el = self.elevation.to_radians();
        [
            self.distance * el.cos() * az.sin(),
            self.distance * el.sin(),
            self.distance * el.cos() * az.cos(),
        ]
    }

    /// World-to-camera rotation; rows are the camera right, down and forward axes.
    pub fn rotation(&self) -> Mat3 {
        let c = self.position();
        let forward = math::normalize(math::scale(c, -1.0));
        let right = math::normalize(math::cross(forward, [0.0, 1.0, 0.0]));
        let down = math::cross(forward, right);
        [right, down, forward]
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        math::mat3_vec(&self.rotation(), math::sub(p, self.position()))
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Pixel coordinates `(u, v)` and depth of a camera-space point.
    pub fn project_camera_point(&self, p: Vec3) -> (f64, f64, f64) {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        (f * p[0] / p[2] + cx, f * p[1] / p[2] + cy, p[2])
    }

    pub fn with_resolution(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }
}

/// Maps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}
