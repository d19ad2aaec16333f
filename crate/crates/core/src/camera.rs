use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::Ray;

/// Pinhole camera. Camera axes follow the computer-vision convention:
/// x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera x, y, z axes in world coordinates (world-from-camera rotation columns).
    pub axes: [Vec3; 3],
    pub position: Vec3,
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: usize, height: usize) -> Result<Camera> {
        let z = (target - eye).try_normalized().ok_or(Error::Degenerate("camera eye equals target"))?;
        let x = z.cross(up).try_normalized().ok_or(Error::Degenerate("camera up parallel to view axis"))?;
        let y = z.cross(x);
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let cam = Camera {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            axes: [x, y, z],
            position: eye,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera needs fx, fy > 0 and a nonzero resolution".into()));
        }
        Ok(())
    }

    pub fn to_world(&self, c: Vec3) -> Vec3 {
        self.axes[0] * c.x + self.axes[1] * c.y + self.axes[2] * c.z
    }

    pub fn to_camera(&self, w: Vec3) -> Vec3 {
        Vec3::new(w.dot(self.axes[0]), w.dot(self.axes[1]), w.dot(self.axes[2]))
    }

    /// Primary ray through the centre of pixel `(px, py)`.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let d = Vec3::new((px as f64 + 0.5 - self.cx) / self.fx, (py as f64 + 0.5 - self.cy) / self.fy, 1.0);
        Ray {
            origin: self.position,
            dir: self.to_world(d).normalized(),
        }
    }

    /// Continuous pixel coordinates of a world point in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(p - self.position);
        (c.z > 0.0).then(|| (self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }
}
