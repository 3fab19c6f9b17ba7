//! Pinhole camera and per-pixel viewing geometry.
//!
//! Camera frame: `x` right, `y` down, `z` forward into the scene. Pixel
//! `(x, y)` samples the ray through image coordinates `(x, y)`, so the
//! pixel at the principal point looks straight down the optical axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraFile", into = "CameraFile")]
pub struct Camera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<CameraFile> for Camera {
    type Error = Error;

    fn try_from(c: CameraFile) -> Result<Self> {
        Camera::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
    }
}

impl From<Camera> for CameraFile {
    fn from(c: Camera) -> Self {
        CameraFile { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, width: c.width, height: c.height }
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera resolution must be non-zero"));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    /// Image coordinates of a camera-frame point (`z > 0`).
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Unit ray direction from the camera center through image point `(u, v)`.
    #[inline]
    pub fn viewing_vector(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    pub fn viewing_vectors(&self) -> Grid<Vector3<f64>> {
        Grid::from_fn(self.width, self.height, |x, y| self.viewing_vector(x as f64, y as f64))
    }

    /// Per-pixel local viewing frames.
    pub fn viewing_frames(&self) -> Grid<ViewFrame> {
        self.viewing_vectors().map(|v| ViewFrame::new(*v))
    }
}

/// Local frame attached to one viewing ray.
///
/// `toward_viewer` is `−v`. `e_x` and `e_y` are the camera `x`/`y` axes
/// carried along by the minimal rotation that maps the optical axis onto
/// `v`, so at the principal point they coincide with the camera axes.
/// Zenith is measured from `toward_viewer`, azimuth in the `(e_x, e_y)`
/// plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrame {
    pub e_x: Vector3<f64>,
    pub e_y: Vector3<f64>,
    pub toward_viewer: Vector3<f64>,
}

impl ViewFrame {
    /// `v` must be a unit vector with `v.z > 0`.
    pub fn new(v: Vector3<f64>) -> Self {
        let k = 1.0 / (1.0 + v.z);
        let e_x = Vector3::new(1.0 - v.x * v.x * k, -v.x * v.y * k, -v.x);
        let e_y = Vector3::new(-v.x * v.y * k, 1.0 - v.y * v.y * k, -v.y);
        Self { e_x, e_y, toward_viewer: -v }
    }

    /// Map a local `(x, y, z)` direction (z toward the viewer) to the
    /// camera frame.
    #[inline]
    pub fn to_camera(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.e_x * local.x + self.e_y * local.y + self.toward_viewer * local.z
    }

    #[inline]
    pub fn to_local(&self, n: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(n.dot(&self.e_x), n.dot(&self.e_y), n.dot(&self.toward_viewer))
    }

    /// Azimuth of `n` in this frame, in `(−π, π]`.
    #[inline]
    pub fn azimuth(&self, n: &Vector3<f64>) -> f64 {
        n.dot(&self.e_y).atan2(n.dot(&self.e_x))
    }
}
