use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid object-to-camera transform `x_cam = R·x_obj + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseFile", into = "PoseFile")]
pub struct Pose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

/// On-disk pose: `{"rotation_wxyz": [w, x, y, z], "translation_m": [x, y, z]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub rotation_wxyz: [f64; 4],
    pub translation_m: [f64; 3],
}

impl TryFrom<PoseFile> for Pose {
    type Error = Error;

    fn try_from(p: PoseFile) -> Result<Self> {
        let rot = quaternion_wxyz(p.rotation_wxyz)?;
        Pose::new(rot.to_rotation_matrix(), Vector3::from(p.translation_m))
    }
}

impl From<Pose> for PoseFile {
    fn from(p: Pose) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&p.rotation);
        PoseFile { rotation_wxyz: [q.w, q.i, q.j, q.k], translation_m: p.translation.into() }
    }
}

/// Parse a `[w, x, y, z]` quaternion that must already be unit-norm.
pub fn quaternion_wxyz(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let raw = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    if (raw.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "rotation quaternion must be unit-norm, |q| = {}",
            raw.norm()
        )));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

pub(crate) fn check_rotation(m: &Matrix3<f64>) -> Result<()> {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    if !(err < 1e-9) {
        return Err(Error::invalid(format!("rotation is not orthonormal (max deviation {err:e})")));
    }
    if m.determinant() <= 0.0 {
        return Err(Error::invalid("rotation has negative determinant"));
    }
    Ok(())
}

impl Pose {
    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(rotation.matrix())?;
        if !(translation.z > 0.0) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("object must lie in front of the camera (t_z > 0)"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Left-multiply by a camera-frame rotation about the axis `axis`
    /// through the camera origin.
    pub fn rotated_about_camera(&self, axis: &Unit<Vector3<f64>>, angle: f64) -> Result<Self> {
        let r = Rotation3::from_axis_angle(axis, angle);
        Pose::new(r * self.rotation, r * self.translation)
    }

    /// Apply an object-frame rotation increment and a camera-frame
    /// translation offset: `R' = R·exp(ω)`, `t' = t + δ`.
    pub fn perturbed(&self, omega: &Vector3<f64>, delta: &Vector3<f64>) -> Result<Self> {
        let inc = Rotation3::new(*omega);
        let r = renormalize(&(self.rotation * inc));
        Pose::new(r, self.translation + delta)
    }

    /// Geodesic angle between the two rotations, radians.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Project a nearly orthonormal matrix back onto SO(3).
pub(crate) fn renormalize(r: &Rotation3<f64>) -> Rotation3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(r);
    q.to_rotation_matrix()
}
