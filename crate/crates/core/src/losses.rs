//! Pose and geometry losses, their pseudo-label composition, and the
//! ADD / ADD-S pose metrics.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Grid};
use crate::mesh::Mesh;
use crate::pose::Pose;

/// Default sharpness of the λ₁ alignment schedule.
pub const LAMBDA1_SHARPNESS: f64 = 5.0;

/// Rotation loss: mean L1 distance between model points rotated by the
/// ground truth and by the prediction, minimized over the mesh symmetries.
pub fn loss_rotation(r_gt: &Rotation3<f64>, r_pred: &Rotation3<f64>, mesh: &Mesh) -> f64 {
    let pts = mesh.model_points();
    let pred: Vec<Vector3<f64>> = pts.iter().map(|x| r_pred * x).collect();
    mesh.symmetries()
        .iter()
        .map(|s| {
            let r = r_gt * s;
            let d: Vec<f64> = pts.iter().zip(&pred).map(|(x, p)| (r * x - p).lp_norm(1)).collect();
            pairwise_sum(&d) / d.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Object center parametrization relative to a detection crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterOffsets {
    /// Horizontal offset of the projected center from the crop center, in
    /// units of the crop size.
    pub dx: f64,
    pub dy: f64,
    /// Depth of the object center, meters.
    pub dz: f64,
}

/// Square detection crop: center in pixels and side length in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crop {
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
}

impl Crop {
    fn check(&self) -> Result<()> {
        if !(self.size > 0.0 && self.size.is_finite()) {
            return Err(Error::InvalidCrop);
        }
        Ok(())
    }
}

pub fn pose_to_offsets(pose: &Pose, camera: &Camera, crop: &Crop) -> Result<CenterOffsets> {
    crop.check()?;
    let (u, v) = camera.project(pose.translation());
    Ok(CenterOffsets {
        dx: (u - crop.cx) / crop.size,
        dy: (v - crop.cy) / crop.size,
        dz: pose.translation().z,
    })
}

pub fn offsets_to_pose(
    offsets: &CenterOffsets,
    rotation: Rotation3<f64>,
    camera: &Camera,
    crop: &Crop,
) -> Result<Pose> {
    crop.check()?;
    if !(offsets.dz > 0.0) {
        return Err(Error::invalid("center depth must be positive"));
    }
    let u = crop.cx + offsets.dx * crop.size;
    let v = crop.cy + offsets.dy * crop.size;
    let z = offsets.dz;
    let t =
        Vector3::new((u - camera.cx()) * z / camera.fx(), (v - camera.cy()) * z / camera.fy(), z);
    Pose::new(rotation, t)
}

pub fn loss_center(gt: &CenterOffsets, pred: &CenterOffsets) -> f64 {
    (gt.dx - pred.dx).abs() + (gt.dy - pred.dy).abs()
}

pub fn loss_z(dz_gt: f64, dz_pred: f64) -> f64 {
    (dz_gt - dz_pred).abs()
}

/// A mask-normalized loss. `area == 0` signals an empty mask, in which
/// case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    pub area: usize,
}

impl MaskedLoss {
    pub fn is_empty_mask(&self) -> bool {
        self.area == 0
    }

    fn from_terms(terms: &[f64]) -> Self {
        if terms.is_empty() {
            MaskedLoss { value: 0.0, area: 0 }
        } else {
            MaskedLoss { value: pairwise_sum(terms) / terms.len() as f64, area: terms.len() }
        }
    }
}

/// Mean absolute difference of two real-valued masks over all pixels.
pub fn loss_mask(m_gt: &Grid<f64>, m_pred: &Grid<f64>) -> f64 {
    assert!(m_gt.same_shape(m_pred), "mask shapes differ");
    let d: Vec<f64> = m_gt.iter().zip(m_pred.iter()).map(|(a, b)| (a - b).abs()).collect();
    pairwise_sum(&d) / d.len().max(1) as f64
}

/// Correspondence loss: per-pixel L1 of the NOCS difference, summed over
/// channels, averaged over the mask.
pub fn loss_xyz(
    mask: &Grid<bool>,
    xyz_gt: &Grid<Vector3<f64>>,
    xyz_pred: &Grid<Vector3<f64>>,
) -> MaskedLoss {
    assert!(mask.same_shape(xyz_gt) && mask.same_shape(xyz_pred), "map shapes differ");
    let terms: Vec<f64> = (0..mask.len())
        .filter(|&i| mask[i])
        .map(|i| (xyz_gt[i] - xyz_pred[i]).lp_norm(1))
        .collect();
    MaskedLoss::from_terms(&terms)
}

/// Normal loss: `1 − ⟨n, n̂⟩` averaged over the mask; lies in `[0, 2]` for
/// unit normals.
pub fn loss_normal(
    n_gt: &Grid<Vector3<f64>>,
    n_pred: &Grid<Vector3<f64>>,
    mask: &Grid<bool>,
) -> MaskedLoss {
    assert!(mask.same_shape(n_gt) && mask.same_shape(n_pred), "map shapes differ");
    let terms: Vec<f64> =
        (0..mask.len()).filter(|&i| mask[i]).map(|i| 1.0 - n_gt[i].dot(&n_pred[i])).collect();
    MaskedLoss::from_terms(&terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseTerms {
    pub rotation: f64,
    pub center: f64,
    pub z: f64,
}

impl PoseTerms {
    pub fn sum(&self) -> f64 {
        self.rotation + self.center + self.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoTerms {
    pub mask: f64,
    pub normal: f64,
    pub xyz: f64,
}

impl GeoTerms {
    pub fn sum(&self) -> f64 {
        self.mask + self.normal + self.xyz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the pose terms in the pseudo-label loss.
    pub lambda1: f64,
    /// Weight of the `1 − IoU` silhouette term in the refinement objective.
    pub w_mask_iou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, w_mask_iou: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite())
            || !(self.w_mask_iou >= 0.0 && self.w_mask_iou.is_finite())
        {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// λ₁ as a function of geometric agreement: pose supervision is trusted
/// only when the predicted shape matches, `λ₁ = exp(−k·L_geo)`.
pub fn lambda1_from_alignment(l_geo: f64, sharpness: f64) -> f64 {
    (-sharpness * l_geo).exp()
}

pub fn pseudo_loss(pose: &PoseTerms, geo: &GeoTerms, weights: &LossWeights) -> f64 {
    weights.lambda1 * pose.sum() + geo.sum()
}

/// ADD: mean distance between corresponding model points under the two
/// poses, meters.
pub fn add_metric(gt: &Pose, pred: &Pose, mesh: &Mesh) -> f64 {
    let d: Vec<f64> =
        mesh.model_points().iter().map(|x| (gt.transform(x) - pred.transform(x)).norm()).collect();
    pairwise_sum(&d) / d.len() as f64
}

/// ADD-S: mean distance from each ground-truth point to the nearest
/// predicted point, meters. Exact O(N²) search.
pub fn adds_metric(gt: &Pose, pred: &Pose, mesh: &Mesh) -> f64 {
    let a: Vec<Vector3<f64>> = mesh.model_points().iter().map(|x| gt.transform(x)).collect();
    let b: Vec<Vector3<f64>> = mesh.model_points().iter().map(|x| pred.transform(x)).collect();
    let d: Vec<f64> = a
        .iter()
        .map(|p| b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
        .collect();
    pairwise_sum(&d) / d.len() as f64
}

/// Percentage of errors strictly below `threshold_fraction · diameter`.
pub fn add_recall(errors: &[f64], diameter: f64, threshold_fraction: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let thr = threshold_fraction * diameter;
    let hits = errors.iter().filter(|e| **e < thr).count();
    100.0 * hits as f64 / errors.len() as f64
}
