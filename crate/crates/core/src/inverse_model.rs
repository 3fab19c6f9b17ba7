//! Rendered normals → analytic polarization, and the physics loss that
//! compares it against observed DoP.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::grid::{pairwise_sum, Grid};
use crate::polarimetry::{dop_diffuse, dop_specular, wrap_pi, Material};
use crate::renderer::GeometryBuffers;

/// Analytic DoP/AoP predicted from a normal map for both reflection
/// branches. Entries outside `valid` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPolarization {
    pub rho_d_hat: Grid<f64>,
    pub rho_s_hat: Grid<f64>,
    pub phi_d_hat: Grid<f64>,
    pub phi_s_hat: Grid<f64>,
    pub valid: Grid<bool>,
}

/// Viewing angle between each rendered normal and the ray back toward the
/// camera, in `[0, π/2]`.
pub fn viewing_angle_map(buffers: &GeometryBuffers, camera: &Camera) -> Grid<Option<f64>> {
    let (w, h) = (buffers.width(), buffers.height());
    Grid::from_fn(w, h, |x, y| {
        buffers.normals.get(x, y).map(|n| {
            let v = camera.viewing_vector(x as f64, y as f64);
            n.dot(&-v).abs().clamp(0.0, 1.0).acos()
        })
    })
}

pub fn analytic_polarization(
    theta_v: &Grid<Option<f64>>,
    normals: &Grid<Option<Vector3<f64>>>,
    camera: &Camera,
    material: Material,
) -> AnalyticPolarization {
    let (w, h) = (theta_v.width(), theta_v.height());
    let n = w * h;
    let mut rho_d = vec![0.0; n];
    let mut rho_s = vec![0.0; n];
    let mut phi_d = vec![0.0; n];
    let mut phi_s = vec![0.0; n];
    let mut valid = vec![false; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (Some(theta), Some(normal)) = (theta_v[i], normals[i]) else {
                continue;
            };
            rho_d[i] = dop_diffuse(theta, material);
            rho_s[i] = dop_specular(theta, material).clamp(0.0, 1.0);
            let frame = crate::camera::ViewFrame::new(camera.viewing_vector(x as f64, y as f64));
            let az = frame.azimuth(&normal);
            phi_d[i] = wrap_pi(az);
            phi_s[i] = wrap_pi(az - std::f64::consts::FRAC_PI_2);
            valid[i] = true;
        }
    }
    AnalyticPolarization {
        rho_d_hat: Grid::from_vec(w, h, rho_d).unwrap(),
        rho_s_hat: Grid::from_vec(w, h, rho_s).unwrap(),
        phi_d_hat: Grid::from_vec(w, h, phi_d).unwrap(),
        phi_s_hat: Grid::from_vec(w, h, phi_s).unwrap(),
        valid: Grid::from_vec(w, h, valid).unwrap(),
    }
}

/// Shortcut: render buffers → viewing angles → analytic polarization.
pub fn analytic_from_buffers(
    buffers: &GeometryBuffers,
    camera: &Camera,
    material: Material,
) -> AnalyticPolarization {
    let theta = viewing_angle_map(buffers, camera);
    analytic_polarization(&theta, &buffers.normals, camera, material)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsLoss {
    pub value: f64,
    /// Number of pixels in `mask ∩ valid`.
    pub overlap: usize,
}

impl PhysicsLoss {
    pub fn is_empty_overlap(&self) -> bool {
        self.overlap == 0
    }
}

/// Mean over `mask ∩ analytic.valid` of `min(|ρ − ρ̂_d|, |ρ − ρ̂_s|)`.
/// An empty overlap gives value 0 with `overlap == 0`.
pub fn physics_loss(
    observed_rho: &Grid<f64>,
    analytic: &AnalyticPolarization,
    mask: &Grid<bool>,
) -> PhysicsLoss {
    let terms: Vec<f64> = (0..observed_rho.len())
        .filter(|&i| mask[i] && analytic.valid[i])
        .map(|i| {
            let rho = observed_rho[i];
            (rho - analytic.rho_d_hat[i]).abs().min((rho - analytic.rho_s_hat[i]).abs())
        })
        .collect();
    if terms.is_empty() {
        return PhysicsLoss { value: 0.0, overlap: 0 };
    }
    PhysicsLoss { value: pairwise_sum(&terms) / terms.len() as f64, overlap: terms.len() }
}
