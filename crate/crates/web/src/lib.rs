//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions do the work and are what the native tests call; the
//! `#[wasm_bindgen]` wrappers only convert errors into JS exceptions.

use std::sync::OnceLock;

use nalgebra::{Rotation3, Vector3};
use polar6d::datagen::{synthesize_scene, NoiseConfig, SceneConfig};
use polar6d::io::{aop_to_rgb, normals_to_rgb};
use polar6d::mesh::shapes;
use polar6d::polarimetry::{dop_diffuse, dop_specular, estimate_polarisation, invert_dop};
use polar6d::sfp::plausible_normals;
use polar6d::{Camera, Grid, Material, Mesh, Pose};
use wasm_bindgen::prelude::*;

/// Largest canvas the demo renders.
pub const MAX_SIZE: usize = 512;

fn blob() -> &'static Mesh {
    static MESH: OnceLock<Mesh> = OnceLock::new();
    MESH.get_or_init(shapes::asymmetric_blob)
}

/// `samples` rows of `[θ, ρ_d(θ), ρ_s(θ)]`, flattened, for θ on `[0, π/2]`.
pub fn curves(eta: f64, samples: usize) -> polar6d::Result<Vec<f64>> {
    let m = Material::new(eta)?;
    let n = samples.max(2);
    Ok((0..n)
        .flat_map(|k| {
            let theta = std::f64::consts::FRAC_PI_2 * k as f64 / (n - 1) as f64;
            [theta, dop_diffuse(theta, m), dop_specular(theta, m)]
        })
        .collect())
}

/// `[θ_d, θ_s1, θ_s2]` with NaN for absent solutions.
pub fn zeniths(rho: f64, eta: f64) -> polar6d::Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(polar6d::Error::InvalidInput(format!("rho must lie in [0, 1], got {rho}")));
    }
    let z = invert_dop(rho, Material::new(eta)?);
    Ok([z.theta_d, z.theta_s1, z.theta_s2].map(|t| t.unwrap_or(f64::NAN)).to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMode {
    /// Rendered ground-truth normals.
    Normals,
    /// DoP estimated from the synthesized filter stack.
    Dop,
    /// AoP estimated from the synthesized filter stack.
    Aop,
    /// Diffuse shape-from-polarization normals.
    Sfp,
}

impl ViewMode {
    pub fn parse(s: &str) -> polar6d::Result<Self> {
        match s {
            "normals" => Ok(Self::Normals),
            "dop" => Ok(Self::Dop),
            "aop" => Ok(Self::Aop),
            "sfp" => Ok(Self::Sfp),
            _ => Err(polar6d::Error::InvalidInput(format!("unknown view mode {s:?}"))),
        }
    }
}

/// Render the demo object at the given Euler angles (degrees) through the
/// full synthesis and estimation pipeline, returning `size × size` RGBA.
pub fn view(
    yaw: f64,
    pitch: f64,
    roll: f64,
    mode: ViewMode,
    eta: f64,
    sigma: f64,
    size: usize,
) -> polar6d::Result<Vec<u8>> {
    if !(16..=MAX_SIZE).contains(&size) {
        return Err(polar6d::Error::InvalidInput(format!("size must lie in [16, {MAX_SIZE}]")));
    }
    let f = 2.2 * size as f64;
    let c = (size as f64 - 1.0) / 2.0;
    let camera = Camera::new(f, f, c, c, size, size)?;
    let r = Rotation3::from_euler_angles(roll.to_radians(), pitch.to_radians(), yaw.to_radians());
    let pose = Pose::new(r, Vector3::new(0.0, 0.0, 0.4))?;
    let mut config = SceneConfig::new("blob.obj", pose, camera);
    config.eta = Material::new(eta)?;
    config.noise = NoiseConfig { sigma, quantization_bits: None };
    let scene = synthesize_scene(&config, blob())?;
    let polar = estimate_polarisation(&scene.stack);
    let mask = &scene.buffers.mask;

    let rgb: Grid<[u8; 3]> = match mode {
        ViewMode::Normals => normals_to_rgb(&scene.buffers.normals),
        ViewMode::Dop => {
            // Scaled so the diffuse maximum is white.
            let peak = dop_diffuse(std::f64::consts::FRAC_PI_2, config.eta);
            polar.samples.map(|s| {
                let g = (s.dop / peak * 255.0).clamp(0.0, 255.0) as u8;
                [g, g, g]
            })
        }
        ViewMode::Aop => aop_to_rgb(&polar.aop()),
        ViewMode::Sfp => {
            let n = plausible_normals(&polar.samples, &polar.valid, config.eta, Some(&camera));
            normals_to_rgb(&n.n_d)
        }
    };
    Ok(rgb
        .iter()
        .zip(mask.iter())
        .flat_map(|(p, &m)| if m { [p[0], p[1], p[2], 255] } else { [24, 24, 28, 255] })
        .collect())
}

fn js(e: polar6d::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Flattened `[θ, ρ_d, ρ_s]` triples for plotting.
#[wasm_bindgen]
pub fn dop_curves(eta: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    curves(eta, samples).map_err(js)
}

/// `[θ_d, θ_s1, θ_s2]` in radians, NaN where no solution exists.
#[wasm_bindgen(js_name = invertDop)]
pub fn invert_dop_js(rho: f64, eta: f64) -> Result<Vec<f64>, JsError> {
    zeniths(rho, eta).map_err(js)
}

/// RGBA pixels for a `size × size` canvas. `mode` is one of `normals`,
/// `dop`, `aop`, `sfp`.
#[wasm_bindgen(js_name = renderView)]
#[allow(clippy::too_many_arguments)]
pub fn render_view(
    yaw: f64,
    pitch: f64,
    roll: f64,
    mode: &str,
    eta: f64,
    sigma: f64,
    size: usize,
) -> Result<Vec<u8>, JsError> {
    let mode = ViewMode::parse(mode).map_err(js)?;
    view(yaw, pitch, roll, mode, eta, sigma, size).map_err(js)
}
