//! Synthetic polarimetric scenes: mesh + pose → ground-truth geometry →
//! polarization state → polarizer-filtered intensity stack with noise.

use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inverse_model::viewing_angle_map;
use crate::mesh::Mesh;
use crate::polarimetry::{
    azimuth_to_aop, default_filter_angles, dop_for, forward_intensity, FilterStack, Material,
    PolarSample, ReflectionKind,
};
use crate::pose::{quaternion_wxyz, Pose};
use crate::renderer::{rasterize, GeometryBuffers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    #[default]
    Diffuse,
    Specular,
    /// Each object pixel is specular with this probability, else diffuse.
    PerPixelMixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of additive Gaussian noise, intensity units.
    pub sigma: f64,
    /// Optional quantization to 8 or 12 bits after the noise.
    pub quantization_bits: Option<u8>,
}

fn default_eta() -> Material {
    Material::default()
}

fn default_background() -> f64 {
    0.1
}

fn default_object_intensity() -> f64 {
    1.0
}

/// Scene description, stored as JSON. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// OBJ file, relative paths resolved against the config's directory.
    pub mesh: PathBuf,
    pub pose: Pose,
    pub camera: Camera,
    #[serde(default = "default_eta")]
    pub eta: Material,
    #[serde(default)]
    pub reflection_mode: ReflectionMode,
    #[serde(default = "default_filter_angles")]
    pub filter_angles: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Unpolarized intensity of background pixels (DoP 0).
    #[serde(default = "default_background")]
    pub background: f64,
    /// Unpolarized intensity of object pixels.
    #[serde(default = "default_object_intensity")]
    pub object_intensity: f64,
    /// Object symmetries as unit quaternions `[w, x, y, z]`.
    #[serde(default)]
    pub symmetries: Vec<[f64; 4]>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    /// A config with defaults for everything but the required fields.
    pub fn new(mesh: impl Into<PathBuf>, pose: Pose, camera: Camera) -> Self {
        Self {
            mesh: mesh.into(),
            pose,
            camera,
            eta: default_eta(),
            reflection_mode: ReflectionMode::default(),
            filter_angles: default_filter_angles(),
            noise: NoiseConfig::default(),
            background: default_background(),
            object_intensity: default_object_intensity(),
            symmetries: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ReflectionMode::PerPixelMixed(f) = self.reflection_mode {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("specular fraction must lie in [0, 1]"));
            }
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be finite and non-negative"));
        }
        if let Some(bits) = self.noise.quantization_bits {
            if bits != 8 && bits != 12 {
                return Err(Error::invalid("quantization_bits must be 8 or 12"));
            }
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(Error::invalid("background intensity must be non-negative"));
        }
        if !(self.object_intensity > 0.0 && self.object_intensity.is_finite()) {
            return Err(Error::invalid("object intensity must be positive"));
        }
        for q in &self.symmetries {
            quaternion_wxyz(*q)?;
        }
        Ok(())
    }

    pub fn symmetry_rotations(&self) -> Result<Vec<Rotation3<f64>>> {
        self.symmetries
            .iter()
            .map(|q| quaternion_wxyz(*q).map(|q| q.to_rotation_matrix()))
            .collect()
    }

    /// Mesh path resolved against `base_dir`.
    pub fn mesh_path(&self, base_dir: &Path) -> PathBuf {
        if self.mesh.is_absolute() {
            self.mesh.clone()
        } else {
            base_dir.join(&self.mesh)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub stack: FilterStack,
    pub buffers: GeometryBuffers,
    /// Noise-free polarization state of every pixel.
    pub ground_truth: Grid<PolarSample>,
    /// Reflection branch used for each object pixel.
    pub reflection: Grid<Option<ReflectionKind>>,
    pub pose: Pose,
}

/// Render the scene and synthesize its polarizer stack. Deterministic for
/// a fixed config (including the seed).
pub fn synthesize_scene(config: &SceneConfig, mesh: &Mesh) -> Result<SyntheticScene> {
    config.validate()?;
    let camera = &config.camera;
    let material = config.eta;
    let buffers = rasterize(mesh, &config.pose, camera);
    if buffers.is_empty() {
        return Err(Error::EmptyRender);
    }
    let (w, h) = (camera.width(), camera.height());
    let theta = viewing_angle_map(&buffers, camera);
    let frames = camera.viewing_frames();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut truth = Vec::with_capacity(w * h);
    let mut reflection = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (Some(t), Some(n)) = (theta[i], buffers.normals[i]) else {
            truth.push(PolarSample { i_un: config.background, dop: 0.0, aop: 0.0 });
            reflection.push(None);
            continue;
        };
        let kind = match config.reflection_mode {
            ReflectionMode::Diffuse => ReflectionKind::Diffuse,
            ReflectionMode::Specular => ReflectionKind::Specular,
            ReflectionMode::PerPixelMixed(p) => {
                if rng.random_bool(p) {
                    ReflectionKind::Specular
                } else {
                    ReflectionKind::Diffuse
                }
            }
        };
        truth.push(PolarSample {
            i_un: config.object_intensity,
            dop: dop_for(kind, t, material).clamp(0.0, 1.0),
            aop: azimuth_to_aop(frames[i].azimuth(&n), kind),
        });
        reflection.push(Some(kind));
    }

    let noise = if config.noise.sigma > 0.0 {
        Some(Normal::new(0.0, config.noise.sigma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let full_scale = 2.0 * config.object_intensity.max(config.background);
    let images = config
        .filter_angles
        .iter()
        .map(|&angle| {
            let data = truth
                .iter()
                .map(|s| {
                    let mut v = forward_intensity(s, angle);
                    if let Some(n) = &noise {
                        v += n.sample(&mut rng);
                    }
                    if let Some(bits) = config.noise.quantization_bits {
                        let levels = ((1u32 << bits) - 1) as f64;
                        v = ((v / full_scale).clamp(0.0, 1.0) * levels).round() / levels
                            * full_scale;
                    }
                    v.max(0.0)
                })
                .collect();
            Grid::from_vec(w, h, data)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticScene {
        stack: FilterStack::new(config.filter_angles.clone(), images)?,
        buffers,
        ground_truth: Grid::from_vec(w, h, truth)?,
        reflection: Grid::from_vec(w, h, reflection)?,
        pose: config.pose,
    })
}
