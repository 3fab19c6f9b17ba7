//! Triangle meshes, model-point sampling and a few procedural shapes.

use std::collections::HashSet;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pose::check_rotation;

/// Upper bound on the number of model points used by the pose metrics.
pub const MAX_MODEL_POINTS: usize = 1024;
const FPS_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    fn from_points(points: &[Vector3<f64>]) -> Self {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    /// Map a point to `[0, 1]³`, min corner to 0 and max corner to 1. A
    /// flat axis maps to 0.5.
    pub fn normalize(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            let extent = self.max[i] - self.min[i];
            if extent > 0.0 {
                ((p[i] - self.min[i]) / extent).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    vertex_normals: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    model_points: Vec<Vector3<f64>>,
    diameter: f64,
    symmetries: Vec<Rotation3<f64>>,
    nocs_box: Aabb,
}

impl Mesh {
    /// Build a mesh. Missing normals are computed by area-weighted
    /// averaging of the incident face normals.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        vertex_normals: Option<Vec<Vector3<f64>>>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::invalid("mesh has no vertices"));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh has non-finite vertices"));
        }
        for f in &faces {
            if f.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(Error::invalid("face references a missing vertex"));
            }
        }
        let vertex_normals = match vertex_normals {
            Some(n) => {
                if n.len() != vertices.len() {
                    return Err(Error::invalid("normal count does not match vertex count"));
                }
                n.into_iter()
                    .map(|v| {
                        let len = v.norm();
                        if len > 0.0 && len.is_finite() {
                            Ok(v / len)
                        } else {
                            Err(Error::invalid("zero-length vertex normal"))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => area_weighted_normals(&vertices, &faces),
        };

        let unique = unique_points(&vertices);
        let model_points = farthest_point_sample(&unique, MAX_MODEL_POINTS, FPS_SEED);
        let diameter = max_pairwise_distance(&model_points);
        if !(diameter > 0.0) {
            return Err(Error::invalid("mesh has zero diameter"));
        }
        let nocs_box = Aabb::from_points(&vertices);

        Ok(Self {
            vertices,
            vertex_normals,
            faces,
            model_points,
            diameter,
            symmetries: vec![Rotation3::identity()],
            nocs_box,
        })
    }

    /// Replace the symmetry list. The identity is always kept.
    pub fn with_symmetries(mut self, symmetries: Vec<Rotation3<f64>>) -> Result<Self> {
        let mut out = vec![Rotation3::identity()];
        for s in symmetries {
            check_rotation(s.matrix())?;
            if s.angle() > 1e-12 {
                out.push(s);
            }
        }
        self.symmetries = out;
        Ok(self)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }
    pub fn vertex_normals(&self) -> &[Vector3<f64>] {
        &self.vertex_normals
    }
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }
    pub fn model_points(&self) -> &[Vector3<f64>] {
        &self.model_points
    }
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    pub fn symmetries(&self) -> &[Rotation3<f64>] {
        &self.symmetries
    }
    pub fn nocs_box(&self) -> &Aabb {
        &self.nocs_box
    }
}

fn area_weighted_normals(vertices: &[Vector3<f64>], faces: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        // Cross product length is twice the area: already area-weighted.
        let n = (b - a).cross(&(c - a));
        for &i in f {
            acc[i as usize] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

fn unique_points(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut seen = HashSet::new();
    points.iter().filter(|p| seen.insert(p.map(f64::to_bits))).copied().collect()
}

/// Greedy farthest-point sampling of up to `k` points. The start point is
/// drawn from a fixed-seed generator so the result is reproducible.
pub fn farthest_point_sample(points: &[Vector3<f64>], k: usize, seed: u64) -> Vec<Vector3<f64>> {
    if points.len() <= k {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.random_range(0..points.len());
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        out.push(points[current]);
        let c = points[current];
        let mut best = (0, -1.0);
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm_squared();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.1 {
                best = (i, dist[i]);
            }
        }
        current = best.0;
    }
    out
}

fn max_pairwise_distance(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Procedural meshes used by tests, the CLI demo assets and the web demo.
pub mod shapes {
    use std::f64::consts::PI;

    use super::*;

    /// UV sphere centered at the origin with analytic normals.
    pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> Mesh {
        let (vertices, faces) = uv_grid(stacks, slices, |dir| dir * radius);
        let normals = vertices.iter().map(|v| v.normalize()).collect();
        Mesh::new(vertices, Some(normals), faces).expect("valid sphere")
    }

    /// Smooth, star-shaped blob with no rotational symmetry: an ellipsoid
    /// with semi-axes (60, 42, 30) mm plus two off-axis bumps of unequal
    /// size.
    pub fn asymmetric_blob() -> Mesh {
        let axes = Vector3::new(0.060, 0.042, 0.030);
        let bump_a = Vector3::new(1.0, 1.0, 1.0).normalize();
        let bump_b = Vector3::new(-1.0, 0.3, -0.6).normalize();
        let (vertices, faces) = uv_grid(48, 96, |dir| {
            let r = 1.0
                + 0.35 * (-(dir - bump_a).norm_squared() / 0.25).exp()
                + 0.18 * (-(dir - bump_b).norm_squared() / 0.15).exp();
            dir.component_mul(&axes) * r
        });
        Mesh::new(vertices, None, faces).expect("valid blob")
    }

    /// Axis-aligned unit cube `[0, 1]³` with shared corners.
    pub fn unit_cube() -> Mesh {
        let vertices: Vec<Vector3<f64>> = (0..8)
            .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads: [[u32; 4]; 6] =
            [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Mesh::new(vertices, None, faces).expect("valid cube")
    }

    /// Square of side `side` in the object `z = 0` plane, normals `−z`.
    pub fn square(side: f64) -> Mesh {
        let h = side / 2.0;
        let vertices = vec![
            Vector3::new(-h, -h, 0.0),
            Vector3::new(h, -h, 0.0),
            Vector3::new(h, h, 0.0),
            Vector3::new(-h, h, 0.0),
        ];
        let normals = vec![-Vector3::z(); 4];
        Mesh::new(vertices, Some(normals), vec![[0, 1, 2], [0, 2, 3]]).expect("valid square")
    }

    /// Latitude/longitude tessellation of a radial function of the unit
    /// direction. Poles are single vertices.
    fn uv_grid(
        stacks: usize,
        slices: usize,
        surface: impl Fn(Vector3<f64>) -> Vector3<f64>,
    ) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
        let mut vertices = vec![surface(Vector3::z())];
        for i in 1..stacks {
            let polar = PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let az = 2.0 * PI * j as f64 / slices as f64;
                let dir = Vector3::new(polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos());
                vertices.push(surface(dir));
            }
        }
        vertices.push(surface(-Vector3::z()));
        let south = (vertices.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;

        // Outward winding (counter-clockwise seen from outside).
        let mut faces = Vec::new();
        for j in 0..slices {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for j in 0..slices {
            faces.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        (vertices, faces)
    }
}
