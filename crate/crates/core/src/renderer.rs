//! Z-buffered software rasterizer producing the geometric buffers (normal
//! map, depth, object mask and NOCS map) for a posed mesh.
//!
//! Pixel `(x, y)` is sampled at image point `(x, y)`. Coverage follows the
//! top-left fill convention, the depth test is strict with a small bias, and
//! attributes are interpolated perspective-correctly.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::grid::Grid;
use crate::mesh::Mesh;
use crate::pose::Pose;

/// Triangles with any vertex closer than this (meters) are discarded.
pub const NEAR_PLANE: f64 = 1e-3;
const DEPTH_BIAS: f64 = 1e-9;
const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryBuffers {
    /// Unit surface normals in the camera frame.
    pub normals: Grid<Option<Vector3<f64>>>,
    /// Camera-frame `z` of the visible surface, meters.
    pub depth: Grid<Option<f64>>,
    pub mask: Grid<bool>,
    /// Object-frame position normalized by the mesh bounding box.
    pub nocs: Grid<Option<Vector3<f64>>>,
}

impl GeometryBuffers {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn mask_area(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// `true` when nothing of the object landed on the image.
    pub fn is_empty(&self) -> bool {
        self.mask_area() == 0
    }
}

#[derive(Clone, Copy)]
struct Fragment {
    depth: f64,
    normal: Vector3<f64>,
    nocs: Vector3<f64>,
}

const EMPTY: Fragment = Fragment {
    depth: f64::INFINITY,
    normal: Vector3::new(0.0, 0.0, 0.0),
    nocs: Vector3::new(0.0, 0.0, 0.0),
};

struct ScreenTri {
    uv: [(f64, f64); 3],
    inv_z: [f64; 3],
    normal: [Vector3<f64>; 3],
    nocs: [Vector3<f64>; 3],
    /// Inclusive pixel bounds.
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    area: f64,
    top_left: [bool; 3],
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// With positive signed area (y down), top edges run in `+x` and left
/// edges run upward.
#[inline]
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn setup_triangles(mesh: &Mesh, pose: &Pose, camera: &Camera) -> Vec<ScreenTri> {
    let r = pose.rotation();
    let cam_pts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| pose.transform(v)).collect();
    let cam_normals: Vec<Vector3<f64>> = mesh.vertex_normals().iter().map(|n| r * n).collect();
    let nocs: Vec<Vector3<f64>> =
        mesh.vertices().iter().map(|v| mesh.nocs_box().normalize(v)).collect();

    let (w, h) = (camera.width() as f64, camera.height() as f64);
    let mut tris = Vec::with_capacity(mesh.faces().len());
    for face in mesh.faces() {
        let mut idx = face.map(|i| i as usize);
        if idx.iter().any(|&i| !(cam_pts[i].z > NEAR_PLANE)) {
            continue;
        }
        let mut uv = idx.map(|i| camera.project(&cam_pts[i]));
        let mut area = edge(uv[0], uv[1], uv[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            idx.swap(1, 2);
            uv.swap(1, 2);
            area = -area;
        }

        let min_x = uv.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = uv.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = uv.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = uv.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > w - 1.0 || min_y > h - 1.0 {
            continue;
        }
        let x0 = min_x.ceil().max(0.0) as usize;
        let y0 = min_y.ceil().max(0.0) as usize;
        let x1 = max_x.floor().min(w - 1.0);
        let y1 = max_y.floor().min(h - 1.0);
        if x1 < x0 as f64 || y1 < y0 as f64 {
            continue;
        }

        tris.push(ScreenTri {
            uv,
            inv_z: idx.map(|i| 1.0 / cam_pts[i].z),
            normal: idx.map(|i| cam_normals[i]),
            nocs: idx.map(|i| nocs[i]),
            x0,
            x1: x1 as usize,
            y0,
            y1: y1 as usize,
            area,
            top_left: [
                is_top_left(uv[1], uv[2]),
                is_top_left(uv[2], uv[0]),
                is_top_left(uv[0], uv[1]),
            ],
        });
    }
    tris
}

/// Rasterize rows `row0..row0 + band.len() / width` into `band`.
fn raster_band(tris: &[ScreenTri], width: usize, row0: usize, band: &mut [Fragment]) {
    let rows = band.len() / width;
    let row_end = row0 + rows;
    for t in tris {
        if t.y1 < row0 || t.y0 >= row_end {
            continue;
        }
        let ya = t.y0.max(row0);
        let yb = t.y1.min(row_end - 1);
        for y in ya..=yb {
            let py = y as f64;
            for x in t.x0..=t.x1 {
                let p = (x as f64, py);
                let w0 = edge(t.uv[1], t.uv[2], p);
                let w1 = edge(t.uv[2], t.uv[0], p);
                let w2 = edge(t.uv[0], t.uv[1], p);
                let inside = |w: f64, tl: bool| w > 0.0 || (w == 0.0 && tl);
                if !(inside(w0, t.top_left[0])
                    && inside(w1, t.top_left[1])
                    && inside(w2, t.top_left[2]))
                {
                    continue;
                }
                let b = [w0 / t.area, w1 / t.area, w2 / t.area];
                let pw = [b[0] * t.inv_z[0], b[1] * t.inv_z[1], b[2] * t.inv_z[2]];
                let inv_depth = pw[0] + pw[1] + pw[2];
                let depth = 1.0 / inv_depth;
                let frag = &mut band[(y - row0) * width + x];
                if !(depth < frag.depth - DEPTH_BIAS) {
                    continue;
                }
                let k = [pw[0] * depth, pw[1] * depth, pw[2] * depth];
                frag.depth = depth;
                frag.normal = t.normal[0] * k[0] + t.normal[1] * k[1] + t.normal[2] * k[2];
                frag.nocs = t.nocs[0] * k[0] + t.nocs[1] * k[1] + t.nocs[2] * k[2];
            }
        }
    }
}

/// Render `mesh` under `pose`. An object entirely outside the frustum
/// yields buffers whose mask is all `false` (see
/// [`GeometryBuffers::is_empty`]).
///
/// With the `parallel` feature the image is split into row bands that are
/// rasterized independently; every band visits triangles in the same order
/// as a sequential pass, so the output is bit-identical.
pub fn rasterize(mesh: &Mesh, pose: &Pose, camera: &Camera) -> GeometryBuffers {
    let (w, h) = (camera.width(), camera.height());
    let tris = setup_triangles(mesh, pose, camera);
    let mut frags = vec![EMPTY; w * h];

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        frags
            .par_chunks_mut(w * BAND_ROWS)
            .enumerate()
            .for_each(|(i, band)| raster_band(&tris, w, i * BAND_ROWS, band));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, band) in frags.chunks_mut(w * BAND_ROWS).enumerate() {
            raster_band(&tris, w, i * BAND_ROWS, band);
        }
    }

    let mut normals = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    let mut nocs = Vec::with_capacity(w * h);
    for f in &frags {
        if f.depth.is_finite() {
            let len = f.normal.norm();
            let n = if len > 0.0 { f.normal / len } else { -Vector3::z() };
            normals.push(Some(n));
            depth.push(Some(f.depth));
            mask.push(true);
            nocs.push(Some(f.nocs.map(|c| c.clamp(0.0, 1.0))));
        } else {
            normals.push(None);
            depth.push(None);
            mask.push(false);
            nocs.push(None);
        }
    }
    GeometryBuffers {
        normals: Grid::from_vec(w, h, normals).unwrap(),
        depth: Grid::from_vec(w, h, depth).unwrap(),
        mask: Grid::from_vec(w, h, mask).unwrap(),
        nocs: Grid::from_vec(w, h, nocs).unwrap(),
    }
}
