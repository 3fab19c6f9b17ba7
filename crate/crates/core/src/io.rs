//! File formats: PFM float maps, PNG visualizations, OBJ meshes, JSON
//! documents, filter-stack directories and metric CSV rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mesh::Mesh;
use crate::polarimetry::FilterStack;

// ---------------------------------------------------------------- PFM

/// Raw PFM contents. Rows are stored top-to-bottom here; the file itself
/// is bottom-to-top.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let tag = match self.channels {
            1 => "Pf",
            3 => "PF",
            c => return Err(Error::invalid(format!("PFM supports 1 or 3 channels, not {c}"))),
        };
        if self.data.len() != self.width * self.height * self.channels {
            return Err(Error::invalid("PFM data length does not match its header"));
        }
        write!(out, "{tag}\n{} {}\n-1.0\n", self.width, self.height)?;
        let row = self.width * self.channels;
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut tokens = Vec::new();
        // Header: three whitespace-separated tokens after the tag, each
        // terminated by a single whitespace byte before the raster.
        while tokens.len() < 4 {
            let mut tok = Vec::new();
            loop {
                let mut b = [0u8; 1];
                if r.read(&mut b)? == 0 {
                    return Err(Error::Format("truncated PFM header".into()));
                }
                if b[0].is_ascii_whitespace() {
                    if tok.is_empty() {
                        continue;
                    }
                    break;
                }
                tok.push(b[0]);
                if tok.len() > 64 {
                    return Err(Error::Format("PFM header token too long".into()));
                }
            }
            tokens.push(
                String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII PFM header".into()))?,
            );
        }
        let channels = match tokens[0].as_str() {
            "Pf" => 1,
            "PF" => 3,
            t => return Err(Error::Format(format!("unknown PFM tag {t:?}"))),
        };
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| Error::Format(format!("invalid PFM dimension {s:?}")))
        };
        let width = parse_dim(&tokens[1])?;
        let height = parse_dim(&tokens[2])?;
        let scale: f32 = tokens[3]
            .parse()
            .map_err(|_| Error::Format(format!("invalid PFM scale {:?}", tokens[3])))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Format("PFM scale must be non-zero".into()));
        }
        let little_endian = scale < 0.0;

        let row = width * channels;
        let mut raw = vec![0u8; row * height * 4];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Format("PFM raster shorter than its header says".into()))?;
        let mut data = vec![0f32; row * height];
        for (file_y, chunk) in raw.chunks_exact(row * 4).enumerate() {
            let y = height - 1 - file_y;
            for (x, b) in chunk.chunks_exact(4).enumerate() {
                let b = [b[0], b[1], b[2], b[3]];
                data[y * row + x] =
                    if little_endian { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            }
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

pub fn write_pfm(path: &Path, map: &Grid<f32>) -> Result<()> {
    Pfm { width: map.width(), height: map.height(), channels: 1, data: map.as_slice().to_vec() }
        .write(path)
}

pub fn read_pfm(path: &Path) -> Result<Grid<f32>> {
    let pfm = Pfm::read(path)?;
    if pfm.channels != 1 {
        return Err(Error::Format(format!("{}: expected a single-channel PFM", path.display())));
    }
    Grid::from_vec(pfm.width, pfm.height, pfm.data)
}

pub fn write_scalar_pfm(path: &Path, map: &Grid<f64>) -> Result<()> {
    write_pfm(path, &map.map(|v| *v as f32))
}

pub fn read_scalar_pfm(path: &Path) -> Result<Grid<f64>> {
    Ok(read_pfm(path)?.map(|v| *v as f64))
}

pub fn write_mask_pfm(path: &Path, mask: &Grid<bool>) -> Result<()> {
    write_pfm(path, &mask.map(|m| if *m { 1.0 } else { 0.0 }))
}

pub fn read_mask_pfm(path: &Path) -> Result<Grid<bool>> {
    Ok(read_pfm(path)?.map(|v| *v > 0.5))
}

/// Three-channel PFM; absent vectors are written as `(0, 0, 0)`.
pub fn write_vector_pfm(path: &Path, map: &Grid<Option<Vector3<f64>>>) -> Result<()> {
    let data = map
        .iter()
        .flat_map(|v| {
            let v = v.unwrap_or_else(Vector3::zeros);
            [v.x as f32, v.y as f32, v.z as f32]
        })
        .collect();
    Pfm { width: map.width(), height: map.height(), channels: 3, data }.write(path)
}

/// Read a three-channel PFM; all-zero pixels become `None`.
pub fn read_vector_pfm(path: &Path) -> Result<Grid<Option<Vector3<f64>>>> {
    let pfm = Pfm::read(path)?;
    if pfm.channels != 3 {
        return Err(Error::Format(format!("{}: expected a three-channel PFM", path.display())));
    }
    let v = pfm
        .data
        .chunks_exact(3)
        .map(|c| {
            let v = Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);
            (v != Vector3::zeros()).then_some(v)
        })
        .collect();
    Grid::from_vec(pfm.width, pfm.height, v)
}

// ---------------------------------------------------------------- PNG

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisKind {
    Dop,
    Aop,
    Normal,
}

/// DoP `[0, 1]` → gray `[0, 255]`.
pub fn dop_to_rgb(map: &Grid<f64>) -> Grid<[u8; 3]> {
    map.map(|v| {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        [g, g, g]
    })
}

/// AoP `[0, π)` → fully saturated hue.
pub fn aop_to_rgb(map: &Grid<f64>) -> Grid<[u8; 3]> {
    map.map(|v| {
        hsv_to_rgb(crate::polarimetry::wrap_pi(*v) / std::f64::consts::PI * 360.0, 1.0, 1.0)
    })
}

/// Normal `n` → `(n + 1) / 2` scaled to 8 bits; absent normals are black.
pub fn normals_to_rgb(map: &Grid<Option<Vector3<f64>>>) -> Grid<[u8; 3]> {
    map.map(|n| match n {
        Some(n) => {
            let c = |v: f64| ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round() as u8;
            [c(n.x), c(n.y), c(n.z)]
        }
        None => [0, 0, 0],
    })
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

pub fn write_png(path: &Path, image: &Grid<[u8; 3]>) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    let bytes: Vec<u8> = image.iter().flat_map(|p| *p).collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(())
}

// ---------------------------------------------------------------- OBJ

fn obj_index(token: &str, count: usize) -> Option<usize> {
    let i: i64 = token.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return None;
    };
    (idx >= 0 && (idx as usize) < count).then_some(idx as usize)
}

/// Parse the `v` / `vn` / `f` subset of Wavefront OBJ. Polygons are
/// fan-triangulated. Other statements are ignored.
pub fn parse_obj(input: impl Read, path: &Path) -> Result<Mesh> {
    let err =
        |line: usize, message: String| Error::MeshLoad { path: path.to_path_buf(), line, message };
    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    // Source line and corners as (position index, normal index).
    type Polygon = (usize, Vec<(usize, Option<usize>)>);
    let mut polys: Vec<Polygon> = Vec::new();

    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| err(lineno, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(kw) = parts.next() else { continue };
        match kw {
            "v" | "vn" => {
                let vals: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(lineno, format!("malformed `{kw}` statement")))?;
                if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                    return Err(err(lineno, format!("`{kw}` needs three finite numbers")));
                }
                let v = Vector3::new(vals[0], vals[1], vals[2]);
                if kw == "v" {
                    positions.push(v);
                } else {
                    normals.push(v);
                }
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in parts {
                    let mut fields = tok.split('/');
                    let vi = fields
                        .next()
                        .and_then(|t| obj_index(t, positions.len()))
                        .ok_or_else(|| err(lineno, format!("bad vertex reference {tok:?}")))?;
                    let _texture = fields.next();
                    let ni =
                        match fields.next() {
                            Some("") | None => None,
                            Some(t) => Some(obj_index(t, normals.len()).ok_or_else(|| {
                                err(lineno, format!("bad normal reference {tok:?}"))
                            })?),
                        };
                    corners.push((vi, ni));
                }
                if corners.len() < 3 {
                    return Err(err(lineno, "face needs at least three vertices".into()));
                }
                polys.push((lineno, corners));
            }
            "vt" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => return Err(err(lineno, format!("unsupported statement `{other}`"))),
        }
    }
    if positions.is_empty() || polys.is_empty() {
        return Err(err(0, "no geometry".into()));
    }

    let uses_normals = polys.iter().any(|(_, c)| c.iter().any(|(_, n)| n.is_some()));
    let to_mesh = |r: Result<Mesh>| r.map_err(|e| err(0, e.to_string()));
    if !uses_normals {
        let faces = polys
            .iter()
            .flat_map(|(_, c)| fan(c.iter().map(|(v, _)| *v as u32).collect()))
            .collect();
        return to_mesh(Mesh::new(positions, None, faces));
    }

    let mut lookup = std::collections::HashMap::new();
    let mut verts = Vec::new();
    let mut vnorms = Vec::new();
    let mut faces = Vec::new();
    for (lineno, corners) in &polys {
        let mut ids = Vec::with_capacity(corners.len());
        for &(vi, ni) in corners {
            let ni = ni.ok_or_else(|| {
                err(*lineno, "face mixes corners with and without normals".into())
            })?;
            let id = *lookup.entry((vi, ni)).or_insert_with(|| {
                verts.push(positions[vi]);
                vnorms.push(normals[ni]);
                verts.len() as u32 - 1
            });
            ids.push(id);
        }
        faces.extend(fan(ids));
    }
    to_mesh(Mesh::new(verts, Some(vnorms), faces))
}

fn fan(ids: Vec<u32>) -> Vec<[u32; 3]> {
    (1..ids.len() - 1).map(|k| [ids[0], ids[k], ids[k + 1]]).collect()
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let f = File::open(path).map_err(|e| Error::MeshLoad {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_obj(f, path)
}

pub fn write_obj(mesh: &Mesh, mut out: impl Write) -> Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for n in mesh.vertex_normals() {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z)?;
    }
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| i + 1);
        writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}")?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- JSON

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- stacks

pub const STACK_MANIFEST: &str = "stack.json";

/// `stack.json`: filter angles and the PFM file holding each image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub angles_rad: Vec<f64>,
    pub images: Vec<String>,
}

pub fn write_stack(dir: &Path, stack: &FilterStack) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut images = Vec::new();
    for (k, img) in stack.images().iter().enumerate() {
        let name = format!("intensity_{k:02}.pfm");
        write_scalar_pfm(&dir.join(&name), img)?;
        images.push(name);
    }
    write_json(
        &dir.join(STACK_MANIFEST),
        &StackManifest { angles_rad: stack.angles().to_vec(), images },
    )
}

pub fn read_stack(dir: &Path) -> Result<FilterStack> {
    let manifest: StackManifest = read_json(&dir.join(STACK_MANIFEST))?;
    let images = manifest
        .images
        .iter()
        .map(|name| read_scalar_pfm(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    FilterStack::new(manifest.angles_rad, images)
}

// ---------------------------------------------------------------- CSV

/// One metric report row: `object,metric,value,threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub object: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
}

pub fn write_metrics_csv(rows: &[MetricRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "object,metric,value,threshold")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.object, r.metric, r.value, r.threshold)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_layout() {
        let pfm =
            Pfm { width: 4, height: 3, channels: 1, data: (0..12).map(|v| v as f32).collect() };
        let mut buf = Vec::new();
        pfm.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"Pf\n4 3\n-1.0\n"));
        assert_eq!(buf.len(), 12 + 12 * 4);
        // First stored row is the bottom image row.
        let first = f32::from_le_bytes(buf[12..16].try_into().unwrap());
        assert_eq!(first, 8.0);
        assert_eq!(Pfm::read_from(&buf[..]).unwrap(), pfm);
    }

    #[test]
    fn big_endian_pfm_is_accepted() {
        let mut buf = b"Pf\n2 2\n1.0\n".to_vec();
        // File order is bottom row first.
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            buf.extend_from_slice(&v.to_be_bytes());
        }
        let pfm = Pfm::read_from(&buf[..]).unwrap();
        assert_eq!(pfm.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn malformed_pfm_headers() {
        for bad in [
            &b"P6\n2 2\n-1.0\n"[..],
            b"Pf\n2\n",
            b"Pf\n2 x\n-1\n",
            b"Pf\n2 2\n0\n",
            b"Pf\n1 1\n-1.0\n\x00",
        ] {
            assert!(matches!(Pfm::read_from(bad), Err(Error::Format(_))), "{bad:?}");
        }
    }

    #[test]
    fn obj_quads_are_fan_triangulated() {
        let obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = parse_obj(obj.as_bytes(), Path::new("quad.obj")).unwrap();
        assert_eq!(m.faces().len(), 2);
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_with_normals_and_negative_indices() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 2\nf -3//1 -2//1 -1//1\n";
        let m = parse_obj(obj.as_bytes(), Path::new("t.obj")).unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert!(m.vertex_normals().iter().all(|n| *n == Vector3::z()));
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n";
        match parse_obj(obj.as_bytes(), Path::new("bad.obj")) {
            Err(Error::MeshLoad { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match parse_obj("v 1 2\n".as_bytes(), Path::new("bad.obj")) {
            Err(Error::MeshLoad { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(parse_obj("\u{1}\u{2}garbage\n".as_bytes(), Path::new("g.obj")).is_err());
    }

    #[test]
    fn visualization_mappings() {
        let n = normals_to_rgb(&Grid::filled(1, 1, Some(Vector3::z())));
        assert_eq!(n[0], [128, 128, 255]);
        assert_eq!(dop_to_rgb(&Grid::filled(1, 1, 0.0))[0], [0, 0, 0]);
        assert_eq!(dop_to_rgb(&Grid::filled(1, 1, 1.0))[0], [255, 255, 255]);
        assert_eq!(aop_to_rgb(&Grid::filled(1, 1, 0.0))[0], [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
    }
}
