//! Per-pixel plausible surface normals from a recovered polarization map.
//!
//! Each pixel yields up to three candidates: one from the diffuse DoP curve
//! and two from the specular curve. Normals are expressed in the camera
//! frame (`z` into the scene) and built in each pixel's local viewing
//! frame, so zenith is measured from the direction back toward the camera.

use nalgebra::Vector3;

use crate::camera::{Camera, ViewFrame};
use crate::grid::Grid;
use crate::polarimetry::{
    aop_to_azimuth, invert_dop, normal_from_angles, wrap_pi, Material, PolarSample, ReflectionKind,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleNormals {
    pub n_d: Grid<Option<Vector3<f64>>>,
    pub n_s1: Grid<Option<Vector3<f64>>>,
    pub n_s2: Grid<Option<Vector3<f64>>>,
}

impl PlausibleNormals {
    pub fn candidates(&self, i: usize) -> [Option<Vector3<f64>>; 3] {
        [self.n_d[i], self.n_s1[i], self.n_s2[i]]
    }
}

/// Viewing frames for `camera`, or the orthographic frame (`v = +z`) for
/// every pixel when no camera is given.
pub fn frames_for(camera: Option<&Camera>, width: usize, height: usize) -> Grid<ViewFrame> {
    match camera {
        Some(c) => c.viewing_frames(),
        None => Grid::filled(width, height, ViewFrame::new(Vector3::z())),
    }
}

/// Of the two azimuths compatible with `aop` for the given reflection
/// kind, the one in `[0, π)`.
fn stored_azimuth(aop: f64, kind: ReflectionKind) -> f64 {
    let [a, b] = aop_to_azimuth(aop, kind);
    if a < std::f64::consts::PI {
        a
    } else {
        wrap_pi(b)
    }
}

/// Assemble the diffuse and specular normal candidates of every pixel.
/// Pixels with `valid == false` get no candidates.
pub fn plausible_normals(
    polar: &Grid<PolarSample>,
    valid: &Grid<bool>,
    material: Material,
    camera: Option<&Camera>,
) -> PlausibleNormals {
    let (w, h) = (polar.width(), polar.height());
    let frames = frames_for(camera, w, h);
    let n = w * h;
    let mut n_d = Vec::with_capacity(n);
    let mut n_s1 = Vec::with_capacity(n);
    let mut n_s2 = Vec::with_capacity(n);
    for i in 0..n {
        if !valid[i] {
            n_d.push(None);
            n_s1.push(None);
            n_s2.push(None);
            continue;
        }
        let s = polar[i];
        let frame = &frames[i];
        let zen = invert_dop(s.dop, material);
        let build = |az: f64, theta: Option<f64>| {
            theta.map(|t| frame.to_camera(&normal_from_angles(az, t)))
        };
        let az_d = stored_azimuth(s.aop, ReflectionKind::Diffuse);
        let az_s = stored_azimuth(s.aop, ReflectionKind::Specular);
        n_d.push(build(az_d, zen.theta_d));
        n_s1.push(build(az_s, zen.theta_s1));
        n_s2.push(build(az_s, zen.theta_s2));
    }
    PlausibleNormals {
        n_d: Grid::from_vec(w, h, n_d).unwrap(),
        n_s1: Grid::from_vec(w, h, n_s1).unwrap(),
        n_s2: Grid::from_vec(w, h, n_s2).unwrap(),
    }
}

/// The other member of a normal's π-ambiguity pair: same zenith, azimuth
/// rotated by π in the viewing frame.
pub fn azimuth_flipped(frame: &ViewFrame, n: &Vector3<f64>) -> Vector3<f64> {
    let l = frame.to_local(n);
    frame.to_camera(&Vector3::new(-l.x, -l.y, l.z))
}

pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // atan2 form stays accurate for nearly parallel vectors.
    a.cross(b).norm().atan2(a.dot(b))
}

/// Angular error of an estimated normal, up to the azimuthal π-ambiguity.
pub fn ambiguous_angular_error(
    frame: &ViewFrame,
    estimate: &Vector3<f64>,
    truth: &Vector3<f64>,
) -> f64 {
    angle_between(estimate, truth).min(angle_between(&azimuth_flipped(frame, estimate), truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_dop_pixel() {
        let polar = Grid::filled(1, 1, PolarSample::new(1.0, 0.0, 0.0).unwrap());
        let pn = plausible_normals(&polar, &Grid::filled(1, 1, true), Material::default(), None);
        let toward_camera = Vector3::new(0.0, 0.0, -1.0);
        assert_eq!(pn.n_d[0], Some(toward_camera));
        assert_eq!(pn.n_s1[0], Some(toward_camera));
        // Grazing specular solution, azimuth aop + π/2.
        let s2 = pn.n_s2[0].unwrap();
        assert!((s2 - normal_from_angles(FRAC_PI_2, FRAC_PI_2)).norm() < 1e-12);
        assert!(s2.z.abs() < 1e-12);
    }

    #[test]
    fn degenerate_pixel_has_no_candidates() {
        let polar = Grid::filled(1, 1, PolarSample::default());
        let pn = plausible_normals(&polar, &Grid::filled(1, 1, false), Material::default(), None);
        assert_eq!(pn.candidates(0), [None, None, None]);
    }

    #[test]
    fn high_dop_has_no_diffuse_candidate() {
        let polar = Grid::filled(1, 1, PolarSample::new(1.0, 0.6, 0.4).unwrap());
        let pn = plausible_normals(&polar, &Grid::filled(1, 1, true), Material::default(), None);
        assert!(pn.n_d[0].is_none());
        for n in [pn.n_s1[0].unwrap(), pn.n_s2[0].unwrap()] {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_is_an_involution() {
        let f = ViewFrame::new(Vector3::new(0.2, -0.1, 1.0).normalize());
        let n = Vector3::new(0.3, 0.4, -0.8).normalize();
        let back = azimuth_flipped(&f, &azimuth_flipped(&f, &n));
        assert!((back - n).norm() < 1e-12);
        assert!(ambiguous_angular_error(&f, &azimuth_flipped(&f, &n), &n) < 1e-12);
    }
}
