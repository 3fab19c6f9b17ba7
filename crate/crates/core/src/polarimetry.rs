//! Per-pixel polarimetric physics.
//!
//! The linear-polarizer image formation model is
//! `I(φ_pol) = I_un · (1 + ρ · cos(2(φ − φ_pol)))`, where `ρ` is the degree
//! of polarization (DoP) and `φ` the angle of polarization (AoP). Expanding
//! the cosine gives a model that is linear in `(a0, a1, a2)`:
//! `I = a0 + a1·cos(2φ_pol) + a2·sin(2φ_pol)`, which is what
//! [`estimate_polarisation`] solves per pixel.
//!
//! The zenith angle of the surface normal relates to DoP through the
//! Fresnel-derived diffuse and specular curves [`dop_diffuse`] and
//! [`dop_specular`]; [`invert_dop`] recovers the (up to three) zenith angles
//! compatible with a measured DoP.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Bisection stops once the bracket is narrower than this (radians).
pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITERS: usize = 200;

/// Relative threshold below which a pixel's mean intensity is treated as
/// degenerate, as a fraction of the brightest value in the stack.
pub const DEGENERATE_FRACTION: f64 = 1e-6;

/// Modulation amplitudes below this fraction of the mean are reported as
/// unpolarized.
pub const UNMODULATED_FRACTION: f64 = 1e-12;

pub const DEFAULT_ETA: f64 = 1.5;

/// Recovered polarization state of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarSample {
    /// Unpolarized intensity.
    pub i_un: f64,
    /// Degree of polarization in `[0, 1]`.
    pub dop: f64,
    /// Angle of polarization in `[0, π)`.
    pub aop: f64,
}

impl PolarSample {
    pub fn new(i_un: f64, dop: f64, aop: f64) -> Result<Self> {
        if !(i_un.is_finite() && i_un >= 0.0) {
            return Err(Error::invalid(format!("i_un must be >= 0, got {i_un}")));
        }
        if !(0.0..=1.0).contains(&dop) {
            return Err(Error::invalid(format!("dop must lie in [0, 1], got {dop}")));
        }
        if !aop.is_finite() {
            return Err(Error::invalid("aop must be finite"));
        }
        Ok(Self { i_un, dop, aop: wrap_pi(aop) })
    }
}

/// Reduce an angle to `[0, π)`.
pub fn wrap_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    // rem_euclid may round up to exactly π for tiny negative inputs.
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let tau = 2.0 * PI;
    let r = angle.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

/// Refractive index of a dielectric material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Material {
    eta: f64,
}

impl Material {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 1.0 && eta <= 3.0) {
            return Err(Error::invalid(format!("refractive index must lie in (1, 3], got {eta}")));
        }
        Ok(Self { eta })
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Incidence angle at which specular reflection is fully polarized.
    pub fn brewster_angle(&self) -> f64 {
        self.eta.atan()
    }
}

impl Default for Material {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA }
    }
}

impl TryFrom<f64> for Material {
    type Error = Error;

    fn try_from(eta: f64) -> Result<Self> {
        Material::new(eta)
    }
}

impl From<Material> for f64 {
    fn from(m: Material) -> f64 {
        m.eta
    }
}

/// A set of intensity images taken through a linear polarizer at distinct
/// filter angles.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStack {
    angles: Vec<f64>,
    images: Vec<Grid<f64>>,
}

impl FilterStack {
    pub fn new(angles: Vec<f64>, images: Vec<Grid<f64>>) -> Result<Self> {
        if angles.len() != images.len() {
            return Err(Error::invalid(format!(
                "{} filter angles but {} images",
                angles.len(),
                images.len()
            )));
        }
        if angles.len() < 3 {
            return Err(Error::invalid("a filter stack needs at least 3 angles"));
        }
        for (i, &a) in angles.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::invalid("filter angles must be finite"));
            }
            for &b in &angles[..i] {
                let d = wrap_pi(a - b);
                if d.min(PI - d) <= 1e-6 {
                    return Err(Error::invalid(format!(
                        "filter angles {b} and {a} coincide modulo π"
                    )));
                }
            }
        }
        let (w, h) = (images[0].width(), images[0].height());
        for img in &images {
            if img.width() != w || img.height() != h {
                return Err(Error::invalid("filter images differ in size"));
            }
            if img.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("filter intensities must be finite and non-negative"));
            }
        }
        Ok(Self { angles, images })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn images(&self) -> &[Grid<f64>] {
        &self.images
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }
}

/// The default four-angle polarizer layout `{0, π/4, π/2, 3π/4}`.
pub fn default_filter_angles() -> Vec<f64> {
    vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]
}

/// Intensity observed behind a linear polarizer at angle `phi_pol`.
#[inline]
pub fn forward_intensity(sample: &PolarSample, phi_pol: f64) -> f64 {
    sample.i_un * (1.0 + sample.dop * (2.0 * (sample.aop - phi_pol)).cos())
}

/// Per-pixel output of [`estimate_polarisation`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarMap {
    pub samples: Grid<PolarSample>,
    /// RMS difference between the observed intensities and the forward
    /// model of the returned (clamped) sample.
    pub residual: Grid<f64>,
    /// `false` where the pixel was degenerate (mean intensity ~ 0).
    pub valid: Grid<bool>,
}

impl PolarMap {
    pub fn width(&self) -> usize {
        self.samples.width()
    }

    pub fn height(&self) -> usize {
        self.samples.height()
    }

    pub fn dop(&self) -> Grid<f64> {
        self.samples.map(|s| s.dop)
    }

    pub fn aop(&self) -> Grid<f64> {
        self.samples.map(|s| s.aop)
    }

    pub fn i_un(&self) -> Grid<f64> {
        self.samples.map(|s| s.i_un)
    }
}

/// Closed-form least-squares fit of `(I_un, ρ, φ)` for every pixel of the
/// stack.
pub fn estimate_polarisation(stack: &FilterStack) -> PolarMap {
    let angles = stack.angles();
    let k = angles.len();

    // Rows of the design matrix are [1, cos 2φ_pol, sin 2φ_pol]; the same for
    // every pixel, so the pseudo-inverse is computed once.
    let rows: Vec<Vector3<f64>> =
        angles.iter().map(|&a| Vector3::new(1.0, (2.0 * a).cos(), (2.0 * a).sin())).collect();
    let mut normal = Matrix3::zeros();
    for r in &rows {
        normal += r * r.transpose();
    }
    let normal_inv = normal.try_inverse().expect("distinct filter angles give a full-rank design");
    let pinv_cols: Vec<Vector3<f64>> = rows.iter().map(|r| normal_inv * r).collect();

    let max_intensity =
        stack.images().iter().flat_map(|img| img.iter().copied()).fold(0.0_f64, f64::max);
    let eps = DEGENERATE_FRACTION * max_intensity;

    let (w, h) = (stack.width(), stack.height());
    let n = w * h;
    let mut samples = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut obs = vec![0.0; k];

    for p in 0..n {
        for (o, img) in obs.iter_mut().zip(stack.images()) {
            *o = img[p];
        }
        let mut coef = Vector3::zeros();
        for (c, &o) in pinv_cols.iter().zip(&obs) {
            coef += c * o;
        }
        let (a0, a1, a2) = (coef[0], coef[1], coef[2]);

        let modulation = a1.hypot(a2);
        let sample = if a0 <= 0.0 || a0 < eps {
            valid.push(false);
            PolarSample { i_un: a0.max(0.0), dop: 0.0, aop: 0.0 }
        } else if modulation <= UNMODULATED_FRACTION * a0 {
            // Phase of a rounding-level modulation is meaningless.
            valid.push(true);
            PolarSample { i_un: a0, dop: 0.0, aop: 0.0 }
        } else {
            valid.push(true);
            PolarSample {
                i_un: a0,
                dop: (modulation / a0).min(1.0),
                aop: wrap_pi(0.5 * a2.atan2(a1)),
            }
        };

        let sq: f64 = angles
            .iter()
            .zip(&obs)
            .map(|(&a, &o)| {
                let e = o - forward_intensity(&sample, a);
                e * e
            })
            .sum();
        residual.push((sq / k as f64).sqrt());
        samples.push(sample);
    }

    PolarMap {
        samples: Grid::from_vec(w, h, samples).unwrap(),
        residual: Grid::from_vec(w, h, residual).unwrap(),
        valid: Grid::from_vec(w, h, valid).unwrap(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionKind {
    Diffuse,
    Specular,
}

/// Both azimuth representatives in `[0, 2π)` compatible with an AoP.
///
/// Diffuse reflection polarizes along the azimuth (`φ = α`); specular
/// reflection is offset by a quarter turn (`φ = α − π/2`). Either way the
/// azimuth is only known modulo π.
pub fn aop_to_azimuth(aop: f64, kind: ReflectionKind) -> [f64; 2] {
    let base = match kind {
        ReflectionKind::Diffuse => aop,
        ReflectionKind::Specular => aop + FRAC_PI_2,
    };
    [wrap_two_pi(base), wrap_two_pi(base + PI)]
}

/// AoP produced by a surface with azimuth `azimuth`, reduced to `[0, π)`.
pub fn azimuth_to_aop(azimuth: f64, kind: ReflectionKind) -> f64 {
    match kind {
        ReflectionKind::Diffuse => wrap_pi(azimuth),
        ReflectionKind::Specular => wrap_pi(azimuth - FRAC_PI_2),
    }
}

/// Degree of polarization of diffusely reflected light at zenith `theta`.
pub fn dop_diffuse(theta: f64, material: Material) -> f64 {
    let eta = material.eta();
    let s2 = theta.sin().powi(2);
    let c = theta.cos();
    let num = (eta - 1.0 / eta).powi(2) * s2;
    let den =
        2.0 + 2.0 * eta * eta - (eta + 1.0 / eta).powi(2) * s2 + 4.0 * c * (eta * eta - s2).sqrt();
    num / den
}

/// Degree of polarization of specularly reflected light at zenith `theta`.
pub fn dop_specular(theta: f64, material: Material) -> f64 {
    let eta = material.eta();
    let s2 = theta.sin().powi(2);
    let c = theta.cos();
    let num = 2.0 * s2 * c * (eta * eta - s2).sqrt();
    let den = eta * eta - s2 - eta * eta * s2 + 2.0 * s2 * s2;
    num / den
}

pub fn dop_for(kind: ReflectionKind, theta: f64, material: Material) -> f64 {
    match kind {
        ReflectionKind::Diffuse => dop_diffuse(theta, material),
        ReflectionKind::Specular => dop_specular(theta, material),
    }
}

/// Zenith angles compatible with one DoP measurement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZenithSolutions {
    pub theta_d: Option<f64>,
    pub theta_s1: Option<f64>,
    pub theta_s2: Option<f64>,
}

/// Root of a monotone function on `[lo, hi]`. `increasing` selects the
/// direction; `target` must lie between `f(lo)` and `f(hi)`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64, increasing: bool) -> f64 {
    // Endpoint values like cos(π/2) are only zero up to rounding.
    if (f(lo) - target).abs() <= f64::EPSILON {
        return lo;
    }
    if (f(hi) - target).abs() <= f64::EPSILON {
        return hi;
    }
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let below = f(mid) < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Slack for DoP values that exceed a curve maximum by rounding only.
const DOP_MAX_SLACK: f64 = 1e-12;

/// Invert the diffuse and specular DoP curves.
///
/// The diffuse curve is monotone on `[0, π/2]` and yields at most one
/// root. The specular curve rises to 1 at the Brewster angle and falls
/// back to 0 at grazing incidence, so it yields two roots
/// `theta_s1 ≤ θ_B ≤ theta_s2`.
pub fn invert_dop(rho: f64, material: Material) -> ZenithSolutions {
    let mut out = ZenithSolutions::default();
    if !(0.0..=1.0).contains(&rho) {
        return out;
    }

    let diffuse = |t: f64| dop_diffuse(t, material);
    let d_max = diffuse(FRAC_PI_2);
    if rho <= d_max {
        out.theta_d = Some(bisect(diffuse, 0.0, FRAC_PI_2, rho, true));
    } else if rho <= d_max + DOP_MAX_SLACK {
        out.theta_d = Some(FRAC_PI_2);
    }

    let specular = |t: f64| dop_specular(t, material);
    let brewster = material.brewster_angle();
    let s_max = specular(brewster);
    if rho >= s_max {
        out.theta_s1 = Some(brewster);
        out.theta_s2 = Some(brewster);
    } else {
        out.theta_s1 = Some(bisect(specular, 0.0, brewster, rho, true));
        out.theta_s2 = Some(bisect(specular, brewster, FRAC_PI_2, rho, false));
    }
    out
}

/// Unit normal from azimuth and zenith, in a frame whose `z` axis points
/// from the surface toward the viewer.
#[inline]
pub fn normal_from_angles(azimuth: f64, zenith: f64) -> Vector3<f64> {
    let (sa, ca) = azimuth.sin_cos();
    let (st, ct) = zenith.sin_cos();
    Vector3::new(ca * st, sa * st, ct)
}
