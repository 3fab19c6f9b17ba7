//! Shape from polarization and polarimetric 6D pose refinement.
//!
//! The pipeline runs in both directions:
//!
//! * **forward / estimation**: a stack of polarizer-filtered intensities is
//!   fit per pixel for unpolarized intensity, degree and angle of
//!   polarization ([`polarimetry`]), and each pixel's polarization state is
//!   turned into diffuse and specular normal candidates ([`sfp`]);
//! * **inverse / synthesis**: a posed mesh is rasterized into normal,
//!   depth, mask and NOCS buffers ([`renderer`]), the normals are mapped to
//!   the analytic polarization they should produce ([`inverse_model`]), and
//!   the discrepancy against an observation drives pose refinement
//!   ([`refiner`]).
//!
//! [`losses`] holds the pose/geometry losses and ADD(-S) metrics, [`datagen`]
//! synthesizes test scenes and [`io`] covers the file formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod datagen;
pub mod error;
pub mod grid;
pub mod inverse_model;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod nelder_mead;
pub mod polarimetry;
pub mod pose;
pub mod refiner;
pub mod renderer;
pub mod sfp;

pub use camera::{Camera, ViewFrame};
pub use error::{Error, Result};
pub use grid::Grid;
pub use mesh::Mesh;
pub use polarimetry::{FilterStack, Material, PolarSample, ReflectionKind, ZenithSolutions};
pub use pose::Pose;
pub use renderer::GeometryBuffers;
