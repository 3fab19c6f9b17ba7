//! Analysis-by-synthesis pose refinement.
//!
//! A pose hypothesis is rendered, converted to analytic DoP by the inverse
//! model, and scored against the observed DoP with the physics loss plus a
//! silhouette IoU term. The six pose parameters (rotation increment as an
//! axis-angle vector in the object frame, translation offset in the camera
//! frame) are optimized with Nelder–Mead.

use std::io::Write;

use nalgebra::{DMatrix, SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inverse_model::{analytic_from_buffers, physics_loss, PhysicsLoss};
use crate::losses::LossWeights;
use crate::mesh::Mesh;
use crate::nelder_mead::{self, NelderMeadOptions, Termination};
use crate::polarimetry::Material;
use crate::pose::Pose;
use crate::renderer::rasterize;

/// Base penalty for a hypothesis whose render does not overlap the
/// observation; `w_mask_iou` is added on top.
pub const EMPTY_OVERLAP_PENALTY: f64 = 10.0;

/// What the refiner compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Observed degree of polarization.
    pub rho: Grid<f64>,
    /// `false` where the polarization estimate was degenerate.
    pub estimate_valid: Grid<bool>,
    /// Object silhouette (e.g. from a detector or the synthetic ground truth).
    pub object_mask: Grid<bool>,
}

impl Observation {
    fn check(&self, camera: &Camera) -> Result<()> {
        let ok = |w: usize, h: usize| w == camera.width() && h == camera.height();
        if !ok(self.rho.width(), self.rho.height())
            || !self.rho.same_shape(&self.estimate_valid)
            || !self.rho.same_shape(&self.object_mask)
        {
            return Err(Error::invalid("observation maps must match the camera resolution"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub physics: PhysicsLoss,
    pub iou: f64,
}

impl ObjectiveValue {
    pub fn is_empty_overlap(&self) -> bool {
        self.physics.is_empty_overlap()
    }
}

pub fn mask_iou(a: &Grid<bool>, b: &Grid<bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b.iter()) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Physics loss plus `w_mask_iou · (1 − IoU)` for one pose hypothesis.
pub fn objective(
    pose: &Pose,
    observation: &Observation,
    mesh: &Mesh,
    camera: &Camera,
    material: Material,
    weights: &LossWeights,
) -> ObjectiveValue {
    let buffers = rasterize(mesh, pose, camera);
    let analytic = analytic_from_buffers(&buffers, camera, material);
    let loss_mask = Grid::from_fn(camera.width(), camera.height(), |x, y| {
        *observation.object_mask.get(x, y) && *observation.estimate_valid.get(x, y)
    });
    let physics = physics_loss(&observation.rho, &analytic, &loss_mask);
    let iou = mask_iou(&buffers.mask, &observation.object_mask);
    let total = if physics.is_empty_overlap() {
        EMPTY_OVERLAP_PENALTY + weights.w_mask_iou
    } else {
        physics.value + weights.w_mask_iou * (1.0 - iou)
    };
    ObjectiveValue { total, physics, iou }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Rotation scale of one simplex unit, radians.
    pub rot_init_scale: f64,
    /// Translation scale of one simplex unit, meters.
    pub trans_init_scale: f64,
    pub restarts: usize,
    pub seed: u64,
    pub w_mask_iou: f64,
    pub convergence_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: 400,
            rot_init_scale: 0.2,
            trans_init_scale: 0.03,
            restarts: 3,
            seed: 0,
            w_mask_iou: 1.0,
            convergence_tol: 1e-9,
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 || self.restarts < 1 {
            return Err(Error::invalid("max_iters and restarts must be at least 1"));
        }
        if !(self.rot_init_scale > 0.0 && self.trans_init_scale > 0.0) {
            return Err(Error::invalid("simplex scales must be positive"));
        }
        if !(self.w_mask_iou >= 0.0 && self.w_mask_iou.is_finite()) {
            return Err(Error::invalid("w_mask_iou must be finite and non-negative"));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::invalid("convergence_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineStatus {
    Converged,
    IterationLimit,
    EmptyOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Best objective value so far.
    pub loss: f64,
    /// Rotation of the best pose relative to the initial one, radians.
    pub rot_err: f64,
    /// Translation of the best pose relative to the initial one, meters.
    pub trans_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub pose: Pose,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub trace: Vec<TraceEntry>,
    pub status: RefineStatus,
    /// Index of the restart that produced `pose`.
    pub restart: usize,
    pub evaluations: usize,
}

impl RefineResult {
    pub fn write_trace_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,loss,rot_err,trans_err")?;
        for t in &self.trace {
            writeln!(out, "{},{:e},{:e},{:e}", t.iteration, t.loss, t.rot_err, t.trans_err)?;
        }
        Ok(())
    }
}

type Params = SVector<f64, 6>;

fn params_to_pose(initial: &Pose, p: &Params, opts: &RefineOptions) -> Option<Pose> {
    let omega = Vector3::new(p[0], p[1], p[2]) * opts.rot_init_scale;
    let delta = Vector3::new(p[3], p[4], p[5]) * opts.trans_init_scale;
    initial.perturbed(&omega, &delta).ok()
}

/// Unit-length simplex edges along a random orthonormal basis.
fn seeded_edges(seed: u64) -> [Params; 6] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    std::array::from_fn(|i| Params::from_fn(|r, _| q[(r, i)]))
}

struct RestartOutcome {
    x: Params,
    f: f64,
    termination: Termination,
    evaluations: usize,
}

/// One Nelder–Mead run from `x0`, appending to `trace` with iteration
/// numbers continuing after the last entry.
fn run_restart(
    index: usize,
    x0: Params,
    initial: &Pose,
    score: &dyn Fn(&Pose) -> f64,
    opts: &RefineOptions,
    trace: &mut Vec<TraceEntry>,
) -> RestartOutcome {
    let penalty = EMPTY_OVERLAP_PENALTY + opts.w_mask_iou;
    let f = |p: &Params| match params_to_pose(initial, p, opts) {
        Some(pose) => score(&pose),
        None => penalty,
    };
    let nm =
        NelderMeadOptions { max_iters: opts.max_iters, f_tol: opts.convergence_tol, x_tol: 1e-3 };
    let offset = trace.last().map_or(0, |t| t.iteration);
    let edges = seeded_edges(opts.seed.wrapping_add(index as u64));
    let min = nelder_mead::minimize(f, x0, &edges, &nm, |it, x, fx| {
        let pose = params_to_pose(initial, x, opts).unwrap_or(*initial);
        trace.push(TraceEntry {
            iteration: offset + it,
            loss: fx,
            rot_err: pose.rotation_error(initial),
            trans_err: pose.translation_error(initial),
        });
    });
    RestartOutcome {
        x: min.x,
        f: min.f,
        termination: min.termination,
        evaluations: min.evaluations,
    }
}

/// Refine `initial` against `observation`. Restarts are chained: each one
/// begins at the best pose so far with a freshly oriented simplex, which
/// lets the search escape a collapsed simplex. Since every run keeps its
/// starting vertex unless something is strictly better, the objective
/// never increases.
pub fn refine(
    initial: &Pose,
    observation: &Observation,
    mesh: &Mesh,
    camera: &Camera,
    material: Material,
    opts: &RefineOptions,
) -> Result<RefineResult> {
    opts.validate()?;
    observation.check(camera)?;
    let weights = LossWeights { w_mask_iou: opts.w_mask_iou, ..LossWeights::default() };
    let score = |pose: &Pose| objective(pose, observation, mesh, camera, material, &weights).total;

    let init = objective(initial, observation, mesh, camera, material, &weights);
    if init.is_empty_overlap() {
        return Ok(RefineResult {
            pose: *initial,
            initial_loss: init.total,
            final_loss: init.total,
            trace: Vec::new(),
            status: RefineStatus::EmptyOverlap,
            restart: 0,
            evaluations: 1,
        });
    }

    let mut trace =
        vec![TraceEntry { iteration: 0, loss: init.total, rot_err: 0.0, trans_err: 0.0 }];
    let mut best = (Params::zeros(), init.total);
    let mut best_restart = 0;
    let mut evaluations = 1;
    let mut status = RefineStatus::IterationLimit;
    for index in 0..opts.restarts {
        let run = run_restart(index, best.0, initial, &score, opts, &mut trace);
        evaluations += run.evaluations;
        let improved = run.f < best.1;
        if improved {
            best = (run.x, run.f);
            best_restart = index;
        }
        status = match run.termination {
            Termination::Converged => RefineStatus::Converged,
            Termination::IterationLimit => RefineStatus::IterationLimit,
        };
        // A converged run that found nothing better leaves nothing to chain.
        if status == RefineStatus::Converged && !improved {
            break;
        }
    }

    let pose = params_to_pose(initial, &best.0, opts).expect("finite loss implies a valid pose");
    Ok(RefineResult {
        pose,
        initial_loss: init.total,
        final_loss: best.1,
        trace,
        status,
        restart: best_restart,
        evaluations,
    })
}
