//! Pipeline-level checks against closed-form oracles: ray-sphere geometry,
//! noiseless shape-from-polarization, and the physics loss.

use nalgebra::{Rotation3, Vector3};
use polar6d::datagen::{synthesize_scene, NoiseConfig, ReflectionMode, SceneConfig};
use polar6d::inverse_model::{analytic_from_buffers, physics_loss};
use polar6d::mesh::shapes;
use polar6d::polarimetry::estimate_polarisation;
use polar6d::renderer::rasterize;
use polar6d::sfp::{ambiguous_angular_error, angle_between, plausible_normals};
use polar6d::{Camera, Grid, Material, Mesh, Pose};

fn camera() -> Camera {
    Camera::new(600.0, 600.0, 63.5, 63.5, 128, 128).unwrap()
}

fn blob_pose() -> Pose {
    let r = Rotation3::from_euler_angles(0.4, -0.7, 1.1);
    Pose::new(r, Vector3::new(0.004, -0.003, 0.45)).unwrap()
}

fn scene(mesh_pose: Pose, mode: ReflectionMode, sigma: f64) -> SceneConfig {
    let mut c = SceneConfig::new("unused.obj", mesh_pose, camera());
    c.reflection_mode = mode;
    c.noise = NoiseConfig { sigma, quantization_bits: None };
    c.seed = 17;
    c
}

/// Ray-sphere intersection: the nearest hit of the ray through each pixel.
fn sphere_normal(
    camera: &Camera,
    x: usize,
    y: usize,
    c: &Vector3<f64>,
    r: f64,
) -> Option<Vector3<f64>> {
    let d = camera.viewing_vector(x as f64, y as f64);
    let b = d.dot(c);
    let disc = b * b - (c.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let t = b - disc.sqrt();
    Some((d * t - c) / r)
}

#[test]
fn rendered_sphere_normals_match_ray_intersection() {
    let (radius, center) = (0.05, Vector3::new(0.01, -0.005, 0.4));
    let mesh = shapes::uv_sphere(radius, 64, 128);
    let pose = Pose::new(Rotation3::identity(), center).unwrap();
    let cam = camera();
    let buf = rasterize(&mesh, &pose, &cam);
    let mut errs = Vec::new();
    for y in 0..cam.height() {
        for x in 0..cam.width() {
            if let (Some(n), Some(truth)) =
                (buf.normals.get(x, y), sphere_normal(&cam, x, y, &center, radius))
            {
                // Skip grazing silhouette pixels, where the facetted outline
                // and the true sphere disagree about which rays hit.
                if truth.dot(&-cam.viewing_vector(x as f64, y as f64)) > 0.2 {
                    errs.push(angle_between(n, &truth));
                }
            }
        }
    }
    assert!(errs.len() > 1000);
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean.to_degrees() < 0.5, "mean {}°", mean.to_degrees());
}

#[test]
fn rendered_normals_face_the_camera() {
    let mesh = shapes::asymmetric_blob();
    let cam = camera();
    let buf = rasterize(&mesh, &blob_pose(), &cam);
    for y in 0..cam.height() {
        for x in 0..cam.width() {
            if let Some(n) = buf.normals.get(x, y) {
                assert!((n.norm() - 1.0).abs() < 1e-9);
                assert!(n.dot(&cam.viewing_vector(x as f64, y as f64)) < 0.05);
            }
        }
    }
}

fn sfp_errors(mesh: &Mesh, pose: Pose, sigma: f64) -> Vec<f64> {
    let config = scene(pose, ReflectionMode::Diffuse, sigma);
    let s = synthesize_scene(&config, mesh).unwrap();
    let polar = estimate_polarisation(&s.stack);
    let cam = camera();
    let normals = plausible_normals(&polar.samples, &polar.valid, config.eta, Some(&cam));
    let frames = cam.viewing_frames();
    (0..cam.width() * cam.height())
        .filter_map(|i| {
            let truth = s.buffers.normals[i]?;
            let est = normals.n_d[i]?;
            Some(ambiguous_angular_error(&frames[i], &est, &truth))
        })
        .collect()
}

#[test]
fn noiseless_diffuse_normals_round_trip() {
    let sphere_pose = Pose::new(Rotation3::identity(), Vector3::new(0.0, 0.0, 0.4)).unwrap();
    for (mesh, pose) in
        [(shapes::uv_sphere(0.05, 32, 64), sphere_pose), (shapes::asymmetric_blob(), blob_pose())]
    {
        let errs = sfp_errors(&mesh, pose, 0.0);
        assert!(errs.len() > 500);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean < 1e-3, "mean {mean}");
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[sorted.len() / 2] < 1e-4, "median {}", sorted[sorted.len() / 2]);
    }
}

#[test]
fn residual_grows_with_noise() {
    let mesh = shapes::asymmetric_blob();
    let mean_residual = |sigma| {
        let s =
            synthesize_scene(&scene(blob_pose(), ReflectionMode::Diffuse, sigma), &mesh).unwrap();
        let p = estimate_polarisation(&s.stack);
        p.residual.iter().sum::<f64>() / p.residual.len() as f64
    };
    let r: Vec<f64> = [0.0, 0.01, 0.05].into_iter().map(mean_residual).collect();
    assert!(r[0] < 1e-12, "{r:?}");
    assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
}

fn physics_at(mesh: &Mesh, gt: &Pose, eval: &Pose, mode: ReflectionMode) -> f64 {
    let config = scene(*gt, mode, 0.0);
    let s = synthesize_scene(&config, mesh).unwrap();
    let polar = estimate_polarisation(&s.stack);
    let cam = camera();
    let analytic = analytic_from_buffers(&rasterize(mesh, eval, &cam), &cam, Material::default());
    let (w, h) = (cam.width(), cam.height());
    let mask = Grid::from_fn(w, h, |x, y| *s.buffers.mask.get(x, y) && *polar.valid.get(x, y));
    physics_loss(&polar.dop(), &analytic, &mask).value
}

#[test]
fn physics_loss_vanishes_at_the_generating_pose() {
    let mesh = shapes::asymmetric_blob();
    for mode in
        [ReflectionMode::Diffuse, ReflectionMode::Specular, ReflectionMode::PerPixelMixed(0.5)]
    {
        let l = physics_at(&mesh, &blob_pose(), &blob_pose(), mode);
        assert!(l < 1e-9, "{mode:?}: {l}");
    }
}

#[test]
fn physics_loss_penalizes_rotated_poses() {
    let mesh = shapes::asymmetric_blob();
    let gt = blob_pose();
    for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
        let off = gt.perturbed(&(axis * 10f64.to_radians()), &Vector3::zeros()).unwrap();
        assert!(physics_at(&mesh, &gt, &off, ReflectionMode::Diffuse) > 1e-3);
    }
}

#[test]
fn true_pose_beats_every_sampled_perturbation() {
    // 100 seeded poses at least 5° away in rotation, up to 1 cm translation.
    use rand::{Rng, SeedableRng};
    let mesh = shapes::asymmetric_blob();
    let gt = blob_pose();
    let at_truth = physics_at(&mesh, &gt, &gt, ReflectionMode::Diffuse);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(5.0..30.0f64).to_radians();
        let shift = Vector3::new(
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
        );
        let off = gt.perturbed(&(axis * angle), &shift).unwrap();
        assert!(off.rotation_error(&gt) >= 5f64.to_radians() - 1e-12);
        assert!(at_truth <= physics_at(&mesh, &gt, &off, ReflectionMode::Diffuse));
    }
}
