use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use nalgebra::{Rotation3, Unit, Vector3};
use polar6d::io::Pfm;
use polar6d::losses::{
    add_metric, adds_metric, loss_rotation, offsets_to_pose, pose_to_offsets, Crop,
};
use polar6d::mesh::shapes;
use polar6d::polarimetry::{
    default_filter_angles, dop_diffuse, dop_specular, estimate_polarisation, forward_intensity,
    invert_dop, normal_from_angles, wrap_pi,
};
use polar6d::renderer::rasterize;
use polar6d::{Camera, FilterStack, Grid, Material, Mesh, PolarSample, Pose};
use proptest::prelude::*;

fn blob() -> &'static Mesh {
    static MESH: OnceLock<Mesh> = OnceLock::new();
    MESH.get_or_init(shapes::asymmetric_blob)
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..PI).prop_filter_map(
        "degenerate axis",
        |(x, y, z, a)| {
            let v = Vector3::new(x, y, z);
            (v.norm() > 1e-3).then(|| Rotation3::from_axis_angle(&Unit::new_normalize(v), a))
        },
    )
}

fn pose() -> impl Strategy<Value = Pose> {
    (rotation(), -0.1..0.1f64, -0.1..0.1f64, 0.2..1.0f64)
        .prop_map(|(r, x, y, z)| Pose::new(r, Vector3::new(x, y, z)).unwrap())
}

fn material() -> impl Strategy<Value = Material> {
    (1.05..2.5f64).prop_map(|eta| Material::new(eta).unwrap())
}

fn angle_diff_mod_pi(a: f64, b: f64) -> f64 {
    let d = wrap_pi(a - b);
    d.min(PI - d)
}

proptest! {
    #[test]
    fn estimation_recovers_forward_model(i_un in 0.01..10.0f64, dop in 0.0..1.0f64, aop in 0.0..PI) {
        let s = PolarSample::new(i_un, dop, aop).unwrap();
        let angles = default_filter_angles();
        let images = angles.iter().map(|&a| Grid::filled(1, 1, forward_intensity(&s, a))).collect();
        let map = estimate_polarisation(&FilterStack::new(angles, images).unwrap());
        let got = map.samples[0];
        prop_assert!(map.valid[0]);
        prop_assert!((got.i_un - i_un).abs() < 1e-9 * i_un.max(1.0));
        prop_assert!((got.dop - dop).abs() < 1e-9);
        if dop > 1e-6 {
            prop_assert!(angle_diff_mod_pi(got.aop, aop) < 1e-9 / dop.clamp(1e-3, 1.0));
        }
    }

    #[test]
    fn diffuse_dop_is_monotone(a in 0.0..FRAC_PI_2, b in 0.0..FRAC_PI_2, m in material()) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(dop_diffuse(lo, m) <= dop_diffuse(hi, m));
    }

    #[test]
    fn inversion_undoes_the_fresnel_curves(theta in 0.0..FRAC_PI_2, m in material()) {
        let d = invert_dop(dop_diffuse(theta, m), m).theta_d.unwrap();
        prop_assert!((d - theta).abs() < 1e-7);

        let zs = invert_dop(dop_specular(theta, m), m);
        let root = if theta <= m.brewster_angle() { zs.theta_s1 } else { zs.theta_s2 };
        // The specular curve is flat at Brewster, where the inverse loses
        // half its digits.
        let tol = if (theta - m.brewster_angle()).abs() < 1e-3 { 1e-6 } else { 1e-7 };
        prop_assert!((root.unwrap() - theta).abs() < tol);
    }

    #[test]
    fn zenith_solutions_are_ordered(rho in 0.0..1.0f64, m in material()) {
        let z = invert_dop(rho, m);
        if let (Some(s1), Some(s2)) = (z.theta_s1, z.theta_s2) {
            prop_assert!(0.0 <= s1 && s1 <= m.brewster_angle() && m.brewster_angle() <= s2 && s2 <= FRAC_PI_2);
        }
        if let Some(d) = z.theta_d {
            prop_assert!((0.0..=FRAC_PI_2).contains(&d));
        }
    }

    #[test]
    fn normals_are_unit(az in -10.0..10.0f64, zen in 0.0..FRAC_PI_2) {
        prop_assert!((normal_from_angles(az, zen).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adds_never_exceeds_add(a in pose(), b in pose()) {
        let mesh = blob();
        prop_assert!(adds_metric(&a, &b, mesh) <= add_metric(&a, &b, mesh) + 1e-15);
    }

    #[test]
    fn add_is_a_symmetric_distance(a in pose(), b in pose()) {
        let mesh = blob();
        prop_assert_eq!(add_metric(&a, &a, mesh), 0.0);
        prop_assert!((add_metric(&a, &b, mesh) - add_metric(&b, &a, mesh)).abs() < 1e-15);
    }

    #[test]
    fn rotation_loss_ignores_listed_symmetries(r in rotation(), s_angle in 0.0..(2.0 * PI)) {
        let s = Rotation3::from_axis_angle(&Vector3::z_axis(), s_angle);
        let mesh = blob().clone().with_symmetries(vec![s, s.inverse()]).unwrap();
        prop_assert!(loss_rotation(&(r * s), &r, &mesh) < 1e-12);
        prop_assert!(loss_rotation(&r, &r, &mesh) == 0.0);
    }

    #[test]
    fn center_offsets_round_trip(p in pose(), cx in 0.0..640.0f64, cy in 0.0..480.0f64, size in 16.0..400.0f64) {
        let cam = Camera::new(600.0, 610.0, 320.0, 240.0, 640, 480).unwrap();
        let crop = Crop { cx, cy, size };
        let off = pose_to_offsets(&p, &cam, &crop).unwrap();
        let back = offsets_to_pose(&off, *p.rotation(), &cam, &crop).unwrap();
        prop_assert!(back.translation_error(&p) < 1e-9);
    }

    #[test]
    fn pfm_round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, channels in prop::sample::select(vec![1usize, 3]), seed in any::<u64>()) {
        let data: Vec<f32> = (0..w * h * channels)
            .map(|i| f32::from_bits((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 32) as u32))
            .map(|v| if v.is_finite() { v } else { 0.5 })
            .collect();
        let pfm = Pfm { width: w, height: h, channels, data };
        let mut bytes = Vec::new();
        pfm.write_to(&mut bytes).unwrap();
        let back = Pfm::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), pfm.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn in_plane_rotation_rotates_the_mask() {
    // With the principal point at the image center, a quarter turn about
    // the optical axis is a quarter turn of the image.
    let cam = Camera::new(500.0, 500.0, 47.5, 47.5, 96, 96).unwrap();
    let base = Pose::new(Rotation3::from_euler_angles(0.3, 0.5, 0.2), Vector3::new(0.0, 0.0, 0.4))
        .unwrap();
    let turned = base.rotated_about_camera(&Vector3::z_axis(), FRAC_PI_2).unwrap();
    let a = rasterize(blob(), &base, &cam).mask;
    let b = rasterize(blob(), &turned, &cam).mask;
    let mut mismatches = 0;
    let mut area = 0;
    for y in 0..96 {
        for x in 0..96 {
            // Camera-frame rotation by +90° about z maps (x, y) → (−y, x)
            // relative to the principal point.
            let (u, v) = (95 - y, x);
            area += *a.get(x, y) as usize;
            mismatches += (*a.get(x, y) != *b.get(u, v)) as usize;
        }
    }
    assert!(area > 500);
    // Only pixel centers exactly on an edge can change owner.
    assert!(mismatches * 200 < area, "{mismatches} of {area}");
}
