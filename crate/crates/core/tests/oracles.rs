//! Checks against independently computed reference values.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use nearfield::metrics::misfocus_loss_db;
use nearfield::{
    build_upa, conjugate_focus, farfield_steering, field_scan, focal_drift, fraunhofer_distance,
    frequency_flat_focus, max_phase_deviation, nearfield_los, received_power, steer, wideband,
    Carrier, Plane, ScanSpec, SearchAxis, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const F: f64 = 28e9;

fn ka() -> Carrier {
    Carrier::new(F).unwrap()
}

#[test]
fn upa_matches_brute_force_enumeration() {
    let c = ka();
    let lam = c.wavelength();
    for (length, width, spacing) in [(0.8, 0.4, 1.0), (0.1, 0.03, 0.5), (0.05, 0.0, 1.3)] {
        let a = build_upa(length, width, spacing, c, Vec3::ORIGIN).unwrap();
        let step = spacing * lam;
        let nx = (length / step + 1e-9).floor() as usize + 1;
        let ny = (width / step + 1e-9).floor() as usize + 1;
        assert_eq!(a.len(), nx * ny, "{length} x {width} at {spacing} λ");

        let mut expected = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                expected.push(Vec3::new(
                    (ix as f64 - (nx - 1) as f64 / 2.0) * step,
                    (iy as f64 - (ny - 1) as f64 / 2.0) * step,
                    0.0,
                ));
            }
        }
        for (got, want) in a.elements().iter().zip(&expected) {
            assert!(got.distance(*want) < 1e-12, "{got:?} vs {want:?}");
        }

        let mut widest = 0.0_f64;
        for p in &expected {
            for q in &expected {
                widest = widest.max(p.distance(*q));
            }
        }
        assert_relative_eq!(a.aperture(), widest, max_relative = 1e-12);
    }
}

#[test]
fn paper_array_size_and_aperture() {
    let a = build_upa(0.8, 0.4, 1.0, ka(), Vec3::ORIGIN).unwrap();
    assert_eq!(a.len(), 75 * 38);
    let lam = ka().wavelength();
    assert_relative_eq!(a.aperture(), (74.0_f64).hypot(37.0) * lam, max_relative = 1e-12);
    let df = fraunhofer_distance(a.aperture(), ka()).unwrap();
    assert_relative_eq!(df, 146.58, max_relative = 1e-3);
}

/// Exact per-element phase error of the plane-wave model, taken by brute
/// force, and its second-order (Fresnel) expansion `k |p⊥|² / 2r`.
fn phase_error_oracle(points: &[Vec3], target: Vec3, k: f64) -> (f64, f64) {
    let r = target.norm();
    let u = target * (1.0 / r);
    let mut exact = 0.0_f64;
    let mut fresnel = 0.0_f64;
    for p in points {
        let d = p.distance(target);
        exact = exact.max((k * (d - (r - p.dot(u)))).abs());
        let along = p.dot(u);
        fresnel = fresnel.max(k * (p.dot(*p) - along * along) / (2.0 * r));
    }
    (exact, fresnel)
}

#[test]
fn phase_deviation_matches_direct_evaluation_and_fresnel_expansion() {
    let c = ka();
    let a = build_upa(0.3, 0.2, 1.0, c, Vec3::ORIGIN).unwrap();
    let df = fraunhofer_distance(a.aperture(), c).unwrap();
    for target in [
        Vec3::new(0.0, 0.0, df),
        Vec3::new(0.0, 0.0, 3.0 * df),
        Vec3::new(0.3 * df, -0.2 * df, df),
    ] {
        let got = max_phase_deviation(&a, target).unwrap();
        let (exact, fresnel) = phase_error_oracle(a.elements(), target, c.wavenumber());
        assert_relative_eq!(got, exact, max_relative = 1e-6);
        assert_relative_eq!(got, fresnel, max_relative = 1e-2);
    }
}

#[test]
fn steering_error_at_one_kilometer() {
    let c = ka();
    let a = build_upa(0.8, 0.4, 1.0, c, Vec3::ORIGIN).unwrap();
    let target = Vec3::new(0.0, 0.0, 1000.0);
    let near = nearfield_los(&a, target, F).unwrap();
    let far = farfield_steering(&a, Vec3::new(0.0, 0.0, 1.0), 1000.0, F).unwrap();
    let gap = near
        .gains
        .iter()
        .zip(&far.gains)
        .map(|(x, y)| (x * y.conj()).arg().abs())
        .fold(0.0, f64::max);
    // corner element: k (D/2)² / 2r
    let oracle = c.wavenumber() * (a.aperture() / 2.0).powi(2) / 2000.0;
    assert_relative_eq!(gap, oracle, max_relative = 1e-3);
    assert!(gap < 0.06, "{gap}");
}

#[test]
fn steering_recovers_focusing_gain_deep_in_far_field() {
    let c = ka();
    let a = build_upa(0.2, 0.1, 1.0, c, Vec3::ORIGIN).unwrap();
    let df = fraunhofer_distance(a.aperture(), c).unwrap();
    let u = Vec3::new(0.28, 0.0, 0.96);
    let target = u * (10.0 * df);
    let h = nearfield_los(&a, target, F).unwrap();
    let mrt = received_power(&h, conjugate_focus(&h, 1.0).unwrap().column(0)).unwrap();
    let st = received_power(&h, steer(&a, u, 10.0 * df, F, 1.0).unwrap().column(0)).unwrap();
    assert!(st <= mrt * (1.0 + 1e-12));
    assert!(st >= 0.99 * mrt, "steering keeps {:.4} of the focusing gain", st / mrt);
}

#[test]
fn steering_falls_short_of_focusing_in_the_near_field() {
    let a = build_upa(0.8, 0.4, 1.0, ka(), Vec3::ORIGIN).unwrap();
    let target = Vec3::new(0.0, 0.0, 10.0);
    let h = nearfield_los(&a, target, F).unwrap();
    let mrt = received_power(&h, conjugate_focus(&h, 1.0).unwrap().column(0)).unwrap();
    let st = received_power(
        &h,
        steer(&a, Vec3::new(0.0, 0.0, 1.0), 10.0, F, 1.0).unwrap().column(0),
    )
    .unwrap();
    assert!(st < 0.5 * mrt, "ratio {}", st / mrt);
}

#[test]
fn mrt_dominates_random_precoders_on_the_paper_array() {
    let a = build_upa(0.8, 0.4, 1.0, ka(), Vec3::ORIGIN).unwrap();
    let h = nearfield_los(&a, Vec3::new(0.5, -0.3, 12.0), F).unwrap();
    let power = 0.01;
    let best = received_power(&h, conjugate_focus(&h, power).unwrap().column(0)).unwrap();
    assert_relative_eq!(best, power * h.norm_sqr(), max_relative = 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let mut w: Vec<_> = (0..a.len())
            .map(|_| nearfield::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w.iter_mut().for_each(|z| *z *= power.sqrt() / n);
        assert!(received_power(&h, &w).unwrap() < best);
    }
}

#[test]
fn focused_scan_peaks_at_a_shallow_focus() {
    // With a large Fresnel number (D/2)²/(λF) ≈ 7.5 the focal spot sits on
    // the design point; at small Fresnel numbers it slides toward the array.
    let c = ka();
    let a = build_upa(0.4, 0.4, 1.0, c, Vec3::ORIGIN).unwrap();
    let focus = Vec3::new(0.0, 0.0, 0.5);
    let h = nearfield_los(&a, focus, F).unwrap();
    let w = conjugate_focus(&h, 1.0).unwrap();
    let spec = ScanSpec {
        plane: Plane::Xz,
        ranges: [[-0.25, 0.25], [0.25, 0.75]],
        resolution: [51, 51],
        level: 0.0,
    };
    let scan = field_scan(&a, w.column(0), &spec, F).unwrap();
    let (i, j) = scan.argmax();
    let (x, z) = (spec.coordinate(0, i), spec.coordinate(1, j));
    assert!(x.abs() <= spec.step(0) + 1e-12, "x = {x}");
    assert!((z - 0.5).abs() <= spec.step(1) + 1e-12, "z = {z}");
    assert_relative_eq!(scan.normalized_at(i, j), 1.0);
}

#[test]
fn frequency_flat_focus_drifts_off_band_center() {
    let c = ka();
    let a = build_upa(0.3, 0.3, 1.0, c, Vec3::ORIGIN).unwrap();
    let target = Vec3::new(0.0, 0.0, 4.0);
    let band = wideband(&a, target, F, 2e9, 5).unwrap();
    let w = frequency_flat_focus(&band.subcarriers[2].1, 1.0).unwrap();
    let axis = SearchAxis {
        direction: Vec3::new(0.0, 0.0, 1.0),
        start: 2.0,
        stop: 8.0,
    };
    let drift = focal_drift(&a, &band, w.column(0), axis).unwrap();
    assert!(drift[2].1.abs() < 1e-4, "{:?}", drift[2]);
    assert!(drift[0].1 * drift[4].1 < 0.0, "{drift:?}");
    // The focal depth scales with frequency; the lower band edge focuses
    // nearer. Both edges move by at least a millimeter here.
    assert!(drift[0].1 < -1e-3 && drift[4].1 > 1e-3, "{drift:?}");
    let loss = misfocus_loss_db(&band, w.column(0)).unwrap();
    assert_eq!(loss[2].1, 0.0);
    assert!(loss.iter().all(|(_, l)| *l >= 0.0));
    assert!(loss[0].1 > loss[1].1 && loss[4].1 > loss[3].1);
}

#[test]
fn carrier_wavelength_reference() {
    assert_relative_eq!(ka().wavelength(), 0.010_706_873_5, max_relative = 1e-8);
    assert_relative_eq!(ka().wavenumber(), 2.0 * PI / ka().wavelength());
}
