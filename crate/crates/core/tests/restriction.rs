use std::f64::consts::PI;

use loewner_lab::flow::{FlowOptions, C};
use loewner_lab::hull::{self, SlitHull};
use loewner_lab::minimizers::one_point_minimizer;
use loewner_lab::restriction::*;
use loewner_lab::zipper::ZipOptions;
use loewner_lab::{DrivingFunction, Execution, LoewnerError};
use proptest::prelude::*;

fn par() -> Execution {
    Execution::Parallel
}

fn slit(base: f64, height: f64) -> SlitHull {
    SlitHull::VerticalSlit { base, height }
}

fn near_driver() -> DrivingFunction {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let tau = m.last_time();
    m.truncate(0.5 * tau)
}

fn far_driver() -> DrivingFunction {
    DrivingFunction::new(vec![0.0, 0.02, 0.05], vec![0.0, 0.1, -0.05]).unwrap()
}

#[test]
fn explicit_and_complex_step_derivatives_agree() {
    let k = slit(5.0, 1.0);
    let axis = DrivingFunction::zero(1.0);
    let opts = RestrictionOptions::default();
    let d = psi_derivatives(&k, &axis, 0.0, &opts).unwrap();
    // ψ₀′(0) = |x|/√(x² + h²) for the slit at x
    assert!((d.psi_prime - 5.0 / 26f64.sqrt()).abs() < 1e-14);
    let cs = psi_prime_complex_step(&k, &axis, 0.0, 1e-20, &opts).unwrap();
    assert!((cs - d.psi_prime).abs() < 1e-8, "{cs} vs {}", d.psi_prime);
    for t in [0.01, 1.0] {
        let d = psi_derivatives(&k, &axis, t, &opts).unwrap();
        let cs = psi_prime_complex_step(&k, &axis, t, 1e-20, &opts).unwrap();
        assert!((cs - d.psi_prime).abs() < 1e-8 * d.psi_prime);
    }
}

#[test]
fn zipped_derivatives_match_explicit_map() {
    // the hull flowed by the zero driver is the slit mapped by √(z² + 4t),
    // so the zipper must reproduce the explicit composition
    let opts = RestrictionOptions::default();
    for k in [slit(5.0, 1.0), slit(-2.0, 0.5), SlitHull::HalfDisk { center: 3.0, radius: 1.0 }] {
        let exact = k.psi_jet();
        let zipped = psi_jet_zipped(&k, &DrivingFunction::zero(1.0), 0.0, &opts).unwrap();
        for (a, b) in [(exact.d1, zipped.d1), (exact.d2, zipped.d2), (exact.d3, zipped.d3)] {
            assert!((a - b).norm() < 1e-6 * a.norm().max(1e-3), "{k:?}: {a} vs {b}");
        }
    }
}

#[test]
fn far_hull_is_nearly_invisible() {
    let d = psi_derivatives(&slit(50.0, 1.0), &DrivingFunction::zero(1.0), 0.0, &Default::default()).unwrap();
    assert!((d.psi_prime - 1.0).abs() < 1e-3);
}

#[test]
fn collision_is_a_geometry_error() {
    // the axis runs into a half-disk straddling it
    let k = SlitHull::Composed {
        parts: vec![hull::BasicHull::VerticalSlit { base: 0.2, height: 3.0 }],
    };
    let lam = DrivingFunction::linear(1.0, 2.0).unwrap();
    let err = psi_derivatives(&k, &lam, 2.0, &Default::default()).unwrap_err();
    assert!(matches!(err, LoewnerError::Geometry(_)), "{err:?}");
    let touching = SlitHull::HalfDisk { center: 0.5, radius: 1.0 };
    assert!(matches!(
        psi_derivatives(&touching, &lam, 0.0, &Default::default()),
        Err(LoewnerError::Geometry(_))
    ));
}

#[test]
fn inverted_curve_pre_schwarzian_is_minus_twice_driving() {
    let u = far_driver();
    for s in [0.01, 0.02, 0.035, 0.05] {
        let r = inverted_pre_schwarzian(&u, s, &FlowOptions::default()).unwrap();
        assert!((r + 2.0 * u.eval(s)).abs() < 1e-4, "s = {s}: {r}");
    }
}

#[test]
fn loop_measure_vanishes_for_empty_curve() {
    let lm = loop_measure(&slit(5.0, 1.0), &DrivingFunction::zero(1.0), 0.0, &Default::default(), par()).unwrap();
    assert_eq!(lm.value, 0.0);
}

#[test]
fn loop_measure_decreases_with_distance() {
    let lam = DrivingFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.1]).unwrap();
    let values: Vec<f64> = [3.0, 6.0, 12.0, 24.0]
        .iter()
        .map(|&x| loop_measure(&slit(x, 1.0), &lam, 1.0, &Default::default(), par()).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    assert!(values[3] < 1e-3 * values[0]);
}

#[test]
fn loop_measure_is_inversion_invariant() {
    // the axis is its own image under z ↦ −1/z, and the half-disk over
    // [2, 4] goes to the one over [−1/2, −1/4]
    let axis = DrivingFunction::zero(1.0);
    let t = 1e4;
    let a = loop_measure(&SlitHull::HalfDisk { center: 3.0, radius: 1.0 }, &axis, t, &Default::default(), par())
        .unwrap()
        .value;
    let b = loop_measure(&SlitHull::HalfDisk { center: -0.375, radius: 0.125 }, &axis, t, &Default::default(), par())
        .unwrap()
        .value;
    assert!((a - b).abs() < 0.01 * a, "{a} vs {b}");
}

#[test]
fn empty_hull_leaves_energy_unchanged() {
    let lam = DrivingFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.1]).unwrap();
    let r = restricted_energy(&SlitHull::empty(), &lam, 1.0, &Default::default(), par()).unwrap();
    assert!((r.driving_form - r.energy).abs() < 1e-12);
    assert!((r.schwarzian_form - r.energy).abs() < 1e-12);
}

#[test]
fn two_expressions_agree_on_axis() {
    let k = slit(5.0, 1.0);
    let axis = DrivingFunction::zero(1.0);
    let mut last = f64::INFINITY;
    for t in [1.0, 10.0, 100.0] {
        let r = restricted_energy(&k, &axis, t, &Default::default(), par()).unwrap();
        assert_eq!(r.energy, 0.0);
        assert!((r.driving_form - r.schwarzian_form).abs() < 0.01 * r.driving_form, "{r:?}");
        // ψ_t′(0) → 1 along the axis
        let tail = 3.0 * r.psit_prime.ln();
        assert!(tail.abs() < last);
        last = tail.abs();
    }
}

#[test]
fn two_expressions_agree_for_curved_drivers() {
    let lam = DrivingFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.1]).unwrap();
    for k in [slit(3.0, 1.0), slit(-2.0, 0.7), SlitHull::HalfDisk { center: 2.5, radius: 0.8 }] {
        let r = restricted_energy(&k, &lam, 1.0, &Default::default(), par()).unwrap();
        assert!((r.driving_form - r.schwarzian_form).abs() < 0.02 * r.driving_form, "{k:?}: {r:?}");
    }
}

#[test]
fn restricted_energy_matches_zipped_image() {
    let k = slit(5.0, 1.0);
    let axis = DrivingFunction::zero(1.0);
    let r = restricted_energy(&k, &axis, 10.0, &Default::default(), par()).unwrap();
    let image = image_curve_energy(&k, &axis, 10.0, 1e-3, &ZipOptions::fine(), par()).unwrap();
    assert!((r.schwarzian_form - image).abs() < 0.02 * image, "{} vs {image}", r.schwarzian_form);
}

#[test]
fn restricted_energy_approaches_energy_as_hull_recedes() {
    let lam = DrivingFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.4, 0.1]).unwrap();
    let gaps: Vec<f64> = [3.0, 6.0, 12.0, 24.0, 48.0]
        .iter()
        .map(|&x| {
            let r = restricted_energy(&slit(x, 1.0), &lam, 1.0, &Default::default(), par()).unwrap();
            (r.driving_form - r.energy).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] < 1e-5);
}

#[test]
fn identity_table_csv() {
    let rows = restriction_table(&slit(5.0, 1.0), &DrivingFunction::zero(1.0), &[0.0, 1.0], &Default::default(), par())
        .unwrap();
    assert_eq!(rows[0].residual, 0.0);
    let mut buf = Vec::new();
    write_identity_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,lhs,rhs,residual\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn commutation_without_second_slit() {
    let cfg = TwoSlitConfig {
        w: near_driver(),
        u: far_driver(),
        t: near_driver().last_time(),
        s: 0.0,
    };
    let r = commutation_check(&cfg, &Default::default(), par()).unwrap();
    assert!((r.lhs - r.energy_w).abs() < 1e-6);
    assert!(r.residual.abs() < 1e-6);
}

#[test]
fn commutation_of_mirror_configurations() {
    let w = near_driver();
    let t = 0.6 * w.last_time();
    // U = −W: the second slit is the image of the first under z ↦ 1/z̄
    // U = W: under z ↦ −1/z; both swap the two orderings
    for u in [w.reflect(), w.clone()] {
        let cfg = TwoSlitConfig { w: w.clone(), u, t, s: t };
        let r = commutation_check(&cfg, &Default::default(), par()).unwrap();
        assert!(r.relative_residual < 1e-10, "{r:?}");
    }
}

#[test]
fn commutation_of_generic_pair() {
    let cfg = TwoSlitConfig {
        w: near_driver(),
        u: far_driver(),
        t: near_driver().last_time(),
        s: 0.05,
    };
    let rows = commutation_table(&cfg, &[8e-3, 4e-3, 2e-3], &Default::default(), par()).unwrap();
    for r in &rows {
        assert!(r.residual.abs() <= 0.02 * r.lhs.abs().max(r.rhs.abs()), "{r:?}");
    }
    assert!(rows.windows(2).all(|w| w[1].residual.abs() < w[0].residual.abs()), "{rows:?}");
}

#[test]
fn touching_slits_are_rejected() {
    // the far slit's image −1/γ̃ covers the upper part of the axis
    let axis = DrivingFunction::zero(1.0);
    let cfg = TwoSlitConfig { w: axis.clone(), u: axis, t: 1.0, s: 1.0 };
    let err = commutation_check(&cfg, &Default::default(), par()).unwrap_err();
    assert!(matches!(err, LoewnerError::Geometry(_)), "{err:?}");
}

#[test]
fn commutation_csv_columns() {
    let rows = vec![CommutationRow {
        resolution: 1e-3,
        t: 0.5,
        lhs: 1.0,
        rhs: 1.0,
        residual: 0.0,
    }];
    let mut buf = Vec::new();
    write_commutation_csv(&rows, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("resolution,t,lhs,rhs,residual\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn slit_derivatives_are_consistent(base in prop_oneof![-8.0..-1.5f64, 1.5..8.0f64], height in 0.1..2.0f64) {
        // Sψ(0) ≤ 0: the hull seen from 0 has nonnegative capacity
        let d = psi_derivatives(&slit(base, height), &DrivingFunction::zero(1.0), 0.0, &Default::default()).unwrap();
        prop_assert!(d.psi_prime > 0.0 && d.psi_prime < 1.0);
        prop_assert!(d.schwarzian <= 0.0);
        let z = C::new(0.0, 0.0);
        let h = 1e-5;
        let g = |x: f64| slit(base, height).map_out(z + x);
        let fd = (g(h) - g(-h)).re / (2.0 * h);
        prop_assert!((fd - d.psi_prime).abs() < 1e-7);
    }

    #[test]
    fn hull_hcap_by_zipping(base in 1.0..5.0f64, height in 0.2..2.0f64) {
        let k = slit(base, height);
        let z = hull::zipped_hcap(&k, 100, &ZipOptions::fine(), Execution::Sequential).unwrap();
        prop_assert!((z - k.hcap()).abs() < 1e-8 * k.hcap());
    }
}
