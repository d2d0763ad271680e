use std::f64::consts::PI;

use loewner_lab::curve::{one_sided, CurveSample};
use loewner_lab::flow::{self, FlowOptions, C};
use loewner_lab::hull::{self, SlitHull};
use loewner_lab::minimizers::one_point_minimizer;
use loewner_lab::welding::{curve_time_of, welding, write_welding_csv};
use loewner_lab::zipper::{curve_hcap, ZipOptions};
use loewner_lab::{DrivingFunction, Execution};
use proptest::prelude::*;

fn opts() -> FlowOptions {
    FlowOptions::default()
}

fn par() -> Execution {
    Execution::Parallel
}

#[test]
fn zero_driver_matches_square_root_on_grid() {
    let zero = DrivingFunction::zero(1.0);
    let pts: Vec<C> = (0..100)
        .map(|k| C::new(-3.03 + 0.06 * k as f64, 0.05 + 0.03 * (k % 10) as f64 + 1.0))
        .collect();
    let st = flow::flow_points(&zero, &pts, 2.0, &opts(), par()).unwrap();
    for (z, p) in pts.iter().zip(&st.points) {
        let exact = (z * z + 8.0).sqrt();
        let exact = if exact.im < 0.0 { -exact } else { exact };
        assert!((p.position - exact).norm() <= 1e-6 * exact.norm(), "{z}");
    }
}

#[test]
fn swallowing_of_i_by_the_axis() {
    let st = flow::flow_points(&DrivingFunction::zero(1.0), &[C::new(0.0, 1.0)], 1.0, &opts(), par()).unwrap();
    assert!(!st.points[0].alive);
    assert!((st.points[0].tau.unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn boundary_points_stay_real() {
    let zero = DrivingFunction::zero(1.0);
    let st = flow::flow_points(&zero, &[C::new(0.5, 0.0), C::new(3.0, 0.0)], 5.0, &opts(), par()).unwrap();
    for (x, p) in [0.5f64, 3.0].iter().zip(&st.points) {
        assert!(p.alive);
        assert!((p.position.re - (x * x + 20.0).sqrt()).abs() < 1e-6);
        assert_eq!(p.position.im, 0.0);
    }
}

#[test]
fn minimizer_trace_passes_through_target() {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let tr = flow::trace(&m, m.last_time(), 1e-3, &opts(), par()).unwrap();
    assert!(one_sided(&[C::from_polar(1.0, PI / 3.0)], &tr.points) < 1e-3);
}

#[test]
fn trace_is_capacity_parametrized() {
    let lam = DrivingFunction::new(vec![0.0, 0.4, 1.0], vec![0.0, 0.6, -0.2]).unwrap();
    let tr = flow::trace(&lam, 1.0, 1e-3, &opts(), par()).unwrap();
    for k in 1..=10 {
        let idx = k * (tr.len() - 1) / 10;
        let cut = CurveSample::new(tr.times[..=idx].to_vec(), tr.points[..=idx].to_vec()).unwrap();
        let (declared, zipped) = curve_hcap(&cut, &ZipOptions::default(), Execution::Sequential).unwrap();
        assert!((declared - 2.0 * tr.times[idx]).abs() < 1e-12);
        assert!((zipped - declared).abs() < 1e-4 * declared, "{k}: {zipped} vs {declared}");
    }
}

#[test]
fn half_disk_has_unit_capacity() {
    let disk = SlitHull::HalfDisk { center: 0.0, radius: 1.0 };
    assert_eq!(disk.hcap(), 1.0);
    let zipped = hull::zipped_hcap(&disk, 400, &ZipOptions::fine(), par()).unwrap();
    assert!((zipped - 1.0).abs() < 1e-4, "{zipped}");
}

#[test]
fn slit_capacity_and_scaling() {
    // g(z) = √(z² + h²) = z + h²/(2z) + …
    let slit = SlitHull::VerticalSlit { base: 0.0, height: 1.5 };
    assert!((slit.hcap() - 1.125).abs() < 1e-15);
    let zipped = hull::zipped_hcap(&slit, 200, &ZipOptions::fine(), par()).unwrap();
    assert!((zipped - 1.125).abs() < 1e-8);
    let doubled = SlitHull::VerticalSlit { base: 0.0, height: 3.0 };
    let z2 = hull::zipped_hcap(&doubled, 200, &ZipOptions::fine(), par()).unwrap();
    assert!((z2 - 4.0 * zipped).abs() < 1e-8);
}

#[test]
fn trace_points_have_matching_swallowing_times() {
    let lam = DrivingFunction::new(vec![0.0, 0.3, 0.8], vec![0.0, -0.4, 0.2]).unwrap();
    let tr = flow::trace(&lam, 0.8, 0.01, &opts(), par()).unwrap();
    let picks: Vec<usize> = (1..8).map(|k| k * 10).collect();
    let pts: Vec<C> = picks.iter().map(|&k| tr.points[k]).collect();
    let st = flow::flow_points(&lam, &pts, 0.8, &opts(), par()).unwrap();
    for (&k, p) in picks.iter().zip(&st.points) {
        assert!((p.tau.unwrap() - tr.times[k]).abs() < 1e-4, "t = {}", tr.times[k]);
    }
}

#[test]
fn welding_of_the_axis() {
    let zero = DrivingFunction::zero(1.0);
    let grid: Vec<f64> = (1..=20).map(|k| 0.2 * k as f64).collect();
    let w = welding(&zero, 1.0, &grid, &opts(), par()).unwrap();
    for p in &w.pairs {
        assert!((p.x_neg + p.x_pos).abs() < 1e-6 * p.x_pos);
        assert!((p.ratio - 1.0).abs() < 1e-6);
    }
    assert!((w.x_min + 2.0).abs() < 1e-6 && (w.x_max - 2.0).abs() < 1e-6);
    let mut buf = Vec::new();
    write_welding_csv(&w, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("x_pos,x_neg,curve_time,ratio,spacing_ratio\n"));
}

#[test]
fn welding_of_minimizer() {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let t = m.last_time();
    let probe = welding(&m, t, &[1.0], &opts(), par()).unwrap();
    let grid: Vec<f64> = (1..=12).map(|k| probe.x_max * k as f64 / 10.0).collect();
    let w = welding(&m, t, &grid, &opts(), par()).unwrap();
    assert!(w.ratio_bound.is_finite() && w.ratio_bound < 10.0, "{}", w.ratio_bound);
    assert!(w.spacing_bound.is_finite() && w.spacing_bound < 10.0, "{}", w.spacing_bound);
    let mut last = f64::INFINITY;
    for p in &w.pairs {
        assert!(p.x_neg < 0.0 && p.x_pos > 0.0);
        if let Some(ct) = p.curve_time {
            // both sides of the pair reach the tip at the same time
            let other = curve_time_of(&m, t, p.x_neg, &opts()).unwrap().unwrap();
            assert!((other - ct).abs() < 1e-5, "{p:?}");
            assert!(ct < last);
            last = ct;
        }
    }
    assert!(w.pairs.iter().filter(|p| p.curve_time.is_some()).count() >= 9);
}

#[test]
fn welding_rejects_bad_grid() {
    let zero = DrivingFunction::zero(1.0);
    assert!(welding(&zero, 1.0, &[-1.0], &opts(), par()).is_err());
    assert!(welding(&zero, 0.0, &[1.0], &opts(), par()).is_err());
}

fn driver() -> impl Strategy<Value = DrivingFunction> {
    prop::collection::vec((0.05..0.3f64, -0.4..0.4f64), 1..5).prop_map(|steps| {
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for (dt, dv) in steps {
            times.push(times.last().unwrap() + dt);
            values.push(values.last().unwrap() + dv);
        }
        DrivingFunction::new(times, values).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reflection_mirrors_the_trace(d in driver()) {
        let t = d.last_time();
        let a = flow::trace(&d, t, 0.01, &opts(), Execution::Sequential).unwrap();
        let b = flow::trace(&d.reflect(), t, 0.01, &opts(), Execution::Sequential).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p.re + q.re).abs() < 1e-6 && (p.im - q.im).abs() < 1e-6);
        }
    }

    #[test]
    fn flowed_points_stay_in_upper_half_plane(d in driver(), x in -2.0..2.0f64, y in 0.01..2.0f64) {
        let st = flow::flow_points(&d, &[C::new(x, y)], d.last_time(), &opts(), Execution::Sequential).unwrap();
        let p = &st.points[0];
        prop_assert!(!p.alive || p.position.im > 0.0);
        prop_assert!(p.alive || p.tau.unwrap() <= d.last_time());
    }
}
