use std::f64::consts::PI;

use loewner_lab::minimizers::one_point_minimizer;
use loewner_lab::{DrivingFunction, Execution};
use proptest::prelude::*;

/// Piecewise-linear drivers with 2..12 knots on `[0, ~4]`.
fn driver() -> impl Strategy<Value = DrivingFunction> {
    prop::collection::vec((0.01..0.5f64, -1.0..1.0f64), 1..12).prop_map(|steps| {
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for (dt, dv) in steps {
            times.push(times.last().unwrap() + dt);
            values.push(values.last().unwrap() + dv);
        }
        DrivingFunction::new(times, values).unwrap()
    })
}

#[test]
fn sine_energy_matches_closed_form() {
    let sine = DrivingFunction::from_fn(f64::sin, PI, 1e-3).unwrap();
    // ½∫₀^π cos² = π/4
    assert!((sine.energy(PI).unwrap().total - PI / 4.0).abs() < 1e-4);
}

#[test]
fn sine_additivity_at_half_period() {
    let sine = DrivingFunction::from_fn(f64::sin, PI, 1e-3).unwrap();
    let head = sine.energy(PI / 2.0).unwrap().total;
    let tail = sine.shift_restart(PI / 2.0).unwrap().energy(PI / 2.0).unwrap().total;
    assert!((head + tail - sine.energy(PI).unwrap().total).abs() < 1e-10);
}

#[test]
fn dyadic_partition_sums_increase_to_twice_energy() {
    let sine = DrivingFunction::from_fn(f64::sin, PI, 1e-3).unwrap();
    let sums: Vec<f64> = [4, 6, 8]
        .iter()
        .map(|&level| {
            let n = 1usize << level;
            let part: Vec<f64> = (0..=n).map(|k| PI * k as f64 / n as f64).collect();
            sine.energy_partition_sup(&part).unwrap()
        })
        .collect();
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));
    assert!((sums[2] - PI / 2.0).abs() < 1e-3, "{sums:?}");
}

#[test]
fn minimizer_energy_is_scale_invariant() {
    let m = one_point_minimizer(PI / 3.0).unwrap().driving;
    let scaled = m.scale(5.0).unwrap();
    assert!((scaled.total_energy() - m.total_energy()).abs() < 1e-12);
}

#[test]
fn energy_is_lower_semicontinuous_under_uniform_perturbation() {
    // λₙ = λ + sin(n²t)/n → λ uniformly, with energy staying above I(λ)
    let base = |t: f64| t * (1.0 - t);
    let lam = DrivingFunction::from_fn(base, 1.0, 1e-4).unwrap();
    let target = lam.total_energy();
    for n in [2.0f64, 4.0, 8.0, 16.0] {
        let ln = DrivingFunction::from_fn(|t| base(t) + (n * n * t).sin() / n, 1.0, 1e-4).unwrap();
        assert!(ln.sup_distance(&lam, 1.0) <= 1.0 / n + 1e-12);
        assert!(ln.total_energy() >= target - 1e-6);
    }
}

#[test]
fn holder_bound_on_random_drivers() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for _ in 0..n {
            times.push(times.last().unwrap() + rng.random_range(1e-3..0.3));
            values.push(values.last().unwrap() + rng.random_range(-0.5..0.5));
        }
        let d = DrivingFunction::new(times, values).unwrap();
        let h = d.holder_half_norm_bound(d.last_time(), Execution::Sequential).unwrap();
        assert!(h.norm_estimate <= h.bound * (1.0 + 1e-12), "{h:?}");
    }
}

proptest! {
    #[test]
    fn additivity_is_exact(d in driver(), frac in 0.0..1.0f64) {
        let t = d.last_time();
        let s = frac * t;
        let split = d.energy(s).unwrap().total + d.shift_restart(s).unwrap().energy(t - s).unwrap().total;
        prop_assert!((split - d.energy(t).unwrap().total).abs() < 1e-12 * (1.0 + d.total_energy()));
    }

    #[test]
    fn scaling_is_exact(d in driver(), u in 0.1..10.0f64) {
        let t = d.last_time();
        let e = d.energy(t).unwrap().total;
        prop_assert!((d.scale(u).unwrap().energy(u * u * t).unwrap().total - e).abs() < 1e-12 * (1.0 + e));
    }

    #[test]
    fn refining_partitions_never_decreases_the_sum(d in driver(), k in 1usize..6) {
        let t = d.last_time();
        let coarse: Vec<f64> = (0..=k).map(|j| t * j as f64 / k as f64).collect();
        let fine: Vec<f64> = (0..=2 * k).map(|j| t * j as f64 / (2 * k) as f64).collect();
        let (a, b) = (d.energy_partition_sup(&coarse).unwrap(), d.energy_partition_sup(&fine).unwrap());
        prop_assert!(b >= a - 1e-12 * (1.0 + a));
        prop_assert!(b <= 2.0 * d.total_energy() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn energy_report_sums(d in driver()) {
        let r = d.energy(d.last_time()).unwrap();
        let sum: f64 = r.per_interval.iter().sum();
        prop_assert!((sum - r.total).abs() < 1e-12 * (1.0 + r.total));
        prop_assert!(r.per_interval.iter().all(|e| *e >= 0.0));
    }

    #[test]
    fn csv_roundtrip(d in driver()) {
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        prop_assert_eq!(DrivingFunction::read_csv(buf.as_slice()).unwrap(), d);
    }
}
