//! Forward chordal and radial Loewner flows, and trace computation.
//!
//! Points are carried in the centered frame `f_t = g_t − λ_t`, which on a
//! segment of constant slope `m` obeys the autonomous equation
//! `ḟ = 2/f − m`. Each segment is integrated with the adaptive
//! Dormand–Prince scheme from [`crate::ode`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::CurveSample;
use crate::driving::{DrivingFunction, Segment};
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::ode::{self, Control, OdeFailure, Tolerance};

pub type C = Complex64;

const I: C = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// A point is swallowed once `|f_t(z)|² < swallow_rel · (1 + |z|)²`.
    ///
    /// The test is on the square because `f_t(z)²` is what varies linearly
    /// in time near the tip: `f² ≈ 4(t − τ)`. A point within distance `d`
    /// of the curve comes within about `√d` of the tip, so this is roughly
    /// "closer than `swallow_rel` to the curve" in the original picture.
    pub swallow_rel: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-9,
            atol: 1e-13,
            swallow_rel: 1e-6,
        }
    }
}

impl FlowOptions {
    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.rtol,
            atol: self.atol,
            ..Tolerance::default()
        }
    }
}

/// Outcome of flowing one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    Alive(C),
    /// Swallowed at `tau`, known to lie in `[lower, upper]`.
    Swallowed { tau: f64, lower: f64, upper: f64, last: C },
}

impl Fate {
    pub fn is_alive(&self) -> bool {
        matches!(self, Fate::Alive(_))
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Fate::Alive(_) => None,
            Fate::Swallowed { tau, .. } => Some(*tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub label: usize,
    pub start: C,
    /// `f_T(z)` for live points, the last computed position for dead ones.
    pub position: C,
    pub alive: bool,
    pub tau: Option<f64>,
    pub tau_bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub time: f64,
    pub driving_value: f64,
    pub points: Vec<MarkedPoint>,
}

#[inline]
fn pack(z: C) -> [f64; 2] {
    [z.re, z.im]
}

#[inline]
fn unpack(y: &[f64; 2]) -> C {
    C::new(y[0], y[1])
}

/// Flows `z` through consecutive driving segments until swallowed or done.
pub fn flow_point(segments: &[Segment], z0: C, opts: &FlowOptions) -> Result<Fate> {
    let threshold = opts.swallow_rel * (1.0 + z0.norm()).powi(2);
    let tol = opts.tolerance();
    let t_start = segments.first().map_or(0.0, |s| s.t0);
    if z0.norm_sqr() < threshold {
        return Ok(Fate::Swallowed {
            tau: t_start,
            lower: t_start,
            upper: t_start,
            last: z0,
        });
    }
    let mut z = z0;
    let mut h = None;
    for seg in segments.iter().filter(|s| !s.is_empty()) {
        let m = seg.slope;
        let rhs = move |_: f64, y: &[f64; 2]| {
            let d = 2.0 / unpack(y) - m;
            [d.re, d.im]
        };
        let mut last_ok = seg.t0;
        let outcome = ode::integrate(rhs, seg.t0, pack(z), seg.t1, &tol, h, |t, y| {
            if unpack(y).norm_sqr() < threshold {
                Control::Stop
            } else {
                last_ok = t;
                Control::Continue
            }
        });
        match outcome {
            Ok(sol) if sol.stopped => {
                let w = unpack(&sol.y);
                return Ok(swallowed_at(sol.t, w, last_ok));
            }
            Ok(sol) => {
                z = unpack(&sol.y);
                h = Some(sol.h_next);
            }
            Err(OdeFailure::StepUnderflow { t, y, .. }) => {
                return Ok(swallowed_at(t, unpack(&y), t));
            }
            Err(OdeFailure::TooManySteps { t, .. }) => {
                return Err(LoewnerError::accuracy(format!(
                    "flow of {z0} exceeded the step budget at t = {t}"
                )));
            }
        }
    }
    Ok(Fate::Alive(z))
}

fn swallowed_at(t: f64, w: C, last_ok: f64) -> Fate {
    // near the singularity f² ≈ 4(t − τ)
    let tau = t - (w * w).re / 4.0;
    Fate::Swallowed {
        tau,
        lower: last_ok.min(tau),
        upper: (t + w.norm_sqr() / 4.0).max(tau),
        last: w,
    }
}

fn validate_point(z: C) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(LoewnerError::malformed(format!("non-finite point {z}")));
    }
    if z.im < 0.0 {
        return Err(LoewnerError::domain(format!("point {z} lies below the real axis")));
    }
    if z == C::new(0.0, 0.0) {
        return Err(LoewnerError::domain("the base point 0 cannot be flowed"));
    }
    Ok(())
}

/// Centered flow of `points` up to capacity time `horizon`.
pub fn flow_points(
    lambda: &DrivingFunction,
    points: &[C],
    horizon: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<FlowState> {
    if !(horizon >= 0.0) {
        return Err(LoewnerError::malformed("horizon must be nonnegative"));
    }
    for z in points {
        validate_point(*z)?;
    }
    let segments = lambda.segments(horizon);
    let fates = exec.map(points, |z| flow_point(&segments, *z, opts));
    let mut out = Vec::with_capacity(points.len());
    for (label, (z, fate)) in points.iter().zip(fates).enumerate() {
        out.push(match fate? {
            Fate::Alive(w) => MarkedPoint {
                label,
                start: *z,
                position: w,
                alive: true,
                tau: None,
                tau_bracket: None,
            },
            Fate::Swallowed {
                tau,
                lower,
                upper,
                last,
            } => MarkedPoint {
                label,
                start: *z,
                position: last,
                alive: false,
                tau: Some(tau),
                tau_bracket: Some((lower, upper)),
            },
        });
    }
    Ok(FlowState {
        time: horizon,
        driving_value: lambda.eval(horizon),
        points: out,
    })
}

/// Runs the centered flow backwards through `segments`: returns `f_{t0}⁻¹`
/// applied in the frame of the last segment's end, i.e. `f_{t1}⁻¹(w)`
/// expressed at the start of the first segment.
pub fn pull_back(segments: &[Segment], w: C, opts: &FlowOptions) -> Result<C> {
    let tol = opts.tolerance();
    let mut z = w;
    for seg in segments.iter().rev().filter(|s| !s.is_empty()) {
        let m = seg.slope;
        let rhs = move |_: f64, y: &[f64; 2]| {
            let d = 2.0 / unpack(y) - m;
            [d.re, d.im]
        };
        match ode::integrate(rhs, seg.t1, pack(z), seg.t0, &tol, None, |_, _| Control::Continue) {
            Ok(sol) => z = unpack(&sol.y),
            Err(_) => {
                return Err(LoewnerError::accuracy(format!(
                    "backward flow from {w} failed on [{}, {}]",
                    seg.t0, seg.t1
                )))
            }
        }
    }
    Ok(z)
}

/// `φ(u) = u + ln(1 − u)`, with a series near 0 to avoid cancellation.
fn phi(u: C) -> C {
    if u.norm() < 0.1 {
        let mut term = u * u;
        let mut sum = C::new(0.0, 0.0);
        for k in 2..40 {
            sum -= term / k as f64;
            term *= u;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        u + (1.0 - u).ln()
    }
}

fn newton_tip(a: f64, guess: C) -> Option<C> {
    let target = C::new(0.5 * a * a, 0.0);
    let mut u = guess;
    for _ in 0..100 {
        let f = phi(u) - target;
        let df = -u / (1.0 - u);
        let mut step = f / df;
        let mut next = u - step;
        let mut tries = 0;
        while (next.im <= 0.0 || (phi(next) - target).norm() > f.norm()) && tries < 40 {
            step *= 0.5;
            next = u - step;
            tries += 1;
        }
        u = next;
        if step.norm() <= 1e-15 * (1.0 + u.norm()) {
            return Some(u);
        }
    }
    ((phi(u) - target).norm() < 1e-12 * (1.0 + a * a)).then_some(u)
}

fn tip_u(a: f64) -> C {
    let s2 = 0.5 * a * a;
    let guess = if a < 1.5 {
        C::new(a * a / 3.0, a)
    } else {
        C::new(s2 - s2.ln(), std::f64::consts::PI)
    };
    if let Some(u) = newton_tip(a, guess) {
        return u;
    }
    // continuation in the slope from the small-slope regime
    let steps = 200;
    let mut u = C::new(0.0, 0.0);
    for k in 1..=steps {
        let ak = a * k as f64 / steps as f64;
        let g = if k == 1 { C::new(ak * ak / 3.0, ak) } else { u };
        u = newton_tip(ak, g).unwrap_or(g);
    }
    u
}

/// Tip at time 1 of the curve driven by `t ↦ a·t`.
pub fn unit_linear_tip(a: f64) -> C {
    if a == 0.0 {
        return 2.0 * I;
    }
    let s = a.abs();
    let g = 2.0 * tip_u(s) / s;
    if a > 0.0 {
        g
    } else {
        -g.conj()
    }
}

/// Tip of the curve driven by `t ↦ slope·t` after capacity time `dt`.
pub fn linear_tip(slope: f64, dt: f64) -> C {
    if dt <= 0.0 {
        return C::new(0.0, 0.0);
    }
    let r = dt.sqrt();
    r * unit_linear_tip(slope * r)
}

/// Sample times for a trace: a uniform grid of step at most `resolution`
/// merged with the knots of `lambda`.
pub fn trace_times(lambda: &DrivingFunction, horizon: f64, resolution: f64) -> Vec<f64> {
    let n = (horizon / resolution).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| horizon * k as f64 / n as f64).collect();
    times.push(horizon);
    times.extend(lambda.times().iter().copied().filter(|t| *t > 0.0 && *t < horizon));
    times.sort_by(f64::total_cmp);
    let gap = 1e-12 * horizon.max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        if out.last().is_none_or(|last| t - last > gap) {
            out.push(t);
        } else if t == horizon {
            *out.last_mut().unwrap() = t;
        }
    }
    out
}

/// The trace `γ_t = lim_{y→0} f_t⁻¹(iy)` at the given times.
pub fn trace_at(
    lambda: &DrivingFunction,
    times: &[f64],
    opts: &FlowOptions,
    exec: Execution,
) -> Result<Vec<C>> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let segments = lambda.segments(horizon);
    let pts = exec.map(times, |&t| {
        if t <= 0.0 {
            return Ok(C::new(0.0, 0.0));
        }
        // a time within rounding of a knot belongs to the segment ending
        // there; starting the next one would pull back a near-zero tip
        let gap = 1e-12 * t.max(1.0);
        let j = segments.partition_point(|s| s.t1 < t - gap).min(segments.len() - 1);
        let seg = &segments[j];
        let w = linear_tip(seg.slope, (t - seg.t0).min(seg.t1 - seg.t0).max(0.0));
        pull_back(&segments[..j], w, opts)
    });
    pts.into_iter().collect()
}

/// Trace of `lambda` on `[0, horizon]` sampled at capacity steps of at most
/// `resolution` (and at every knot).
pub fn trace(
    lambda: &DrivingFunction,
    horizon: f64,
    resolution: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<CurveSample> {
    if !(horizon > 0.0 && resolution > 0.0) {
        return Err(LoewnerError::malformed("horizon and resolution must be positive"));
    }
    let times = trace_times(lambda, horizon, resolution);
    let points = trace_at(lambda, &times, opts, exec)?;
    let curve = CurveSample::new(times, points)?;
    curve.check_simple()?;
    Ok(curve)
}

/// Piecewise-linear function of time used to drive the radial equation;
/// unlike [`DrivingFunction`] it may start anywhere on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleDriving {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CircleDriving {
    pub fn from_fn(f: impl Fn(f64) -> f64, horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0) {
            return Err(LoewnerError::malformed("horizon and step must be positive"));
        }
        let n = (horizon / step).ceil() as usize;
        let times: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Ok(CircleDriving { times, values })
    }

    pub fn constant(value: f64, horizon: f64) -> Self {
        CircleDriving {
            times: vec![0.0, horizon],
            values: vec![value, value],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.times.len() {
            return *self.values.last().unwrap();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Breakpoints of `[a, b]` at which the driving changes slope.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = (a.min(b), a.max(b));
        let mut pts = vec![a];
        let inner = self.times.iter().copied().filter(|t| *t > lo && *t < hi);
        if b > a {
            pts.extend(inner);
        } else {
            let mut v: Vec<f64> = inner.collect();
            v.reverse();
            pts.extend(v);
        }
        pts.push(b);
        pts
    }
}

fn radial_rhs(xi: &CircleDriving) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |t, y| {
        let h = unpack(y);
        let e = C::from_polar(1.0, xi.eval(t));
        let d = -h * (h + e) / (h - e);
        [d.re, d.im]
    }
}

/// Radial flow `∂h = −h (h + e^{iξ}) / (h − e^{iξ})` of points of the closed
/// unit disk up to time `horizon`.
pub fn radial_flow(
    xi: &CircleDriving,
    points: &[C],
    horizon: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<FlowState> {
    if let Some(z) = points.iter().find(|z| z.norm() > 1.0 + 1e-12) {
        return Err(LoewnerError::domain(format!("{z} lies outside the unit disk")));
    }
    let tol = opts.tolerance();
    let fates = exec.map(points, |&z0| -> Result<MarkedPoint> {
        let threshold = opts.swallow_rel * 2.0;
        let mut z = z0;
        let bps = xi.breakpoints(0.0, horizon);
        for w in bps.windows(2) {
            let mut last_ok = w[0];
            let res = ode::integrate(radial_rhs(xi), w[0], pack(z), w[1], &tol, None, |t, y| {
                if (unpack(y) - C::from_polar(1.0, xi.eval(t))).norm() < threshold {
                    Control::Stop
                } else {
                    last_ok = t;
                    Control::Continue
                }
            });
            match res {
                Ok(sol) if sol.stopped => {
                    return Ok(MarkedPoint {
                        label: 0,
                        start: z0,
                        position: unpack(&sol.y),
                        alive: false,
                        tau: Some(sol.t),
                        tau_bracket: Some((last_ok, sol.t)),
                    })
                }
                Ok(sol) => z = unpack(&sol.y),
                Err(OdeFailure::StepUnderflow { t, y, .. }) => {
                    return Ok(MarkedPoint {
                        label: 0,
                        start: z0,
                        position: unpack(&y),
                        alive: false,
                        tau: Some(t),
                        tau_bracket: Some((last_ok, t)),
                    })
                }
                Err(OdeFailure::TooManySteps { t, .. }) => {
                    return Err(LoewnerError::accuracy(format!(
                        "radial flow of {z0} exceeded the step budget at t = {t}"
                    )))
                }
            }
        }
        Ok(MarkedPoint {
            label: 0,
            start: z0,
            position: z,
            alive: true,
            tau: None,
            tau_bracket: None,
        })
    });
    let mut pts = Vec::with_capacity(points.len());
    for (label, p) in fates.into_iter().enumerate() {
        let mut p = p?;
        p.label = label;
        pts.push(p);
    }
    Ok(FlowState {
        time: horizon,
        driving_value: xi.eval(horizon),
        points: pts,
    })
}

/// Radial trace at the given times, by flowing `(1 − δ) e^{iξ(t)}` back to
/// time 0.
pub fn radial_trace(
    xi: &CircleDriving,
    times: &[f64],
    lift: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<Vec<C>> {
    let tol = opts.tolerance();
    let pts = exec.map(times, |&t| -> Result<C> {
        if t <= 0.0 {
            return Ok(C::from_polar(1.0, xi.eval(0.0)));
        }
        let mut z = C::from_polar(1.0 - lift, xi.eval(t));
        for w in xi.breakpoints(t, 0.0).windows(2) {
            let sol = ode::integrate(radial_rhs(xi), w[0], pack(z), w[1], &tol, None, |_, _| {
                Control::Continue
            })
            .map_err(|_| LoewnerError::accuracy(format!("radial backward flow failed at t = {t}")))?;
            z = unpack(&sol.y);
        }
        Ok(z)
    });
    pts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> FlowOptions {
        FlowOptions::default()
    }

    #[test]
    fn zero_driver_explicit_solution() {
        let zero = DrivingFunction::zero(10.0);
        let st = flow_points(&zero, &[I], 0.25, &opts(), Execution::Sequential).unwrap();
        let p = &st.points[0];
        assert!(!p.alive);
        assert!((p.tau.unwrap() - 0.25).abs() < 1e-6);
        let (lo, hi) = p.tau_bracket.unwrap();
        assert!(lo <= p.tau.unwrap() && p.tau.unwrap() <= hi);

        let z = C::new(1.0, 1.0);
        let st = flow_points(&zero, &[z, C::new(0.7, 0.0)], 10.0, &opts(), Execution::Sequential)
            .unwrap();
        let exact = (z * z + 40.0).sqrt();
        assert!((st.points[0].position - exact).norm() < 1e-6);
        assert!((st.points[1].position.re - (0.49f64 + 40.0).sqrt()).abs() < 1e-6);
        assert_eq!(st.points[1].position.im, 0.0);
    }

    #[test]
    fn rejects_bad_points() {
        let zero = DrivingFunction::zero(1.0);
        let bad = flow_points(&zero, &[C::new(1.0, -1.0)], 1.0, &opts(), Execution::Sequential);
        assert!(matches!(bad, Err(LoewnerError::Domain(_))));
    }

    #[test]
    fn linear_tip_is_swallowed_on_time() {
        for &(m, dt) in &[(0.3, 1.0), (2.0, 0.5), (-5.0, 0.2), (12.0, 1.0), (1e-5, 1.0)] {
            let tip = linear_tip(m, dt);
            assert!(tip.im > 0.0);
            let seg = [Segment {
                t0: 0.0,
                t1: 2.0 * dt,
                v0: 0.0,
                slope: m,
            }];
            let tau = flow_point(&seg, tip, &opts()).unwrap().tau().unwrap();
            assert!((tau - dt).abs() < 1e-6 * (1.0 + dt), "m = {m}: tau {tau}");
        }
        assert!((linear_tip(0.0, 1.0) - 2.0 * I).norm() < 1e-15);
        let a = linear_tip(1e-7, 1.0);
        assert!((a - 2.0 * I).norm() < 1e-6);
    }

    #[test]
    fn vertical_trace() {
        let zero = DrivingFunction::zero(1.0);
        let c = trace(&zero, 1.0, 0.01, &opts(), Execution::Sequential).unwrap();
        assert!((c.points.last().unwrap() - 2.0 * I).norm() < 1e-5);
        for (t, z) in c.times.iter().zip(&c.points) {
            assert!((z - 2.0 * I * t.sqrt()).norm() < 1e-8);
        }
    }

    #[test]
    fn reflected_driver_gives_mirrored_trace() {
        let lam = DrivingFunction::linear(1.0, 1.0).unwrap();
        let a = trace(&lam, 1.0, 0.01, &opts(), Execution::Sequential).unwrap();
        let b = trace(&lam.reflect(), 1.0, 0.01, &opts(), Execution::Sequential).unwrap();
        for (p, q) in a.points.iter().zip(&b.mirror().points) {
            assert!((p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn trace_points_are_swallowed_at_their_time() {
        let lam = DrivingFunction::from_fn(|t| (3.0 * t).sin(), 1.0, 0.01).unwrap();
        let c = trace(&lam, 1.0, 0.1, &opts(), Execution::Sequential).unwrap();
        for k in [3usize, 5, 8] {
            let t = c.times[k];
            let st = flow_points(&lam, &[c.points[k]], 1.0, &opts(), Execution::Sequential).unwrap();
            assert!((st.points[0].tau.unwrap() - t).abs() < 1e-4, "t = {t}");
        }
    }

    #[test]
    fn radial_fixed_points() {
        let xi = CircleDriving::constant(0.0, 3.0);
        let st = radial_flow(&xi, &[C::new(0.0, 0.0), C::new(-1.0, 0.0)], 3.0, &opts(), Execution::Sequential)
            .unwrap();
        assert_eq!(st.points[0].position, C::new(0.0, 0.0));
        assert!((st.points[1].position + 1.0).norm() < 1e-12);
    }
}
