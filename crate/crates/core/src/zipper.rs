//! Curve → driving function (the inverse Loewner transform) by zipping.
//!
//! Each step maps out the next sub-arc with the elementary slit generated by
//! a linear driving piece whose tip lands exactly on the next sample. The
//! result is a piecewise-linear driving function whose trace passes through
//! every input sample, so zipping the trace of a piecewise-linear driver
//! sampled at its knots recovers that driver up to integration error.

use serde::{Deserialize, Serialize};

use crate::curve::CurveSample;
use crate::driving::{DrivingFunction, Segment};
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::{self, Fate, FlowOptions, C};
use crate::ode::{self, Control};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZipOptions {
    pub flow: FlowOptions,
    /// Turning angles below this are fitted with a vertical slit.
    pub vertical_angle: f64,
    /// Reject self-intersecting input before zipping.
    pub check_simple: bool,
}

impl Default for ZipOptions {
    fn default() -> Self {
        ZipOptions {
            // the swallowing test here is absolute (`|f|² < swallow_rel`), and
            // consecutive samples may legitimately be closer than 1e-3
            flow: FlowOptions {
                swallow_rel: 1e-14,
                ..FlowOptions::default()
            },
            vertical_angle: 1e-6,
            check_simple: true,
        }
    }
}

impl ZipOptions {
    /// Tight integration tolerance. Needed for reversed curves and
    /// mapped-out hulls, whose samples span many scales.
    pub fn fine() -> Self {
        ZipOptions {
            flow: FlowOptions {
                rtol: 1e-11,
                atol: 1e-15,
                swallow_rel: 1e-14,
            },
            ..ZipOptions::default()
        }
    }
}

/// One elementary map: the slit generated by slope `slope` over `dt`, whose
/// tip is `tip` in the frame where the previous tip sits at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipperStep {
    pub tip: C,
    pub dt: f64,
    pub slope: f64,
}

impl ZipperStep {
    pub fn driving_increment(&self) -> f64 {
        self.slope * self.dt
    }
}

/// A point carried through the zipper together with its first three
/// derivatives with respect to the original coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet {
    pub z: C,
    pub d1: C,
    pub d2: C,
    pub d3: C,
}

impl Jet {
    pub fn point(z: C) -> Self {
        Jet {
            z,
            d1: C::new(1.0, 0.0),
            d2: C::new(0.0, 0.0),
            d3: C::new(0.0, 0.0),
        }
    }

    pub fn value(z: C) -> Self {
        Jet {
            z,
            d1: C::new(0.0, 0.0),
            d2: C::new(0.0, 0.0),
            d3: C::new(0.0, 0.0),
        }
    }

    fn tracks_derivatives(&self) -> bool {
        self.d1 != C::new(0.0, 0.0) || self.d2 != C::new(0.0, 0.0) || self.d3 != C::new(0.0, 0.0)
    }

    /// Composes with the translation `z ↦ z + c`.
    pub fn shift(mut self, c: C) -> Self {
        self.z += c;
        self
    }

    /// Composes with `w ↦ a·w`.
    pub fn scale(self, a: f64) -> Self {
        Jet {
            z: self.z * a,
            d1: self.d1 * a,
            d2: self.d2 * a,
            d3: self.d3 * a,
        }
    }

    /// Composes with an outer map given by its value and first three
    /// derivatives at `self.z`.
    pub fn then(self, g: [C; 4]) -> Jet {
        let (u1, u2, u3) = (self.d1, self.d2, self.d3);
        Jet {
            z: g[0],
            d1: g[1] * u1,
            d2: g[2] * u1 * u1 + g[1] * u2,
            d3: g[3] * u1 * u1 * u1 + 3.0 * g[2] * u1 * u2 + g[1] * u3,
        }
    }

    /// `ψ″/ψ′` at the base point.
    pub fn pre_schwarzian(&self) -> C {
        self.d2 / self.d1
    }

    /// `ψ‴/ψ′ − (3/2)(ψ″/ψ′)²` at the base point.
    pub fn schwarzian(&self) -> C {
        let p = self.d2 / self.d1;
        self.d3 / self.d1 - 1.5 * p * p
    }
}

/// Flows a jet through one linear driving segment.
pub fn flow_jet(jet: Jet, slope: f64, dt: f64, opts: &FlowOptions) -> Result<Jet> {
    if dt <= 0.0 {
        return Ok(jet);
    }
    if !jet.tracks_derivatives() {
        let seg = [Segment {
            t0: 0.0,
            t1: dt,
            v0: 0.0,
            slope,
        }];
        return match flow::flow_point(&seg, jet.z, opts)? {
            Fate::Alive(z) => Ok(Jet::value(z)),
            Fate::Swallowed { .. } => Err(swallowed_error(jet.z)),
        };
    }
    let rhs = move |_: f64, y: &[f64; 8]| {
        let z = C::new(y[0], y[1]);
        let d1 = C::new(y[2], y[3]);
        let d2 = C::new(y[4], y[5]);
        let d3 = C::new(y[6], y[7]);
        let r = 1.0 / z;
        let r2 = r * r;
        let dz = 2.0 * r - slope;
        let e1 = -2.0 * d1 * r2;
        let e2 = 4.0 * d1 * d1 * r2 * r - 2.0 * d2 * r2;
        let e3 = -12.0 * d1 * d1 * d1 * r2 * r2 + 12.0 * d1 * d2 * r2 * r - 2.0 * d3 * r2;
        [dz.re, dz.im, e1.re, e1.im, e2.re, e2.im, e3.re, e3.im]
    };
    let y0 = [
        jet.z.re, jet.z.im, jet.d1.re, jet.d1.im, jet.d2.re, jet.d2.im, jet.d3.re, jet.d3.im,
    ];
    let sol = ode::integrate(rhs, 0.0, y0, dt, &opts.tolerance(), None, |_, y| {
        if y[0] * y[0] + y[1] * y[1] < opts.swallow_rel {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .map_err(|_| swallowed_error(jet.z))?;
    if sol.stopped {
        return Err(swallowed_error(jet.z));
    }
    let y = sol.y;
    Ok(Jet {
        z: C::new(y[0], y[1]),
        d1: C::new(y[2], y[3]),
        d2: C::new(y[4], y[5]),
        d3: C::new(y[6], y[7]),
    })
}

fn swallowed_error(z: C) -> LoewnerError {
    LoewnerError::Geometry(format!("carried point {z} was swallowed while zipping"))
}

/// Slope `a` of the unit-time linear slit whose tip has argument `theta`.
fn slope_for_angle(theta: f64) -> f64 {
    let half = std::f64::consts::FRAC_PI_2;
    let target = if theta > half { std::f64::consts::PI - theta } else { theta };
    // arg of the tip decreases from π/2 at a = 0 towards 0 as a → ∞
    let mut hi = 1.0;
    while flow::unit_linear_tip(hi).arg() > target {
        hi *= 2.0;
        if hi > 1e8 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flow::unit_linear_tip(mid).arg() > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    if theta > half {
        -a
    } else {
        a
    }
}

/// The linear slit (slope, duration) whose tip is `w`.
pub fn fit_slit(w: C, vertical_angle: f64) -> Result<(f64, f64)> {
    if !(w.im > 0.0) {
        return Err(LoewnerError::Resolution {
            message: format!("sample image {w} left the upper half-plane"),
            suggested_refinement: 2.0,
        });
    }
    let theta = w.arg();
    if (theta - std::f64::consts::FRAC_PI_2).abs() < vertical_angle {
        return Ok((0.0, w.norm_sqr() / 4.0));
    }
    let a = slope_for_angle(theta);
    let g = flow::unit_linear_tip(a);
    let root_dt = w.norm() / g.norm();
    Ok((a / root_dt, root_dt * root_dt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zipped {
    pub steps: Vec<ZipperStep>,
    pub driving: DrivingFunction,
    /// Carried points after all steps, in the centered frame.
    pub passengers: Vec<Jet>,
    /// Number of input samples dropped as duplicates of their predecessor.
    pub skipped: usize,
}

impl Zipped {
    pub fn capacity_time(&self) -> f64 {
        self.driving.last_time()
    }

    pub fn hcap(&self) -> f64 {
        2.0 * self.capacity_time()
    }

    /// Capacity times at which the zipped curve passes through the samples.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = vec![0.0];
        for s in &self.steps {
            t += s.dt;
            out.push(t);
        }
        out
    }
}

/// Zips the polyline `points` (starting at or near 0) while carrying
/// `passengers` along.
pub fn zip(points: &[C], passengers: &[Jet], opts: &ZipOptions, exec: Execution) -> Result<Zipped> {
    let start = usize::from(points.first() == Some(&C::new(0.0, 0.0)));
    let pts = &points[start..];
    if pts.is_empty() {
        return Err(LoewnerError::malformed("curve has no points besides the origin"));
    }
    if let Some(z) = pts.iter().find(|z| !(z.im > 0.0) || !z.re.is_finite()) {
        return Err(LoewnerError::domain(format!("curve point {z} is not in the open upper half-plane")));
    }
    if opts.check_simple {
        let mut all = Vec::with_capacity(pts.len() + 1);
        all.push(C::new(0.0, 0.0));
        all.extend_from_slice(pts);
        let times = (0..all.len()).map(|k| k as f64).collect();
        CurveSample::new(times, all)?.check_simple()?;
    }

    let mut images: Vec<C> = pts.to_vec();
    let mut carried: Vec<Jet> = passengers.to_vec();
    let mut steps = Vec::with_capacity(pts.len());
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    let mut skipped = 0;
    for k in 0..images.len() {
        let w = images[k];
        let scale = pts[k].norm().max(1e-300);
        let repeated = k > 0 && (pts[k] - pts[k - 1]).norm() < 1e-13 * scale;
        if repeated || w.norm() < 1e-13 * scale {
            skipped += 1;
            continue;
        }
        let (slope, dt) = fit_slit(w, opts.vertical_angle).map_err(|e| match e {
            LoewnerError::Resolution { message, suggested_refinement } => LoewnerError::Resolution {
                message: format!("{message} at sample {}", k + start),
                suggested_refinement,
            },
            other => other,
        })?;
        let rest = &mut images[k + 1..];
        let moved: Vec<Result<C>> = exec.map(rest, |z| {
            flow_jet(Jet::value(*z), slope, dt, &opts.flow).map(|j| j.z).map_err(|_| {
                LoewnerError::Resolution {
                    message: format!("a later sample was swallowed at zipper step {}", k + start),
                    suggested_refinement: 2.0,
                }
            })
        });
        for (z, m) in rest.iter_mut().zip(moved) {
            *z = m?;
        }
        let moved: Vec<Result<Jet>> = exec.map(&carried, |j| flow_jet(*j, slope, dt, &opts.flow));
        for (j, m) in carried.iter_mut().zip(moved) {
            *j = m?;
        }
        steps.push(ZipperStep { tip: w, dt, slope });
        times.push(times.last().unwrap() + dt);
        values.push(values.last().unwrap() + slope * dt);
    }
    let driving = DrivingFunction::new(times, values)?;
    Ok(Zipped {
        steps,
        driving,
        passengers: carried,
        skipped,
    })
}

/// Driving function of the curve through `points` (which starts at 0).
pub fn inverse_transform(points: &[C], opts: &ZipOptions, exec: Execution) -> Result<DrivingFunction> {
    Ok(zip(points, &[], opts, exec)?.driving)
}

/// Re-times a raw point sequence by half-plane capacity.
pub fn reparametrize(points: &[C], opts: &ZipOptions, exec: Execution) -> Result<CurveSample> {
    let z = zip(points, &[], opts, exec)?;
    if z.skipped > 0 {
        return Err(LoewnerError::malformed("duplicate consecutive samples"));
    }
    let mut pts = Vec::with_capacity(points.len() + 1);
    if points.first() != Some(&C::new(0.0, 0.0)) {
        pts.push(C::new(0.0, 0.0));
    }
    pts.extend_from_slice(points);
    CurveSample::new(z.sample_times(), pts)
}

/// `hcap` of a sampled curve: `2·(last time)`, cross-checked by zipping.
///
/// Returns `(declared, zipped)`.
pub fn curve_hcap(curve: &CurveSample, opts: &ZipOptions, exec: Execution) -> Result<(f64, f64)> {
    if curve.points.iter().any(|z| !z.norm().is_finite()) {
        return Err(LoewnerError::domain("curve is unbounded"));
    }
    let z = zip(&curve.points, &[], opts, exec)?;
    Ok((curve.hcap(), z.hcap()))
}

/// The trace of `lambda` up to `horizon`, continued by the vertical tail
/// `f_T⁻¹(2i√s)` for `0 < s ≤ tail_capacity` (the trace of the constant
/// extension).
pub fn trace_with_tail(
    lambda: &DrivingFunction,
    horizon: f64,
    resolution: f64,
    tail_capacity: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<CurveSample> {
    let head = flow::trace(lambda, horizon, resolution, opts, exec)?;
    if !(tail_capacity > 0.0) {
        return Ok(head);
    }
    let segments = lambda.segments(horizon);
    let mut tail_s = Vec::new();
    let mut s = resolution;
    // linear spacing near the junction, then geometric growth
    while s < tail_capacity.min(1.0) {
        tail_s.push(s);
        s += resolution;
    }
    let ratio = 1.0 + 10.0 * resolution;
    let mut s = tail_s.last().copied().unwrap_or(resolution).max(resolution);
    while s < tail_capacity {
        s = (s * ratio).min(tail_capacity);
        tail_s.push(s);
    }
    let tail: Vec<Result<C>> = exec.map(&tail_s, |&s| {
        flow::pull_back(&segments, C::new(0.0, 2.0 * s.sqrt()), opts)
    });
    let mut times = head.times;
    let mut points = head.points;
    for (s, z) in tail_s.iter().zip(tail) {
        times.push(horizon + s);
        points.push(z?);
    }
    CurveSample::new(times, points)
}

/// `z ↦ −1/z` applied to the samples, in reversed order.
///
/// Samples with modulus below `1e-12` (the base point) are dropped; the
/// count is returned alongside.
pub fn reverse_curve(curve: &CurveSample) -> (Vec<C>, usize) {
    let mut trimmed = 0;
    let mut out = Vec::with_capacity(curve.len());
    for z in curve.points.iter().rev() {
        if z.norm() < 1e-12 {
            trimmed += 1;
            continue;
        }
        out.push(-1.0 / z);
    }
    (out, trimmed)
}

/// `Rev(λ)`: the driving function of `−1/γ` traversed from `∞` back to 0,
/// where `γ` is the trace of `λ` (constant after `horizon`) cut at capacity
/// `horizon + tail_capacity`.
pub fn rev_driving(
    lambda: &DrivingFunction,
    horizon: f64,
    resolution: f64,
    tail_capacity: f64,
    opts: &ZipOptions,
    exec: Execution,
) -> Result<DrivingFunction> {
    let curve = trace_with_tail(lambda, horizon, resolution, tail_capacity, &opts.flow, exec)?;
    let (reversed, _) = reverse_curve(&curve);
    let no_check = ZipOptions {
        check_simple: false,
        ..*opts
    };
    inverse_transform(&reversed, &no_check, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversalRow {
    pub resolution: f64,
    pub tail_capacity: f64,
    pub energy_fwd: f64,
    pub energy_rev: f64,
    pub rel_err: f64,
}

/// Energy of `Rev(λ)` against `I(λ)` over a sequence of refinement levels.
pub fn reversal_table(
    lambda: &DrivingFunction,
    horizon: f64,
    levels: &[(f64, f64)],
    opts: &ZipOptions,
    exec: Execution,
) -> Result<Vec<ReversalRow>> {
    let fwd = lambda.energy(horizon)?.total;
    levels
        .iter()
        .map(|&(resolution, tail_capacity)| {
            let rev = rev_driving(lambda, horizon, resolution, tail_capacity, opts, exec)?;
            let energy_rev = rev.total_energy();
            let rel_err = if fwd > 0.0 {
                (energy_rev - fwd).abs() / fwd
            } else {
                energy_rev.abs()
            };
            Ok(ReversalRow {
                resolution,
                tail_capacity,
                energy_fwd: fwd,
                energy_rev,
                rel_err,
            })
        })
        .collect()
}

/// Default refinement levels for [`reversal_table`]. The tail grows like
/// `1/resolution²` so that truncation and discretization errors shrink
/// together instead of cancelling at some level.
pub const DEFAULT_REVERSAL_LEVELS: [(f64, f64); 4] =
    [(8e-3, 1.5625), (4e-3, 6.25), (2e-3, 25.0), (1e-3, 100.0)];

pub fn write_reversal_csv<W: std::io::Write>(rows: &[ReversalRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["resolution", "tail_capacity", "energy_fwd", "energy_rev", "rel_err"])?;
    for r in rows {
        w.write_record([
            r.resolution.to_string(),
            r.tail_capacity.to_string(),
            r.energy_fwd.to_string(),
            r.energy_rev.to_string(),
            r.rel_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn fit_recovers_linear_slits() {
        for &(m, dt) in &[(0.0, 0.3), (1.0, 1.0), (-3.0, 0.01), (40.0, 0.5)] {
            let tip = flow::linear_tip(m, dt);
            let (m2, dt2) = fit_slit(tip, 1e-9).unwrap();
            assert!((dt2 - dt).abs() < 1e-12 * (1.0 + dt), "{m} {dt}: {dt2}");
            assert!((m2 - m).abs() < 1e-9 * (1.0 + m.abs()), "{m} {dt}: {m2}");
        }
        assert!(matches!(fit_slit(c(1.0, -0.1), 1e-6), Err(LoewnerError::Resolution { .. })));
    }

    #[test]
    fn vertical_segment_has_zero_driving() {
        let pts: Vec<C> = (1..=1000).map(|k| c(0.0, 2.0 * k as f64 / 1000.0)).collect();
        let lam = inverse_transform(&pts, &ZipOptions::default(), Execution::Sequential).unwrap();
        assert!((lam.last_time() - 1.0).abs() < 1e-9);
        assert!(lam.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn jets_follow_explicit_map() {
        // λ ≡ 0 over time t: f(z) = √(z² + 4t)
        let t = 0.3;
        let z0 = c(2.0, 0.0);
        let j = flow_jet(Jet::point(z0), 0.0, t, &FlowOptions::default()).unwrap();
        let r = (z0 * z0 + 4.0 * t).sqrt();
        assert!((j.z - r).norm() < 1e-9);
        assert!((j.d1 - z0 / r).norm() < 1e-9);
        let d2 = 4.0 * t / (r * r * r);
        assert!((j.d2 - d2).norm() < 1e-8);
        let d3 = -12.0 * t * z0 / r.powi(5);
        assert!((j.d3 - d3).norm() < 1e-8);
    }

    #[test]
    fn reversed_axis() {
        let curve = CurveSample::new(
            vec![0.0, 0.25, 1.0],
            vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, 2.0)],
        )
        .unwrap();
        let (rev, trimmed) = reverse_curve(&curve);
        assert_eq!(trimmed, 1);
        assert!((rev[0] - c(0.0, 0.5)).norm() < 1e-15);
        assert!((rev[1] - c(0.0, 1.0)).norm() < 1e-15);
    }
}
