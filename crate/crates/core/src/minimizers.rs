//! Energy minimizers: the closed-form one-point minimizer, multi-point
//! constructions, constraint checks and penalized numerical minimization.

use serde::{Deserialize, Serialize};

use crate::driving::{DrivingFunction, Segment};
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::{self, CircleDriving, Fate, FlowOptions, C};
use crate::ode::{self, Control, OdeFailure};
use crate::optim::{self, BfgsOptions};

/// A labelled point: `side = +1` asks the curve to leave `z` on its right,
/// `side = −1` on its left. Hitting `z` satisfies either label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub z: C,
    pub side: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Constraint>", into = "Vec<Constraint>")]
pub struct ConstraintSet {
    points: Vec<Constraint>,
}

impl TryFrom<Vec<Constraint>> for ConstraintSet {
    type Error = LoewnerError;

    fn try_from(points: Vec<Constraint>) -> Result<Self> {
        ConstraintSet::new(points)
    }
}

impl From<ConstraintSet> for Vec<Constraint> {
    fn from(c: ConstraintSet) -> Self {
        c.points
    }
}

impl ConstraintSet {
    pub fn new(points: Vec<Constraint>) -> Result<Self> {
        for (i, c) in points.iter().enumerate() {
            if !(c.z.im > 0.0) || !c.z.re.is_finite() {
                return Err(LoewnerError::domain(format!("constraint point {} is not in the upper half-plane", c.z)));
            }
            if c.side != 1 && c.side != -1 {
                return Err(LoewnerError::malformed(format!("side label must be ±1, got {}", c.side)));
            }
            if points[..i].iter().any(|d| d.z == c.z) {
                return Err(LoewnerError::malformed(format!("duplicate constraint point {}", c.z)));
            }
        }
        Ok(ConstraintSet { points })
    }

    pub fn single(z: C, side: i8) -> Result<Self> {
        Self::new(vec![Constraint { z, side }])
    }

    pub fn points(&self) -> &[Constraint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reflection `z ↦ −z̄` with labels swapped.
    pub fn mirror(&self) -> Self {
        ConstraintSet {
            points: self
                .points
                .iter()
                .map(|c| Constraint { z: -c.z.conj(), side: -c.side })
                .collect(),
        }
    }

    /// `R²/2` with `R = 2·max|z_i|`: the capacity time after which no
    /// bounded-energy competitor can still change a point's side.
    pub fn horizon(&self) -> f64 {
        let r = 2.0 * self.points.iter().map(|c| c.z.norm()).fold(0.0, f64::max);
        r * r / 2.0
    }
}

/// Outcome for one constrained point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStatus {
    pub hit: bool,
    pub tau: Option<f64>,
    /// `cot(arg f_T(z))` when the point survives.
    pub w: Option<f64>,
    pub compatible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerDiagnostics {
    pub horizon: f64,
    pub knots: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_penalty_weight: f64,
    pub best_start: String,
    /// `(start, energy, feasible)` for every start.
    pub starts: Vec<(String, f64, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub driving: DrivingFunction,
    pub energy: f64,
    pub hitting_times: Vec<PointStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<OptimizerDiagnostics>,
}

/// Samples of the one-point minimizer together with the flowed target.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerPath {
    pub driving: DrivingFunction,
    /// `(t, f_t(z))` at every driving sample.
    pub path: Vec<(f64, C)>,
    pub tau: f64,
}

/// Largest capacity step between samples of the minimizer, relative to `|z|²`.
const MINIMIZER_STEP: f64 = 1e-3;

/// Integrates `λ̇ = 8 Re z / |z|²`, `ż = 2/z − λ̇` from `z` until `z` is
/// swallowed; the driving function is constant afterwards.
pub fn minimizer_path(z: C, opts: &FlowOptions) -> Result<MinimizerPath> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(LoewnerError::domain(format!("target {z} is not in the upper half-plane")));
    }
    let scale = z.norm_sqr();
    let threshold = opts.swallow_rel * (1.0 + z.norm()).powi(2);
    let tol = opts.tolerance();
    let rhs = |_: f64, y: &[f64; 3]| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        let d = 8.0 * y[0] / r2;
        [2.0 * y[0] / r2 - d, -2.0 * y[1] / r2, d]
    };
    let mut path = vec![(0.0, z)];
    let mut lambda = vec![0.0];
    let mut y = [z.re, z.im, 0.0];
    let mut t = 0.0;
    let chunk = MINIMIZER_STEP * scale;
    let t_limit = 10.0 * scale;
    loop {
        let mut stopped = false;
        let res = ode::integrate(rhs, t, y, t + chunk, &tol, None, |s, v| {
            path.push((s, C::new(v[0], v[1])));
            lambda.push(v[2]);
            if v[0] * v[0] + v[1] * v[1] < threshold {
                stopped = true;
                Control::Stop
            } else {
                Control::Continue
            }
        });
        match res {
            Ok(sol) => {
                t = sol.t;
                y = sol.y;
            }
            Err(OdeFailure::StepUnderflow { t: s, y: v, .. }) => {
                t = s;
                y = v;
                stopped = true;
            }
            Err(OdeFailure::TooManySteps { .. }) => {
                return Err(LoewnerError::accuracy("minimizer integration exceeded its step budget"));
            }
        }
        if stopped {
            break;
        }
        if t > t_limit {
            return Err(LoewnerError::accuracy(format!("minimizer for {z} did not hit its target")));
        }
    }
    let zt = C::new(y[0], y[1]);
    let tau = t - (zt * zt).re / 4.0;
    let mut times: Vec<f64> = path.iter().map(|p| p.0).collect();
    // the driving is constant from the (extrapolated) hitting time on
    if tau > t {
        times.push(tau);
        lambda.push(y[2]);
        path.push((tau, C::new(0.0, 0.0)));
    }
    // merge samples closer than the representable gap
    let mut kt = Vec::with_capacity(times.len());
    let mut kv = Vec::with_capacity(times.len());
    let mut kp = Vec::with_capacity(times.len());
    for ((t, v), p) in times.iter().zip(&lambda).zip(&path) {
        if kt.last().is_none_or(|last: &f64| *t > *last) {
            kt.push(*t);
            kv.push(*v);
            kp.push(*p);
        }
    }
    Ok(MinimizerPath {
        driving: DrivingFunction::new(kt, kv)?,
        path: kp,
        tau: tau.max(t),
    })
}

fn hit_result(driving: DrivingFunction, tau: f64) -> MinimizerResult {
    MinimizerResult {
        energy: driving.total_energy(),
        driving,
        hitting_times: vec![PointStatus {
            hit: true,
            tau: Some(tau),
            w: None,
            compatible: true,
        }],
        diagnostics: None,
    }
}

/// The minimal-energy driving function whose curve hits `e^{iθ}`.
pub fn one_point_minimizer(theta: f64) -> Result<MinimizerResult> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(LoewnerError::domain(format!("angle {theta} is outside (0, π)")));
    }
    minimizer_through(C::from_polar(1.0, theta))
}

/// The minimal-energy driving function whose curve hits `z`.
pub fn minimizer_through(z: C) -> Result<MinimizerResult> {
    let p = minimizer_path(z, &FlowOptions::default())?;
    Ok(hit_result(p.driving, p.tau))
}

/// `−8 ln sin θ`, the energy of [`one_point_minimizer`].
pub fn one_point_energy(theta: f64) -> f64 {
    -8.0 * theta.sin().ln()
}

/// Radial driving function `ξ(t) = arccos(e^{−t} cos θ)` on `[0, t_max]`.
pub fn radial_minimizer_driving(theta: f64, t_max: f64, step: f64) -> Result<CircleDriving> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(LoewnerError::domain(format!("angle {theta} is outside (0, π)")));
    }
    CircleDriving::from_fn(|t| ((-t).exp() * theta.cos()).acos(), t_max, step)
}

/// Möbius map of `ℍ` onto the disk sending `e^{iθ}` to 0, 0 to `e^{iθ}` and
/// `∞` to `e^{−iθ}`.
pub fn disk_map(theta: f64, z: C) -> C {
    let e = C::from_polar(1.0, theta);
    (z - e) / (z - e.conj()) / e
}

/// A finite-energy driving function whose curve visits every point: hit the
/// first, then the image of the second in the remaining domain, and so on.
pub fn multi_point_construction(points: &[C]) -> Result<MinimizerResult> {
    if points.is_empty() {
        return Err(LoewnerError::malformed("no points to visit"));
    }
    for z in points {
        if !(z.im > 0.0) {
            return Err(LoewnerError::domain(format!("{z} is not in the upper half-plane")));
        }
    }
    let mut last_err = None;
    for order in visiting_orders(points.len()) {
        match construct_in_order(points, &order) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| LoewnerError::geometry("no visiting order succeeded")))
}

fn visiting_orders(n: usize) -> Vec<Vec<usize>> {
    fn permute(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            permute(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    if n <= 6 {
        let mut out = Vec::new();
        permute(&mut Vec::new(), &mut (0..n).collect(), &mut out);
        out
    } else {
        (0..n).map(|r| (0..n).map(|k| (k + r) % n).collect()).collect()
    }
}

/// [`multi_point_construction`] with a fixed visiting order (a permutation
/// of the point indices).
pub fn construct_in_order(points: &[C], order: &[usize]) -> Result<MinimizerResult> {
    let mut seen = vec![false; points.len()];
    if order.len() != points.len() || order.iter().any(|&k| k >= points.len() || std::mem::replace(&mut seen[k], true)) {
        return Err(LoewnerError::malformed("visiting order is not a permutation"));
    }
    let opts = FlowOptions::default();
    let mut current: Vec<C> = points.to_vec();
    let mut tau: Vec<Option<f64>> = vec![None; points.len()];
    let mut driving = DrivingFunction::zero(0.0);
    for &k in order {
        if tau[k].is_some() {
            continue;
        }
        let offset = driving.last_time();
        let piece = minimizer_path(current[k], &opts)?;
        let segments = piece.driving.segments(piece.driving.last_time());
        for j in 0..points.len() {
            if j == k || tau[j].is_some() {
                continue;
            }
            match flow::flow_point(&segments, current[j], &opts)? {
                Fate::Alive(w) => current[j] = w,
                Fate::Swallowed { tau: s, .. } => tau[j] = Some(offset + s),
            }
        }
        tau[k] = Some(offset + piece.tau);
        driving = driving.concat(&piece.driving);
    }
    let energy = driving.total_energy();
    Ok(MinimizerResult {
        driving,
        energy,
        hitting_times: tau
            .iter()
            .map(|t| PointStatus { hit: true, tau: *t, w: None, compatible: true })
            .collect(),
        diagnostics: None,
    })
}

/// Membership of `λ` in `D^T(ẑ)`, point by point.
pub fn compatible(
    lambda: &DrivingFunction,
    constraints: &ConstraintSet,
    horizon: f64,
    opts: &FlowOptions,
    exec: Execution,
) -> Result<Vec<PointStatus>> {
    let zs: Vec<C> = constraints.points().iter().map(|c| c.z).collect();
    let state = flow::flow_points(lambda, &zs, horizon, opts, exec)?;
    Ok(state
        .points
        .iter()
        .zip(constraints.points())
        .map(|(p, c)| {
            if p.alive {
                let w = p.position.re / p.position.im;
                PointStatus { hit: false, tau: None, w: Some(w), compatible: w * c.side as f64 >= 0.0 }
            } else {
                PointStatus { hit: true, tau: p.tau, w: None, compatible: true }
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstrainedOptions {
    pub knots: usize,
    /// Knots sit at `T·(k/n)^grading`; values above 1 refine early times,
    /// where hits of nearby points happen.
    pub grading: f64,
    /// Capacity horizon; `None` uses [`ConstraintSet::horizon`].
    pub horizon: Option<f64>,
    pub rounds: usize,
    pub initial_weight: f64,
    pub weight_factor: f64,
    pub fd_step: f64,
    pub max_iter: usize,
    /// Largest knot-value change per line-search trial.
    pub max_step: f64,
    pub flow: FlowOptions,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        ConstrainedOptions {
            knots: 64,
            grading: 2.0,
            horizon: None,
            rounds: 8,
            initial_weight: 100.0,
            weight_factor: 10.0,
            fd_step: 1e-4,
            max_iter: 200,
            max_step: 0.05,
            flow: FlowOptions::default(),
        }
    }
}

/// Violation of one constraint by the flow through `segments`: zero when the
/// point ends on its side or comes within a quarter of the swallowing
/// threshold of the curve, otherwise the smaller of the two remedies, both
/// measured in the `f²` coordinate relative to `|z|²`.
///
/// The hit remedy is `min_t |f_t(z)|² − threshold/4`, which is continuous
/// across the swallowing event; zero violation always means a genuine hit.
fn violation(segments: &[Segment], c: &Constraint, opts: &FlowOptions) -> f64 {
    let tol = opts.tolerance();
    let z0 = c.z;
    let threshold = opts.swallow_rel * (1.0 + z0.norm()).powi(2);
    let mut z = z0;
    let mut closest = z0.norm_sqr();
    let hit_gap = |closest: f64| (closest - 0.25 * threshold).max(0.0) / z0.norm_sqr();
    for seg in segments.iter().filter(|s| !s.is_empty()) {
        let m = seg.slope;
        let rhs = move |_: f64, y: &[f64; 2]| {
            let d = 2.0 / C::new(y[0], y[1]) - m;
            [d.re, d.im]
        };
        let mut prev = z * z;
        let mut hit = false;
        let res = ode::integrate(rhs, seg.t0, [z.re, z.im], seg.t1, &tol, None, |_, y| {
            let w = C::new(y[0], y[1]);
            let sq = w * w;
            closest = closest.min(segment_distance(prev, sq));
            prev = sq;
            if w.norm_sqr() < threshold {
                hit = true;
                Control::Stop
            } else {
                Control::Continue
            }
        });
        match res {
            Ok(sol) => z = C::new(sol.y[0], sol.y[1]),
            Err(_) => hit = true,
        }
        if hit {
            return hit_gap(closest);
        }
    }
    if z.re * c.side as f64 >= 0.0 {
        return 0.0;
    }
    hit_gap(closest).min(z.re * z.re / z0.norm_sqr())
}

/// Distance from 0 to the segment `[a, b]`.
fn segment_distance(a: C, b: C) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return a.norm();
    }
    let s = (-(a * ab.conj()).re / len2).clamp(0.0, 1.0);
    (a + ab * s).norm()
}

/// Knot times `T·(k/n)^p`, `k = 0..=n`.
fn knot_times(horizon: f64, knots: usize, grading: f64) -> Vec<f64> {
    (0..=knots).map(|k| horizon * (k as f64 / knots as f64).powf(grading)).collect()
}

fn knot_segments(x: &[f64], t: &[f64]) -> Vec<Segment> {
    let mut prev = 0.0;
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            let h = t[k + 1] - t[k];
            let s = Segment { t0: t[k], t1: t[k + 1], v0: prev, slope: (v - prev) / h };
            prev = v;
            s
        })
        .collect()
}

fn knot_energy(x: &[f64], t: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut e = 0.0;
    for (k, &v) in x.iter().enumerate() {
        e += (v - prev) * (v - prev) / (t[k + 1] - t[k]);
        prev = v;
    }
    e / 2.0
}

fn knot_energy_grad(x: &[f64], t: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let left = (x[k] - if k == 0 { 0.0 } else { x[k - 1] }) / (t[k + 1] - t[k]);
            let right = if k + 1 < n { (x[k + 1] - x[k]) / (t[k + 2] - t[k + 1]) } else { 0.0 };
            left - right
        })
        .collect()
}

fn to_driving(x: &[f64], t: &[f64]) -> Result<DrivingFunction> {
    let mut values = vec![0.0];
    values.extend_from_slice(x);
    DrivingFunction::new(t.to_vec(), values)
}

fn to_knots(start: &DrivingFunction, t: &[f64]) -> Vec<f64> {
    t[1..].iter().map(|&s| start.eval(s)).collect()
}

struct RunOutcome {
    x: Vec<f64>,
    energy: f64,
    feasible: bool,
    converged: bool,
    iterations: usize,
    weight: f64,
}

fn run_penalty(
    constraints: &ConstraintSet,
    x0: Vec<f64>,
    t: &[f64],
    opts: &ConstrainedOptions,
) -> RunOutcome {
    let pts = constraints.points();
    let penalty = |x: &[f64]| -> f64 {
        let segs = knot_segments(x, t);
        pts.iter().map(|c| violation(&segs, c, &opts.flow)).sum()
    };
    let mut x = x0;
    let mut weight = opts.initial_weight;
    let mut converged = false;
    let mut iterations = 0;
    for round in 0..opts.rounds {
        let mu = weight;
        let objective = |x: &[f64]| knot_energy(x, t) + mu * penalty(x);
        let gradient = |x: &[f64], fx: f64| {
            let base_pen = (fx - knot_energy(x, t)) / mu;
            let mut g = knot_energy_grad(x, t);
            if base_pen == 0.0 {
                return g;
            }
            let mut xp = x.to_vec();
            for k in 0..x.len() {
                let old = xp[k];
                xp[k] = old + opts.fd_step;
                let up = penalty(&xp);
                xp[k] = old - opts.fd_step;
                let down = penalty(&xp);
                g[k] += mu * (up - down) / (2.0 * opts.fd_step);
                xp[k] = old;
            }
            g
        };
        let r = optim::bfgs(
            objective,
            gradient,
            &x,
            &BfgsOptions { max_iter: opts.max_iter, gtol: 1e-7, ftol: 1e-13, max_step: opts.max_step },
        );
        x = r.x;
        iterations += r.iterations;
        converged = r.converged;
        let pen = penalty(&x);
        if pen == 0.0 && round > 0 {
            break;
        }
        if round + 1 < opts.rounds {
            weight *= opts.weight_factor;
        }
    }
    let feasible = penalty(&x) == 0.0;
    RunOutcome { energy: knot_energy(&x, t), x, feasible, converged, iterations, weight }
}

/// Starting drivers for [`minimize_constrained`]: the multi-point
/// construction, its mirror image, the zero driver and per-point minimizers.
pub fn default_starts(constraints: &ConstraintSet) -> Vec<(String, DrivingFunction)> {
    let mut starts = Vec::new();
    let zs: Vec<C> = constraints.points().iter().map(|c| c.z).collect();
    if let Ok(r) = multi_point_construction(&zs) {
        starts.push(("construction".to_string(), r.driving.clone()));
        starts.push(("construction-mirror".to_string(), r.driving.reflect()));
    }
    starts.push(("zero".to_string(), DrivingFunction::zero(1.0)));
    for (i, c) in constraints.points().iter().enumerate() {
        if let Ok(r) = minimizer_through(c.z) {
            starts.push((format!("hit-{i}"), r.driving));
        }
    }
    starts
}

/// Minimizes `I_T` over piecewise-linear drivers with `knots` knots on
/// `[0, T]` (see [`ConstrainedOptions::grading`]) subject to the constraints, from the given start.
pub fn minimize_from(
    constraints: &ConstraintSet,
    start: &DrivingFunction,
    opts: &ConstrainedOptions,
) -> Result<MinimizerResult> {
    minimize_with_starts(constraints, &[("start".to_string(), start.clone())], opts, Execution::Sequential)
}

/// Penalized minimization of `I_T` over `D^T(ẑ)` with multistart.
pub fn minimize_constrained(
    constraints: &ConstraintSet,
    opts: &ConstrainedOptions,
    exec: Execution,
) -> Result<MinimizerResult> {
    minimize_with_starts(constraints, &default_starts(constraints), opts, exec)
}

pub fn minimize_with_starts(
    constraints: &ConstraintSet,
    starts: &[(String, DrivingFunction)],
    opts: &ConstrainedOptions,
    exec: Execution,
) -> Result<MinimizerResult> {
    if constraints.is_empty() {
        return Err(LoewnerError::malformed("constraint set is empty"));
    }
    if opts.knots == 0 || starts.is_empty() || !(opts.grading >= 1.0) {
        return Err(LoewnerError::malformed("need a knot, a start and grading ≥ 1"));
    }
    let horizon = opts.horizon.unwrap_or_else(|| constraints.horizon());
    if !(horizon > 0.0) {
        return Err(LoewnerError::malformed("horizon must be positive"));
    }
    let t = knot_times(horizon, opts.knots, opts.grading);
    let runs = exec.map(starts, |(_, d)| run_penalty(constraints, to_knots(d, &t), &t, opts));
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (!a.1.feasible, a.1.energy)
                .partial_cmp(&(!b.1.feasible, b.1.energy))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap();
    let run = &runs[best];
    let driving = to_driving(&run.x, &t)?;
    let hitting_times = compatible(&driving, constraints, horizon, &opts.flow, Execution::Sequential)?;
    Ok(MinimizerResult {
        energy: driving.total_energy(),
        driving,
        hitting_times,
        diagnostics: Some(OptimizerDiagnostics {
            horizon,
            knots: opts.knots,
            converged: run.converged,
            iterations: run.iterations,
            final_penalty_weight: run.weight,
            best_start: starts[best].0.clone(),
            starts: starts
                .iter()
                .zip(&runs)
                .map(|((name, _), r)| (name.clone(), r.energy, r.feasible))
                .collect(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn vertical_minimizer() {
        let r = one_point_minimizer(PI / 2.0).unwrap();
        assert!(r.energy < 1e-12);
        assert!((r.hitting_times[0].tau.unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn one_point_energies() {
        for theta in [PI / 6.0, PI / 4.0, PI / 3.0, 2.0 * PI / 3.0] {
            let r = one_point_minimizer(theta).unwrap();
            assert!((r.energy - one_point_energy(theta)).abs() < 1e-3, "θ = {theta}: {}", r.energy);
        }
        assert!(one_point_minimizer(0.0).is_err());
        assert!(one_point_minimizer(PI).is_err());
    }

    #[test]
    fn radial_driving_values() {
        let xi = radial_minimizer_driving(PI / 2.0, 5.0, 0.01).unwrap();
        assert!(xi.values.iter().all(|v| (v - PI / 2.0).abs() < 1e-15));
        let xi = radial_minimizer_driving(PI / 3.0, 5.0, 0.001).unwrap();
        let v = xi.eval(2f64.ln());
        assert!((v.cos() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn disk_map_normalization() {
        let theta = 0.7;
        assert!(disk_map(theta, C::from_polar(1.0, theta)).norm() < 1e-15);
        assert!((disk_map(theta, C::new(0.0, 0.0)) - C::from_polar(1.0, theta)).norm() < 1e-15);
        assert!((disk_map(theta, C::new(1e12, 0.0)) - C::from_polar(1.0, -theta)).norm() < 1e-9);
    }

    #[test]
    fn constraint_validation() {
        assert!(ConstraintSet::single(C::new(1.0, -1.0), 1).is_err());
        assert!(ConstraintSet::single(C::new(1.0, 1.0), 0).is_err());
        let z = C::new(1.0, 1.0);
        assert!(ConstraintSet::new(vec![Constraint { z, side: 1 }, Constraint { z, side: -1 }]).is_err());
        let json = r#"[{"z":[1.0,1.0],"side":1}]"#;
        let cs: ConstraintSet = serde_json::from_str(json).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(serde_json::from_str::<ConstraintSet>(r#"[{"z":[1.0,-1.0],"side":1}]"#).is_err());
    }

    #[test]
    fn compatibility_of_axis() {
        let zero = DrivingFunction::zero(2.0);
        let opts = FlowOptions::default();
        let right = ConstraintSet::single(C::new(1.0, 1.0), 1).unwrap();
        let left = ConstraintSet::single(C::new(-1.0, 1.0), 1).unwrap();
        assert!(compatible(&zero, &right, 2.0, &opts, Execution::Sequential).unwrap()[0].compatible);
        assert!(!compatible(&zero, &left, 2.0, &opts, Execution::Sequential).unwrap()[0].compatible);
    }
}
