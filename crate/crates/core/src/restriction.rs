//! Energy of a curve in a restricted domain, and the two-slit commutation
//! relation.
//!
//! For a hull `K` away from the curve, `ψ_s` maps `ℍ \ f_s(K)` onto `ℍ`
//! fixing 0 and ∞ with `ψ_s(z) − z` bounded. Its derivatives at the tip
//! frame's origin are read off by mapping out `f_s(K)` with the zipper while
//! carrying a jet based at 0. Time integrals use Gauss–Legendre nodes in
//! `u = √(s/t)`, which crowds them towards `s = 0` where the integrands
//! change fastest for distant hulls; between nodes the data are
//! interpolated in `u`.

use serde::{Deserialize, Serialize};

use crate::curve;
use crate::driving::DrivingFunction;
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::{self, FlowOptions, C};
use crate::hull::{self, Boundary, SlitHull};
use crate::quadrature::gauss_legendre_on;
use crate::zipper::{self, Jet, ZipOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestrictionOptions {
    /// Samples per hull boundary arc.
    pub boundary_samples: usize,
    /// Quadrature nodes in time.
    pub nodes: usize,
    /// Flow used to move the hull; a boundary sample that gets swallowed
    /// means the curve runs into the hull.
    pub flow: FlowOptions,
    /// Zipper used to map out the moved hull.
    pub zip: ZipOptions,
}

impl Default for RestrictionOptions {
    fn default() -> Self {
        RestrictionOptions {
            boundary_samples: 400,
            nodes: 32,
            flow: FlowOptions::default(),
            zip: ZipOptions::fine(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiDerivatives {
    pub time: f64,
    pub psi_prime: f64,
    pub psi_double_prime: f64,
    pub psi_triple_prime: f64,
    /// `ψ″(0)/ψ′(0)`.
    pub pre_schwarzian: f64,
    /// `Sψ(0)`.
    pub schwarzian: f64,
}

impl PsiDerivatives {
    fn from_jet(time: f64, j: &Jet) -> Self {
        PsiDerivatives {
            time,
            psi_prime: j.d1.re,
            psi_double_prime: j.d2.re,
            psi_triple_prime: j.d3.re,
            pre_schwarzian: j.pre_schwarzian().re,
            schwarzian: j.schwarzian().re,
        }
    }
}

/// Boundary arcs of `f_t(K)`.
fn flowed_boundaries(hull: &SlitHull, lambda: &DrivingFunction, t: f64, opts: &RestrictionOptions) -> Result<Vec<Boundary>> {
    let mut bnds = hull.boundaries(opts.boundary_samples);
    if t == 0.0 {
        return Ok(bnds);
    }
    let all: Vec<C> = bnds.iter().flat_map(|b| b.points.iter().copied()).collect();
    let state = flow::flow_points(lambda, &all, t, &opts.flow, Execution::Sequential)?;
    if let Some(p) = state.points.iter().find(|p| !p.alive) {
        return Err(LoewnerError::geometry(format!(
            "the curve runs into the hull near {} before time {t}",
            p.start
        )));
    }
    let mut moved = state.points.iter().map(|p| p.position);
    for b in bnds.iter_mut() {
        for z in b.points.iter_mut() {
            let real = z.im == 0.0;
            *z = moved.next().expect("one flowed point per sample");
            if real {
                z.im = 0.0;
            }
        }
    }
    Ok(bnds)
}

/// Fails when the trace of `lambda` on `[0, t]` meets the hull. Crossings
/// between boundary samples are invisible to the flow, so the sampled trace
/// is tested against the boundary polylines.
fn check_apart(hull: &SlitHull, lambda: &DrivingFunction, t: f64, opts: &RestrictionOptions) -> Result<()> {
    if t == 0.0 {
        return Ok(());
    }
    let times = graded_times(lambda, t, 1e-3 * t.min(1.0));
    let mut trace = vec![C::new(0.0, 0.0)];
    trace.extend(flow::trace_at(lambda, &times, &opts.flow, Execution::Sequential)?);
    for b in hull.boundaries(opts.boundary_samples) {
        let gap = curve::nearest(&b.points, &trace);
        if gap < 1e-9 || curve::polylines_cross(&trace, &b.points) {
            return Err(LoewnerError::geometry(format!(
                "the curve meets the hull before time {t}"
            )));
        }
    }
    Ok(())
}

/// Jet of `ψ_t` at 0 computed with the zipper, also at `t = 0`.
pub fn psi_jet_zipped(hull: &SlitHull, lambda: &DrivingFunction, t: f64, opts: &RestrictionOptions) -> Result<Jet> {
    hull.check_clear_of_origin()?;
    let bnds = flowed_boundaries(hull, lambda, t, opts)?;
    let z = hull::zip_hull(&bnds, &[Jet::point(C::new(0.0, 0.0))], &opts.zip, Execution::Sequential)?;
    Ok(z.passengers[0])
}

/// `ψ_t′(0)`, `ψ_t″(0)`, `ψ_t‴(0)` and the Schwarzian at 0. The explicit
/// map-out is used at `t = 0`, the zipper afterwards.
pub fn psi_derivatives(hull: &SlitHull, lambda: &DrivingFunction, t: f64, opts: &RestrictionOptions) -> Result<PsiDerivatives> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LoewnerError::malformed("capacity time must be finite and nonnegative"));
    }
    hull.check_clear_of_origin()?;
    check_apart(hull, lambda, t, opts)?;
    psi_derivatives_at(hull, lambda, t, opts)
}

/// [`psi_derivatives`] without the collision check, for callers that made it
/// once for the whole time interval.
fn psi_derivatives_at(hull: &SlitHull, lambda: &DrivingFunction, t: f64, opts: &RestrictionOptions) -> Result<PsiDerivatives> {
    let jet = if t == 0.0 {
        hull.psi_jet()
    } else {
        psi_jet_zipped(hull, lambda, t, opts)?
    };
    Ok(PsiDerivatives::from_jet(t, &jet))
}

/// `ψ_t′(0)` by complex-step differentiation: `Im ψ_t(ih)/h` for tiny `h`.
pub fn psi_prime_complex_step(hull: &SlitHull, lambda: &DrivingFunction, t: f64, h: f64, opts: &RestrictionOptions) -> Result<f64> {
    hull.check_clear_of_origin()?;
    let probe = C::new(0.0, h);
    // the explicit maps rotate through square roots and lose a tiny Im part,
    // so the zipper is used even at t = 0
    let bnds = flowed_boundaries(hull, lambda, t, opts)?;
    let z = hull::zip_hull(&bnds, &[Jet::value(probe)], &opts.zip, Execution::Sequential)?;
    Ok(z.passengers[0].z.im / h)
}

#[derive(Debug, Clone, Copy)]
enum Spacing {
    /// `s = a + (b − a)x²` on `x ∈ [0, 1]`.
    Sqrt,
    /// `s = a·eˣ` on `x ∈ [0, ln(b/a)]`.
    Log,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    spacing: Spacing,
}

impl Panel {
    fn x_of(&self, s: f64) -> f64 {
        match self.spacing {
            Spacing::Sqrt => ((s - self.a) / (self.b - self.a)).max(0.0).sqrt(),
            Spacing::Log => (s / self.a).ln(),
        }
    }

    /// `s(x)` and `ds/dx`.
    fn s_of(&self, x: f64) -> (f64, f64) {
        match self.spacing {
            Spacing::Sqrt => (self.a + (self.b - self.a) * x * x, 2.0 * (self.b - self.a) * x),
            Spacing::Log => {
                let s = self.a * x.exp();
                (s, s)
            }
        }
    }

    fn x_end(&self) -> f64 {
        self.x_of(self.b)
    }
}

/// Composite Gauss–Legendre rule on `[0, t]`: a √-graded panel up to the
/// scale `min(t, scale)` on which the integrand varies near `s = 0`, then
/// panels geometric in `s`.
#[derive(Debug, Clone)]
struct TimeRule {
    panels: Vec<Panel>,
    nodes: usize,
}

impl TimeRule {
    fn new(t: f64, scale: f64, nodes: usize) -> Self {
        let first = t.min(scale);
        let mut panels = vec![Panel { a: 0.0, b: first, spacing: Spacing::Sqrt }];
        let mut a = first;
        while a < t {
            let b = if 32.0 * a >= t { t } else { 16.0 * a };
            panels.push(Panel { a, b, spacing: Spacing::Log });
            a = b;
        }
        TimeRule { panels, nodes }
    }

    /// `(panel, x, s, weight for ds)` at every node.
    fn nodes(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut out = Vec::new();
        for (k, p) in self.panels.iter().enumerate() {
            for (x, w) in gauss_legendre_on(self.nodes, 0.0, p.x_end()) {
                let (s, ds) = p.s_of(x);
                out.push((k, x, s, w * ds));
            }
        }
        out
    }

    /// Piecewise interpolant of values given at [`TimeRule::nodes`].
    fn interpolate(&self, values: &[f64]) -> Vec<Interpolant> {
        let nodes = self.nodes();
        (0..self.panels.len())
            .map(|k| {
                let (x, y) = nodes
                    .iter()
                    .zip(values)
                    .filter(|(n, _)| n.0 == k)
                    .map(|(n, v)| (n.1, *v))
                    .unzip();
                Interpolant::new(x, y)
            })
            .collect()
    }

    /// `½∫₀ᵗ (λ̇_s + c·r(s))² ds` with `r` interpolated per panel.
    fn energy_with_drift(&self, lambda: &DrivingFunction, r: &[Interpolant], c: f64) -> f64 {
        let t = self.panels.last().map_or(0.0, |p| p.b);
        let segments = lambda.segments(t);
        let mut total = 0.0;
        for (p, interp) in self.panels.iter().zip(r) {
            let span = p.x_end();
            for seg in &segments {
                let (lo, hi) = (seg.t0.max(p.a), seg.t1.min(p.b));
                if !(hi > lo) {
                    continue;
                }
                let (xa, xb) = (p.x_of(lo), p.x_of(hi));
                let m = ((self.nodes as f64 * (xb - xa) / span).ceil() as usize).clamp(4, self.nodes.max(4));
                for (x, w) in gauss_legendre_on(m, xa, xb) {
                    let (_, ds) = p.s_of(x);
                    let v = seg.slope + c * interp.eval(x);
                    total += 0.5 * v * v * ds * w;
                }
            }
        }
        total
    }
}

/// Barycentric interpolation through `(x_j, y_j)`.
#[derive(Debug, Clone)]
struct Interpolant {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Interpolant {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let w = (0..x.len())
            .map(|j| {
                1.0 / (0..x.len())
                    .filter(|&k| k != j)
                    .map(|k| x[j] - x[k])
                    .product::<f64>()
            })
            .collect();
        Interpolant { x, y, w }
    }

    fn eval(&self, t: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.x.len() {
            let d = t - self.x[j];
            if d == 0.0 {
                return self.y[j];
            }
            let c = self.w[j] / d;
            num += c * self.y[j];
            den += c;
        }
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMeasure {
    pub value: f64,
    /// `(s, −Sψ_s(0)/3)` at the quadrature nodes.
    pub integrand: Vec<(f64, f64)>,
}

/// Time scale of `ψ_s` near `s = 0`: the squared distance from the hull
/// to the base point.
fn hull_scale(hull: &SlitHull) -> f64 {
    hull.distance_to(&[C::new(0.0, 0.0)], 64).powi(2)
}

fn node_derivatives(
    hull: &SlitHull,
    lambda: &DrivingFunction,
    t: f64,
    opts: &RestrictionOptions,
    exec: Execution,
) -> Result<(TimeRule, Vec<PsiDerivatives>)> {
    let rule = TimeRule::new(t, hull_scale(hull), opts.nodes);
    let nodes = rule.nodes();
    let ds: Vec<Result<PsiDerivatives>> = exec.map(&nodes, |&(_, _, s, _)| psi_derivatives_at(hull, lambda, s, opts));
    Ok((rule, ds.into_iter().collect::<Result<_>>()?))
}

fn loop_measure_from(rule: &TimeRule, ds: &[PsiDerivatives]) -> Result<LoopMeasure> {
    let nodes = rule.nodes();
    let integrand: Vec<(f64, f64)> = nodes.iter().zip(ds).map(|(n, d)| (n.2, -d.schwarzian / 3.0)).collect();
    let scale = integrand.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    if let Some((s, v)) = integrand.iter().find(|(_, v)| *v < -1e-6 * scale.max(1e-300)) {
        return Err(LoewnerError::accuracy(format!(
            "loop-measure integrand is negative ({v:e}) at s = {s}"
        )));
    }
    let value: f64 = nodes.iter().zip(&integrand).map(|(n, (_, v))| n.3 * v).sum();
    Ok(LoopMeasure { value: value.max(0.0), integrand })
}

/// `m^l(γ[0,t], K; ℍ) = −(1/3)∫₀ᵗ Sψ_s(0) ds`.
pub fn loop_measure(
    hull: &SlitHull,
    lambda: &DrivingFunction,
    t: f64,
    opts: &RestrictionOptions,
    exec: Execution,
) -> Result<LoopMeasure> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LoewnerError::malformed("capacity time must be finite and nonnegative"));
    }
    hull.check_clear_of_origin()?;
    if t == 0.0 {
        return Ok(LoopMeasure { value: 0.0, integrand: Vec::new() });
    }
    check_apart(hull, lambda, t, opts)?;
    let (rule, ds) = node_derivatives(hull, lambda, t, opts, exec)?;
    loop_measure_from(&rule, &ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEnergy {
    pub horizon: f64,
    /// `½∫₀ᵗ (Ẇ_s − 3ψ_s″(0)/ψ_s′(0))² ds`.
    pub driving_form: f64,
    /// `I_t(W) + 3 ln ψ_0′(0) + 12 m^l − 3 ln ψ_t′(0)`.
    pub schwarzian_form: f64,
    pub energy: f64,
    pub psi0_prime: f64,
    pub psit_prime: f64,
    pub loop_measure: f64,
}

/// Energy of `ψ_0(γ[0,t])` computed both ways.
pub fn restricted_energy(
    hull: &SlitHull,
    lambda: &DrivingFunction,
    t: f64,
    opts: &RestrictionOptions,
    exec: Execution,
) -> Result<RestrictedEnergy> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LoewnerError::malformed("capacity time must be finite and nonnegative"));
    }
    hull.check_clear_of_origin()?;
    let energy = lambda.energy(t)?.total;
    let psi0 = psi_derivatives(hull, lambda, 0.0, opts)?;
    if t == 0.0 {
        return Ok(RestrictedEnergy {
            horizon: 0.0,
            driving_form: 0.0,
            schwarzian_form: 0.0,
            energy,
            psi0_prime: psi0.psi_prime,
            psit_prime: psi0.psi_prime,
            loop_measure: 0.0,
        });
    }
    check_apart(hull, lambda, t, opts)?;
    let (rule, ds) = node_derivatives(hull, lambda, t, opts, exec)?;
    let psit = psi_derivatives_at(hull, lambda, t, opts)?;
    let lm = loop_measure_from(&rule, &ds)?;
    let r = rule.interpolate(&ds.iter().map(|d| d.pre_schwarzian).collect::<Vec<_>>());
    let driving_form = rule.energy_with_drift(lambda, &r, -3.0);
    let schwarzian_form = energy + 3.0 * psi0.psi_prime.ln() + 12.0 * lm.value - 3.0 * psit.psi_prime.ln();
    Ok(RestrictedEnergy {
        horizon: t,
        driving_form,
        schwarzian_form,
        energy,
        psi0_prime: psi0.psi_prime,
        psit_prime: psit.psi_prime,
        loop_measure: lm.value,
    })
}

/// Capacity times `0 < s ≤ t`: steps of `resolution` up to `min(t, 1)`,
/// then geometric growth, merged with the knots of `lambda`.
pub fn graded_times(lambda: &DrivingFunction, t: f64, resolution: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut s = resolution;
    while s < t.min(1.0) {
        times.push(s);
        s += resolution;
    }
    let ratio = 1.0 + 10.0 * resolution;
    let mut s = times.last().copied().unwrap_or(resolution);
    while s * ratio < t {
        s *= ratio;
        times.push(s);
    }
    times.push(t);
    times.extend(lambda.times().iter().copied().filter(|&k| k > 0.0 && k < t));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t);
    times
}

/// Independent value of `I(ψ_0(γ[0,t]))`: trace the curve, map it with
/// the explicit `ψ_0`, and zip the image.
pub fn image_curve_energy(
    hull: &SlitHull,
    lambda: &DrivingFunction,
    t: f64,
    resolution: f64,
    zip: &ZipOptions,
    exec: Execution,
) -> Result<f64> {
    if !(t > 0.0 && resolution > 0.0) {
        return Err(LoewnerError::malformed("horizon and resolution must be positive"));
    }
    hull.check_clear_of_origin()?;
    let times = graded_times(lambda, t, resolution);
    let pts = flow::trace_at(lambda, &times, &zip.flow, exec)?;
    let g0 = hull.map_out(C::new(0.0, 0.0));
    let image: Vec<C> = pts.iter().map(|&z| hull.map_out(z) - g0).collect();
    Ok(zipper::inverse_transform(&image, zip, exec)?.total_energy())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// The two restricted-energy expressions at each time in `times`.
pub fn restriction_table(
    hull: &SlitHull,
    lambda: &DrivingFunction,
    times: &[f64],
    opts: &RestrictionOptions,
    exec: Execution,
) -> Result<Vec<IdentityRow>> {
    times
        .iter()
        .map(|&t| {
            let r = restricted_energy(hull, lambda, t, opts, exec)?;
            Ok(IdentityRow {
                t,
                lhs: r.driving_form,
                rhs: r.schwarzian_form,
                residual: r.driving_form - r.schwarzian_form,
            })
        })
        .collect()
}

pub fn write_identity_csv<W: std::io::Write>(rows: &[IdentityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "lhs", "rhs", "residual"])?;
    for r in rows {
        w.write_record([r.t.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.residual.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `φ_{s,0}″(0)/φ_{s,0}′(0)` for `φ_{s,0}(z) = −1/f_s(−1/z)`, the map-out
/// of the curve from ∞ whose inversion is driven by `u`, normalized at 0.
///
/// The Taylor coefficients come from a Cauchy integral on a small circle,
/// the lower half filled in by Schwarz reflection.
pub fn inverted_pre_schwarzian(u: &DrivingFunction, s: f64, opts: &FlowOptions) -> Result<f64> {
    if !(s > 0.0) {
        return Ok(0.0);
    }
    let tr = flow::trace(u, s, (s / 200.0).min(1e-2), opts, Execution::Sequential)?;
    let reach = tr.points.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let eps = 0.25 / reach;
    let n = 64;
    let segments = u.segments(s);
    let mut a1 = C::new(0.0, 0.0);
    let mut a2 = C::new(0.0, 0.0);
    for j in 0..=n / 2 {
        let z = C::from_polar(eps, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
        let mut zeta = -1.0 / z;
        if j == 0 || j == n / 2 {
            zeta.im = 0.0;
        }
        let f = match flow::flow_point(&segments, zeta, opts)? {
            flow::Fate::Alive(w) => w,
            flow::Fate::Swallowed { .. } => {
                return Err(LoewnerError::geometry("Cauchy circle meets the hull"));
            }
        };
        let phi = -1.0 / f;
        let mut terms = vec![(z, phi)];
        if j != 0 && j != n / 2 {
            terms.push((z.conj(), phi.conj()));
        }
        for (z, phi) in terms {
            a1 += phi / z;
            a2 += phi / (z * z);
        }
    }
    a1 /= n as f64;
    a2 /= n as f64;
    Ok((2.0 * a2 / a1).re)
}

/// Two slits growing towards each other: `γ^T` from 0 driven by `w`, and
/// `γ̃^S` from ∞ whose image under `z ↦ −1/z` is driven by `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSlitConfig {
    pub w: DrivingFunction,
    pub u: DrivingFunction,
    /// Capacity horizon `T` of the slit from 0.
    pub t: f64,
    /// Capacity horizon `S` of the slit from ∞.
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommutationOptions {
    pub nodes: usize,
    /// Capacity step of the traces that are zipped.
    pub resolution: f64,
    pub flow: FlowOptions,
    pub zip: ZipOptions,
}

impl Default for CommutationOptions {
    fn default() -> Self {
        CommutationOptions {
            nodes: 32,
            resolution: 2e-3,
            flow: FlowOptions::default(),
            zip: ZipOptions {
                check_simple: false,
                ..ZipOptions::fine()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationResult {
    /// `I(γ̃^S) + I_{ℍ∖γ̃^S, 0, γ̃_S}(γ^T)`.
    pub lhs: f64,
    /// `I(γ^T) + I_{ℍ∖γ^T, ∞, γ_T}(γ̃^S)`.
    pub rhs: f64,
    pub residual: f64,
    /// `|residual| / max(|lhs|, |rhs|)`.
    pub relative_residual: f64,
    pub energy_w: f64,
    pub energy_u: f64,
    pub restricted_w: f64,
    pub restricted_u: f64,
    /// Smallest distance between samples of the two slits.
    pub separation: f64,
}

/// Final driving value of `−1/f_t(−1/ζ)` over the samples `ζ`, where `f_t`
/// is the centered flow of `near`.
fn far_end_driving(near: &DrivingFunction, t: f64, zeta: &[C], opts: &CommutationOptions) -> Result<f64> {
    if zeta.is_empty() {
        return Ok(0.0);
    }
    let far: Vec<C> = zeta.iter().map(|z| -1.0 / z).collect();
    let state = flow::flow_points(near, &far, t, &opts.flow, Execution::Sequential)?;
    if state.points.iter().any(|p| !p.alive) {
        return Err(LoewnerError::geometry(format!("the two slits meet before time {t}")));
    }
    let image: Vec<C> = state.points.iter().map(|p| -1.0 / p.position).collect();
    let z = zipper::zip(&image, &[], &opts.zip, Execution::Sequential).map_err(|e| {
        LoewnerError::NumericalAccuracy(format!("re-zipping the far slit at t = {t}: {e}"))
    })?;
    Ok(z.driving.last_value())
}

fn far_samples(far: &DrivingFunction, horizon: f64, opts: &CommutationOptions) -> Result<Vec<C>> {
    if horizon == 0.0 {
        return Ok(Vec::new());
    }
    let tr = flow::trace(far, horizon, opts.resolution, &opts.flow, Execution::Sequential)?;
    Ok(tr.points[1..].to_vec())
}

/// `½∫₀ᵀ (Ẇ_t + 6U_S^t)² dt` for the slit driven by `near` in the domain
/// left by the slit from ∞ driven by `far`.
fn restricted_toward(
    near: &DrivingFunction,
    t_near: f64,
    far: &DrivingFunction,
    s_far: f64,
    opts: &CommutationOptions,
    exec: Execution,
) -> Result<f64> {
    if t_near == 0.0 {
        return Ok(0.0);
    }
    let zeta = far_samples(far, s_far, opts)?;
    // the far slit sits near ∞, so there is no shorter scale than T
    let rule = TimeRule::new(t_near, t_near, opts.nodes);
    let ends: Vec<Result<f64>> = exec.map(&rule.nodes(), |&(_, _, t, _)| far_end_driving(near, t, &zeta, opts));
    let ends: Vec<f64> = ends.into_iter().collect::<Result<_>>()?;
    Ok(rule.energy_with_drift(near, &rule.interpolate(&ends), 6.0))
}

/// Both orderings of the two-slit energy sum.
pub fn commutation_check(cfg: &TwoSlitConfig, opts: &CommutationOptions, exec: Execution) -> Result<CommutationResult> {
    if !(cfg.t >= 0.0 && cfg.s >= 0.0 && cfg.t.is_finite() && cfg.s.is_finite()) {
        return Err(LoewnerError::malformed("slit horizons must be finite and nonnegative"));
    }
    if !(opts.resolution > 0.0) || opts.nodes == 0 {
        return Err(LoewnerError::malformed("resolution and node count must be positive"));
    }
    let near = far_samples(&cfg.w, cfg.t, opts)?;
    let far: Vec<C> = far_samples(&cfg.u, cfg.s, opts)?.iter().map(|z| -1.0 / z).collect();
    let separation = near
        .iter()
        .flat_map(|a| far.iter().map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min);
    if separation < 1e-9 {
        return Err(LoewnerError::geometry("the two slits touch"));
    }
    let energy_w = cfg.w.energy(cfg.t)?.total;
    let energy_u = cfg.u.energy(cfg.s)?.total;
    let restricted_w = restricted_toward(&cfg.w, cfg.t, &cfg.u, cfg.s, opts, exec)?;
    let restricted_u = restricted_toward(&cfg.u, cfg.s, &cfg.w, cfg.t, opts, exec)?;
    let lhs = energy_u + restricted_w;
    let rhs = energy_w + restricted_u;
    let residual = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs());
    Ok(CommutationResult {
        lhs,
        rhs,
        residual,
        relative_residual: if scale > 0.0 { residual.abs() / scale } else { 0.0 },
        energy_w,
        energy_u,
        restricted_w,
        restricted_u,
        separation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutationRow {
    pub resolution: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// [`commutation_check`] at each trace resolution in `resolutions`.
pub fn commutation_table(
    cfg: &TwoSlitConfig,
    resolutions: &[f64],
    opts: &CommutationOptions,
    exec: Execution,
) -> Result<Vec<CommutationRow>> {
    resolutions
        .iter()
        .map(|&resolution| {
            let r = commutation_check(cfg, &CommutationOptions { resolution, ..*opts }, exec)?;
            Ok(CommutationRow {
                resolution,
                t: cfg.t,
                lhs: r.lhs,
                rhs: r.rhs,
                residual: r.residual,
            })
        })
        .collect()
}

pub fn write_commutation_csv<W: std::io::Write>(rows: &[CommutationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["resolution", "t", "lhs", "rhs", "residual"])?;
    for r in rows {
        w.write_record([
            r.resolution.to_string(),
            r.t.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolant_reproduces_polynomials() {
        let x: Vec<f64> = gauss_legendre_on(8, 0.0, 1.0).iter().map(|p| p.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powi(5) - v + 2.0).collect();
        let p = Interpolant::new(x, y);
        for v in [0.0, 0.13, 0.5, 1.0] {
            assert!((p.eval(v) - (3.0 * v.powi(5) - v + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn time_rule_integrates() {
        for scale in [100.0, 0.01] {
            let rule = TimeRule::new(9.0, scale, 16);
            let v: f64 = rule.nodes().iter().map(|n| n.3 * (-n.2 / 3.0).exp()).sum();
            assert!((v - 3.0 * (1.0 - (-3.0f64).exp())).abs() < 1e-10, "{scale}");
        }
    }

    #[test]
    fn drift_energy_of_constant_drift() {
        // λ̇ = 1 on [0, 4] with r ≡ 0.5 and c = −2: integrand 0
        let lam = DrivingFunction::linear(1.0, 4.0).unwrap();
        let rule = TimeRule::new(4.0, 0.1, 8);
        let ones = vec![0.5; rule.nodes().len()];
        assert!(rule.energy_with_drift(&lam, &rule.interpolate(&ones), -2.0).abs() < 1e-14);
        let r = rule.interpolate(&vec![0.0; ones.len()]);
        assert!((rule.energy_with_drift(&lam, &r, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn graded_times_cover_horizon() {
        let lam = DrivingFunction::new(vec![0.0, 0.37, 5.0], vec![0.0, 1.0, 0.0]).unwrap();
        let ts = graded_times(&lam, 5.0, 0.01);
        assert_eq!(*ts.last().unwrap(), 5.0);
        assert!(ts.contains(&0.37));
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }
}
