//! SLE_κ sampling, passage probabilities, Schramm's formula and the
//! conditioned driving process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::driving::DrivingFunction;
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::C;
use crate::minimizers::ConstraintSet;
use crate::quadrature;

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;
const Z95: f64 = 1.959_963_984_540_054;

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa <= 4.0) {
        return Err(LoewnerError::domain(format!("κ = {kappa} is outside (0, 4]")));
    }
    Ok(())
}

/// The RNG of path `path` under `seed`. ChaCha is counter based, so each
/// path owns an independent stream regardless of scheduling.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// `√κ B` on the uniform grid of step `dt` over `[0, horizon]`.
pub fn sample_sle_driver(kappa: f64, horizon: f64, dt: f64, seed: u64) -> Result<DrivingFunction> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(LoewnerError::malformed("step and horizon must be positive"));
    }
    if !(kappa >= 0.0) {
        return Err(LoewnerError::domain(format!("κ = {kappa} is negative")));
    }
    let n = (horizon / dt).ceil() as usize;
    let h = horizon / n as f64;
    let sd = (kappa * h).sqrt();
    let mut rng = path_rng(seed, 0);
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    times.push(0.0);
    values.push(0.0);
    for k in 1..=n {
        let g: f64 = rng.sample(StandardNormal);
        x += sd * g;
        times.push(k as f64 * h);
        values.push(x);
    }
    DrivingFunction::new(times, values)
}

/// `∫_w^∞ (s²+1)^{−4/κ} ds / (w²+1)^{−4/κ+1}` for `w ≥ 0`, i.e. the tail
/// integral after `s = tan u`, scaled by its integrand at the lower limit.
fn scaled_tail(kappa: f64, w: f64) -> Result<f64> {
    let p = 8.0 / kappa - 2.0;
    let u0 = w.atan();
    let c0 = u0.cos();
    let width = HALF_PI - u0;
    let (v, _) = quadrature::integrate(|u| (u.cos() / c0).powf(p), u0, HALF_PI, 1e-13 * width)?;
    Ok(v)
}

/// `ln h_κ(w)` for `w ≥ 0`.
fn ln_schramm_h_nonneg(kappa: f64, w: f64) -> Result<f64> {
    let p = 8.0 / kappa - 2.0;
    let full = scaled_tail(kappa, 0.0)?;
    let tail = scaled_tail(kappa, w)?;
    // the scaling factor at u0 is cos(u0)^p = (w²+1)^{−p/2}
    Ok(0.5f64.ln() - 0.5 * p * (w * w + 1.0).ln() + tail.ln() - full.ln())
}

/// Schramm's formula: the probability that SLE_κ passes to the right of a
/// point `z` with `cot(arg z) = w`.
pub fn schramm_h(kappa: f64, w: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if w.is_nan() {
        return Err(LoewnerError::domain("w is NaN"));
    }
    if w == f64::INFINITY {
        return Ok(0.0);
    }
    if w == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if w >= 0.0 {
        Ok(ln_schramm_h_nonneg(kappa, w)?.exp())
    } else {
        Ok(1.0 - ln_schramm_h_nonneg(kappa, -w)?.exp())
    }
}

/// `ln h_κ(w)`, accurate where `h_κ(w)` is far below machine epsilon.
pub fn ln_schramm_h(kappa: f64, w: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if w >= 0.0 {
        ln_schramm_h_nonneg(kappa, w)
    } else {
        Ok(schramm_h(kappa, w)?.ln())
    }
}

/// `F(w) = 8w/(w²+1)`, the κ → 0 drift of the conditioned driver.
pub fn drift_limit(w: f64) -> f64 {
    8.0 * w / (w * w + 1.0)
}

/// `κ (w²+1)^{−4/κ} / ∫_w^∞ (s²+1)^{−4/κ} ds − F(w)`.
pub fn epsilon_kappa(kappa: f64, w: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if !w.is_finite() {
        return Err(LoewnerError::domain("w must be finite"));
    }
    let ratio = if w >= 0.0 {
        kappa / ((w * w + 1.0) * scaled_tail(kappa, w)?)
    } else {
        // ∫_w^∞ = 2∫_0^∞ − ∫_{|w|}^∞, both unscaled
        let a = 4.0 / kappa;
        let p = 8.0 / kappa - 2.0;
        let full = scaled_tail(kappa, 0.0)?;
        let part = (w * w + 1.0).powf(-0.5 * p) * scaled_tail(kappa, -w)?;
        kappa * (w * w + 1.0).powf(-a) / (2.0 * full - part)
    };
    Ok(ratio - drift_limit(w))
}

/// How a sampled path is classified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Horizon {
    /// Run until every point has `|w|` so large that its side changes later
    /// with probability below `decide_tol`.
    UntilDecided,
    /// Classify by the sign of `w` at this capacity time.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassageOptions {
    /// Step is `rel_step² · min|f_t(z)|²`.
    pub rel_step: f64,
    /// Upper bound on a single capacity step; `None` leaves it uncapped.
    pub max_step: Option<f64>,
    pub horizon: Horizon,
    pub decide_tol: f64,
    /// Give up (classifying by sign) after this many multiples of `max|z|²`.
    pub max_time: f64,
}

impl Default for PassageOptions {
    fn default() -> Self {
        PassageOptions {
            rel_step: 0.1,
            max_step: None,
            horizon: Horizon::UntilDecided,
            decide_tol: 1e-6,
            max_time: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageEstimate {
    pub kappa: f64,
    pub constraint: ConstraintSet,
    pub probability: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub samples: usize,
    pub seed: u64,
    /// Paths still undecided at the time limit (classified by sign).
    pub undecided: usize,
    pub mean_steps: f64,
}

impl PassageEstimate {
    pub fn interval(&self) -> (f64, f64) {
        (
            (self.probability - self.half_width).max(0.0),
            (self.probability + self.half_width).min(1.0),
        )
    }

    pub fn contains(&self, p: f64) -> bool {
        let (lo, hi) = self.interval();
        lo <= p && p <= hi
    }
}

/// Smallest `w` with `h_κ(w) ≤ tol`.
fn decision_level(kappa: f64, tol: f64) -> Result<f64> {
    let target = tol.ln();
    let mut hi = 1.0;
    while ln_schramm_h_nonneg(kappa, hi)? > target {
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(hi);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if ln_schramm_h_nonneg(kappa, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

struct PathOutcome {
    compatible: bool,
    decided: bool,
    steps: usize,
}

/// One path of the centered flow under `√κ B`, one step being the exact
/// flow for a frozen driver followed by the Brownian increment.
fn run_path(
    kappa: f64,
    constraints: &ConstraintSet,
    w_decide: f64,
    opts: &PassageOptions,
    rng: &mut ChaCha8Rng,
) -> PathOutcome {
    let pts = constraints.points();
    let scale = pts.iter().map(|c| c.z.norm_sqr()).fold(0.0, f64::max);
    let t_limit = match opts.horizon {
        Horizon::Fixed(t) => t,
        Horizon::UntilDecided => opts.max_time * scale,
    };
    let mut f: Vec<C> = pts.iter().map(|c| c.z).collect();
    let mut settled: Vec<Option<bool>> = vec![None; pts.len()];
    let rel2 = opts.rel_step * opts.rel_step;
    let sk = kappa.sqrt();
    let mut t = 0.0;
    let mut steps = 0;
    let decided_side = |z: C| -> Option<bool> {
        let w = z.re / z.im;
        if w.abs() >= w_decide {
            Some(w > 0.0)
        } else {
            None
        }
    };
    loop {
        if let Horizon::UntilDecided = opts.horizon {
            for (k, z) in f.iter().enumerate() {
                if settled[k].is_none() {
                    settled[k] = decided_side(*z);
                }
            }
            if settled.iter().all(Option::is_some) {
                break;
            }
        }
        if t >= t_limit {
            break;
        }
        let m = f
            .iter()
            .zip(&settled)
            .filter(|(_, s)| s.is_none())
            .map(|(z, _)| z.norm_sqr())
            .fold(f64::INFINITY, f64::min);
        let dt = (rel2 * m).min(opts.max_step.unwrap_or(f64::INFINITY)).min(t_limit - t);
        let g: f64 = rng.sample(StandardNormal);
        let dw = sk * dt.sqrt() * g;
        for (z, s) in f.iter_mut().zip(&settled) {
            if s.is_none() {
                let mut r = (*z * *z + 4.0 * dt).sqrt();
                if r.im < 0.0 {
                    r = -r;
                }
                *z = r - dw;
            }
        }
        t += dt;
        steps += 1;
    }
    let mut compatible = true;
    let mut decided = true;
    for ((c, z), s) in pts.iter().zip(&f).zip(&settled) {
        let right = match s {
            Some(side) => *side,
            None => {
                decided = matches!(opts.horizon, Horizon::Fixed(_));
                z.re >= 0.0
            }
        };
        // side +1 asks for the point to end on the right of the curve
        if right != (c.side > 0) {
            compatible = false;
        }
    }
    PathOutcome { compatible, decided, steps }
}

/// Monte Carlo estimate of `P(SLE_κ ∈ D(ẑ))`.
pub fn estimate_passage(
    kappa: f64,
    constraints: &ConstraintSet,
    samples: usize,
    seed: u64,
    opts: &PassageOptions,
    exec: Execution,
) -> Result<PassageEstimate> {
    check_kappa(kappa)?;
    if samples == 0 || constraints.is_empty() {
        return Err(LoewnerError::malformed("need at least one sample and one constraint"));
    }
    if !(opts.rel_step > 0.0 && opts.rel_step < 1.0) || !opts.max_step.is_none_or(|m| m > 0.0) {
        return Err(LoewnerError::malformed("step controls must be positive (rel_step < 1)"));
    }
    if let Horizon::Fixed(t) = opts.horizon {
        if !(t > 0.0) {
            return Err(LoewnerError::malformed("fixed horizon must be positive"));
        }
    }
    let w_decide = decision_level(kappa, opts.decide_tol)?;
    let outcomes = exec.map_range(samples, |i| {
        let mut rng = path_rng(seed, i as u64);
        run_path(kappa, constraints, w_decide, opts, &mut rng)
    });
    let hits = outcomes.iter().filter(|o| o.compatible).count();
    let undecided = outcomes.iter().filter(|o| !o.decided).count();
    let steps: usize = outcomes.iter().map(|o| o.steps).sum();
    let n = samples as f64;
    let p = hits as f64 / n;
    Ok(PassageEstimate {
        kappa,
        constraint: constraints.clone(),
        probability: p,
        half_width: Z95 * (p * (1.0 - p) / n).sqrt(),
        samples,
        seed,
        undecided,
        mean_steps: steps as f64 / n,
    })
}

/// Exact `P(SLE_κ ∈ D(z, side))` for a single labelled point.
pub fn single_point_probability(kappa: f64, constraints: &ConstraintSet) -> Result<f64> {
    let [c] = constraints.points() else {
        return Err(LoewnerError::malformed("closed form needs exactly one constraint"));
    };
    let h = schramm_h(kappa, c.z.re / c.z.im)?;
    Ok(if c.side < 0 { h } else { 1.0 - h })
}

fn single_point_ln_probability(kappa: f64, constraints: &ConstraintSet) -> Result<f64> {
    let [c] = constraints.points() else {
        return Err(LoewnerError::malformed("closed form needs exactly one constraint"));
    };
    let w = c.z.re / c.z.im;
    // the rare side is passing on the far side of the point
    if c.side < 0 {
        ln_schramm_h(kappa, w)
    } else {
        ln_schramm_h(kappa, -w)
    }
}

/// `κ → 0` limit of `−κ ln P` for a single point: the minimal energy over
/// `D(z, side)`.
pub fn single_point_rate_limit(constraints: &ConstraintSet) -> Option<f64> {
    let [c] = constraints.points() else {
        return None;
    };
    let w = c.z.re / c.z.im;
    let rare = if c.side < 0 { w > 0.0 } else { w < 0.0 };
    Some(if rare { 4.0 * (w * w + 1.0).ln() } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RateMethod {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Smallest κ at which Monte Carlo rates are attempted.
pub const MC_KAPPA_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub kappa: f64,
    /// `−κ ln P`, or a lower bound on it when `one_sided`.
    pub rate: f64,
    pub reference: Option<f64>,
    pub half_width: Option<f64>,
    pub one_sided: bool,
    pub method: String,
}

/// `−κ ln P(SLE_κ ∈ D(ẑ))` along a decreasing κ sequence.
///
/// Monte Carlo rows below [`MC_KAPPA_FLOOR`] fall back to quadrature for a
/// single point and are rejected otherwise. A zero count yields the bound
/// `P ≤ 3/n` (one-sided, 95%).
pub fn ld_rate(
    kappas: &[f64],
    constraints: &ConstraintSet,
    method: RateMethod,
    opts: &PassageOptions,
    exec: Execution,
) -> Result<Vec<RateRow>> {
    if kappas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(LoewnerError::malformed("κ sequence must be strictly decreasing"));
    }
    let reference = single_point_rate_limit(constraints);
    kappas
        .iter()
        .map(|&kappa| {
            let quad = |kappa: f64| -> Result<RateRow> {
                Ok(RateRow {
                    kappa,
                    rate: -kappa * single_point_ln_probability(kappa, constraints)?,
                    reference,
                    half_width: None,
                    one_sided: false,
                    method: "quadrature".into(),
                })
            };
            match method {
                RateMethod::Quadrature => quad(kappa),
                RateMethod::MonteCarlo { .. } if kappa < MC_KAPPA_FLOOR => {
                    if constraints.len() == 1 {
                        quad(kappa)
                    } else {
                        Err(LoewnerError::domain(format!(
                            "Monte Carlo rates need κ ≥ {MC_KAPPA_FLOOR}, got {kappa}"
                        )))
                    }
                }
                RateMethod::MonteCarlo { samples, seed } => {
                    let est = estimate_passage(kappa, constraints, samples, seed, opts, exec)?;
                    let n = samples as f64;
                    if est.probability == 0.0 {
                        Ok(RateRow {
                            kappa,
                            rate: -kappa * (3.0 / n).ln(),
                            reference,
                            half_width: None,
                            one_sided: true,
                            method: "monte-carlo".into(),
                        })
                    } else {
                        Ok(RateRow {
                            kappa,
                            rate: -kappa * est.probability.ln(),
                            reference,
                            half_width: Some(kappa * est.half_width / est.probability),
                            one_sided: false,
                            method: "monte-carlo".into(),
                        })
                    }
                }
            }
        })
        .collect()
}

/// Which limiting drift enters the conditioned system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftVariant {
    /// `F(w) = 8w/(w²+1)`, the drift of the deterministic minimizer.
    #[default]
    Full,
    /// `F(w) ∧ 0`, as the formula is printed; at κ = 0 this never steers
    /// toward a point on the right.
    ClampedAtZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedPath {
    pub driving: DrivingFunction,
    /// `(t, z_t)` at every step.
    pub path: Vec<(f64, C)>,
    /// Bracket of the swallowing time when `z` was reached before the horizon.
    pub tau: Option<(f64, f64)>,
}

/// Euler–Maruyama integration of
/// `dX = √κ dβ + (F(w) + ε_κ(w))/Im z dt`, `dz = 2/z dt − dX`, with
/// `w = cot(arg z)`, up to `horizon` or until `z` is reached.
///
/// The step is `min(dt, 0.01·|z|²)` so the singular drift stays resolved
/// as `z` approaches the tip.
pub fn simulate_conditioned(
    kappa: f64,
    z: C,
    horizon: f64,
    dt: f64,
    seed: u64,
    variant: DriftVariant,
) -> Result<ConditionedPath> {
    if !(0.0..=4.0).contains(&kappa) {
        return Err(LoewnerError::domain(format!("κ = {kappa} is outside [0, 4]")));
    }
    if !(z.im > 0.0) {
        return Err(LoewnerError::domain(format!("{z} is not in the upper half-plane")));
    }
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(LoewnerError::malformed("step and horizon must be positive"));
    }
    let threshold = 1e-6 * (1.0 + z.norm()).powi(2);
    let mut rng = path_rng(seed, 0);
    let sk = kappa.sqrt();
    let mut t = 0.0;
    let mut x = 0.0;
    let mut zt = z;
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    let mut path = vec![(0.0, z)];
    let mut tau = None;
    while t < horizon {
        if zt.norm_sqr() < threshold || zt.im <= 0.0 {
            let est = t - (zt * zt).re / 4.0;
            tau = Some((t.min(est), (t + zt.norm_sqr() / 4.0).max(est)));
            break;
        }
        let h = dt.min(1e-2 * zt.norm_sqr()).min(horizon - t);
        let w = zt.re / zt.im;
        let base = match variant {
            DriftVariant::Full => drift_limit(w),
            DriftVariant::ClampedAtZero => drift_limit(w).min(0.0),
        };
        let correction = if kappa > 0.0 { epsilon_kappa(kappa, w)? } else { 0.0 };
        let noise = if kappa > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            sk * h.sqrt() * g
        } else {
            0.0
        };
        let dx = (base + correction) / zt.im * h + noise;
        zt += 2.0 / zt * h - dx;
        x += dx;
        t += h;
        times.push(t);
        values.push(x);
        path.push((t, zt));
    }
    Ok(ConditionedPath {
        driving: DrivingFunction::new(times, values)?,
        path,
        tau,
    })
}
