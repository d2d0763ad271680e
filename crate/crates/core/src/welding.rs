//! Conformal welding of a Loewner trace.
//!
//! A real point `x ≠ 0` in the image of `f_T` is run backwards through the
//! centered flow. If it reaches the tip frame's origin at time `t` it is one
//! of the two boundary images of `γ_t`; otherwise it comes out as a real
//! point `u` of the original boundary. Both outcomes fold into one key that
//! increases with `|x|` on either side of 0, and `φ(x)` is the point on the
//! other side with the same key.

use serde::{Deserialize, Serialize};

use crate::driving::{DrivingFunction, Segment};
use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::FlowOptions;
use crate::ode::{self, Control, OdeFailure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeldingPair {
    pub x_neg: f64,
    pub x_pos: f64,
    /// Capacity time of the curve point glued from the pair, `None` when
    /// the pair lies beyond the curve and is matched through `f_T(±u)`.
    pub curve_time: Option<f64>,
    /// `T − curve_time`: the time at which the pair is swallowed by the
    /// reverse flow, increasing with `|x|`.
    pub swallow_time: Option<f64>,
    /// `x / −φ(x)`.
    pub ratio: f64,
    /// `(φ(x/2) − φ(x)) / (φ(x) − φ(3x/2))`.
    pub spacing_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeldingPairs {
    pub horizon: f64,
    /// Images of the base point: the grid values inside `(x_min, x_max)`
    /// are glued along the curve.
    pub x_min: f64,
    pub x_max: f64,
    pub pairs: Vec<WeldingPair>,
    /// Smallest `M` with `1/M ≤ ratio ≤ M` over the grid.
    pub ratio_bound: f64,
    /// Smallest `M` with `1/M ≤ spacing_ratio ≤ M` over the grid.
    pub spacing_bound: f64,
}

#[derive(Debug, Clone, Copy)]
enum Backward {
    /// Reached the tip at this capacity time.
    Hit(f64),
    /// Came out at this real point at time 0.
    Out(f64),
}

/// Key increasing in `|x|`: `T − t` for hits, `T + |u|` for escapes.
fn key(b: Backward, horizon: f64) -> f64 {
    match b {
        Backward::Hit(t) => horizon - t,
        Backward::Out(u) => horizon + u.abs(),
    }
}

fn run_backward(segments: &[Segment], x: f64, opts: &FlowOptions) -> Result<Backward> {
    let tol = opts.tolerance();
    let threshold = 1e-2 * opts.swallow_rel * (1.0 + x.abs()).powi(2);
    let mut y = x;
    for seg in segments.iter().rev().filter(|s| !s.is_empty()) {
        let m = seg.slope;
        let rhs = move |_: f64, v: &[f64; 1]| [2.0 / v[0] - m];
        let outcome = ode::integrate(rhs, seg.t1, [y], seg.t0, &tol, None, |_, v| {
            if v[0] * v[0] < threshold || v[0].signum() != x.signum() {
                Control::Stop
            } else {
                Control::Continue
            }
        });
        match outcome {
            Ok(sol) if sol.stopped => {
                // y² ≈ 4(t − t_hit) near the tip
                let v = if sol.y[0].signum() == x.signum() { sol.y[0] } else { 0.0 };
                return Ok(Backward::Hit((sol.t - v * v / 4.0).max(seg.t0)));
            }
            Ok(sol) => y = sol.y[0],
            Err(OdeFailure::StepUnderflow { t, y: v, .. }) => {
                return Ok(Backward::Hit((t - v[0] * v[0] / 4.0).max(seg.t0)));
            }
            Err(OdeFailure::TooManySteps { t, .. }) => {
                return Err(LoewnerError::accuracy(format!(
                    "backward flow of boundary point {x} exceeded its step budget at t = {t}"
                )))
            }
        }
    }
    Ok(Backward::Out(y))
}

struct Welder {
    segments: Vec<Segment>,
    horizon: f64,
    opts: FlowOptions,
}

impl Welder {
    fn key(&self, x: f64) -> Result<f64> {
        Ok(key(run_backward(&self.segments, x, &self.opts)?, self.horizon))
    }

    /// The boundary image `x` on the side `sign` with the given key.
    fn solve(&self, target: f64, sign: f64, scale: f64) -> Result<f64> {
        let mut hi = scale.max(1e-12);
        let mut tries = 0;
        while self.key(sign * hi)? < target {
            hi *= 2.0;
            tries += 1;
            if tries > 200 {
                return Err(LoewnerError::accuracy("welding bracket did not close"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.key(sign * mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        let x = 0.5 * (lo + hi);
        let reached = self.key(sign * x)?;
        if (reached - target).abs() > 1e-6 * (1.0 + target) {
            return Err(LoewnerError::accuracy(format!(
                "welding bisection ended in [{lo}, {hi}] with key {reached} against {target}"
            )));
        }
        Ok(sign * x)
    }

    fn phi(&self, x: f64) -> Result<(f64, Backward)> {
        let b = run_backward(&self.segments, x, &self.opts)?;
        let other = self.solve(key(b, self.horizon), -x.signum(), x.abs())?;
        Ok((other, b))
    }
}

fn bound(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(1.0, |m, r| m.max(r.abs()).max(1.0 / r.abs()))
}

/// Welding pairs of the trace of `lambda` on `[0, horizon]` at the positive
/// grid values `x > 0`, with the two lemma ratios for each.
pub fn welding(
    lambda: &DrivingFunction,
    horizon: f64,
    grid: &[f64],
    opts: &FlowOptions,
    exec: Execution,
) -> Result<WeldingPairs> {
    if !(horizon > 0.0) {
        return Err(LoewnerError::malformed("welding horizon must be positive"));
    }
    if let Some(x) = grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(LoewnerError::malformed(format!("welding grid value {x} is not positive")));
    }
    let w = Welder {
        segments: lambda.segments(horizon),
        horizon,
        opts: *opts,
    };
    // the base point's two images are where the key crosses the horizon
    let x_max = w.solve(horizon, 1.0, 1.0)?;
    let x_min = w.solve(horizon, -1.0, 1.0)?;
    let rows = exec.map(grid, |&x| -> Result<WeldingPair> {
        let (neg, b) = w.phi(x)?;
        let (half, _) = w.phi(0.5 * x)?;
        let (three_half, _) = w.phi(1.5 * x)?;
        let curve_time = match b {
            Backward::Hit(t) => Some(t),
            Backward::Out(_) => None,
        };
        Ok(WeldingPair {
            x_neg: neg,
            x_pos: x,
            curve_time,
            swallow_time: curve_time.map(|t| horizon - t),
            ratio: x / -neg,
            spacing_ratio: (half - neg) / (neg - three_half),
        })
    });
    let pairs: Vec<WeldingPair> = rows.into_iter().collect::<Result<_>>()?;
    Ok(WeldingPairs {
        horizon,
        x_min,
        x_max,
        ratio_bound: bound(pairs.iter().map(|p| p.ratio)),
        spacing_bound: bound(pairs.iter().map(|p| p.spacing_ratio)),
        pairs,
    })
}

/// Time at which the reverse flow from the real point `x` reaches the tip
/// frame's origin, or `None` if `x` lies beyond the curve's images.
pub fn curve_time_of(lambda: &DrivingFunction, horizon: f64, x: f64, opts: &FlowOptions) -> Result<Option<f64>> {
    if x == 0.0 || !x.is_finite() {
        return Err(LoewnerError::malformed("boundary point must be finite and nonzero"));
    }
    Ok(match run_backward(&lambda.segments(horizon), x, opts)? {
        Backward::Hit(t) => Some(t),
        Backward::Out(_) => None,
    })
}

pub fn write_welding_csv<W: std::io::Write>(w: &WeldingPairs, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["x_pos", "x_neg", "curve_time", "ratio", "spacing_ratio"])?;
    for p in &w.pairs {
        out.write_record([
            p.x_pos.to_string(),
            p.x_neg.to_string(),
            p.curve_time.map_or(String::new(), |t| t.to_string()),
            p.ratio.to_string(),
            p.spacing_ratio.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
