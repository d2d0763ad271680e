//! Embedded Dormand–Prince 5(4) integrator on fixed-size real state vectors.
//!
//! Complex states are packed as `[re, im, ...]`. The error norm is the
//! Euclidean norm of the embedded error estimate scaled by
//! `atol + rtol * |y|`, so a complex coordinate sitting on an axis is not
//! penalised for its vanishing component.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-9,
            atol: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Solution<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// The observer asked to stop before reaching the end time.
    pub stopped: bool,
    pub steps: usize,
    /// Step size the controller would try next.
    pub h_next: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum OdeFailure<const N: usize> {
    StepUnderflow { t: f64, y: [f64; N], h: f64 },
    TooManySteps { t: f64, y: [f64; N] },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order weights minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

#[inline]
fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[inline]
fn norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` (either direction).
///
/// `observer` sees every accepted step and may stop the integration early.
/// `h0` seeds the step controller; by default the whole interval is tried.
pub fn integrate<const N: usize, F, O>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: &Tolerance,
    h0: Option<f64>,
    mut observer: O,
) -> Result<Solution<N>, OdeFailure<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]) -> Control,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(Solution {
            t: t0,
            y: y0,
            stopped: false,
            steps: 0,
            h_next: h0.unwrap_or(0.0),
        });
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = h0.map(f64::abs).unwrap_or(span.abs()).min(span.abs());
    let h_floor = 1e-15 * (t0.abs().max(t1.abs()).max(1e-300)) + 1e-300;
    let mut k1 = rhs(t, &y);
    let mut steps = 0usize;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            return Ok(Solution {
                t: t1,
                y,
                stopped: false,
                steps,
                h_next: h,
            });
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;

        let k2 = rhs(t + C2 * hs, &axpy(&y, &[(hs * A21, &k1)]));
        let k3 = rhs(t + C3 * hs, &axpy(&y, &[(hs * A31, &k1), (hs * A32, &k2)]));
        let k4 = rhs(
            t + C4 * hs,
            &axpy(&y, &[(hs * A41, &k1), (hs * A42, &k2), (hs * A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * hs,
            &axpy(
                &y,
                &[(hs * A51, &k1), (hs * A52, &k2), (hs * A53, &k3), (hs * A54, &k4)],
            ),
        );
        let k6 = rhs(
            t + hs,
            &axpy(
                &y,
                &[
                    (hs * A61, &k1),
                    (hs * A62, &k2),
                    (hs * A63, &k3),
                    (hs * A64, &k4),
                    (hs * A65, &k5),
                ],
            ),
        );
        let y_new = axpy(
            &y,
            &[
                (hs * A71, &k1),
                (hs * A73, &k3),
                (hs * A74, &k4),
                (hs * A75, &k5),
                (hs * A76, &k6),
            ],
        );
        let k7 = rhs(t + hs, &y_new);

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let scale = tol.atol + tol.rtol * norm(&y).max(norm(&y_new));
        let err_norm = if finite(&y_new) && finite(&k7) && finite(&err) {
            norm(&err) / scale
        } else {
            f64::INFINITY
        };

        if err_norm <= 1.0 {
            t = if last { t1 } else { t + hs };
            y = y_new;
            k1 = k7;
            steps += 1;
            let factor = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h *= factor;
            } else {
                h = (h * factor).max(h);
            }
            if observer(t, &y) == Control::Stop {
                return Ok(Solution {
                    t,
                    y,
                    stopped: true,
                    steps,
                    h_next: h,
                });
            }
            if steps >= tol.max_steps {
                return Err(OdeFailure::TooManySteps { t, y });
            }
        } else {
            let factor = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = hs.abs() * factor;
            if h < h_floor {
                return Err(OdeFailure::StepUnderflow { t, y, h });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let tol = Tolerance::default();
        let sol = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 3.0, &tol, None, |_, _| {
            Control::Continue
        })
        .unwrap();
        assert!((sol.y[0] - (-3.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let tol = Tolerance::default();
        let sol = integrate(
            |t, _y: &[f64; 1]| [t.cos()],
            2.0,
            [2.0f64.sin()],
            0.0,
            &tol,
            None,
            |_, _| Control::Continue,
        )
        .unwrap();
        assert!(sol.y[0].abs() < 1e-8, "{}", sol.y[0]);
    }

    #[test]
    fn observer_stops() {
        let tol = Tolerance::default();
        let sol = integrate(|_, _y: &[f64; 1]| [1.0], 0.0, [0.0], 10.0, &tol, Some(0.1), |_, y| {
            if y[0] > 1.0 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(sol.stopped);
        assert!(sol.t < 10.0);
    }

    #[test]
    fn square_root_singularity_shrinks_steps() {
        // z' = 2/z from z = i reaches 0 at t = 1/4
        let tol = Tolerance::default();
        let rhs = |_: f64, y: &[f64; 2]| {
            let d = y[0] * y[0] + y[1] * y[1];
            [2.0 * y[0] / d, -2.0 * y[1] / d]
        };
        let sol = integrate(rhs, 0.0, [0.0, 1.0], 1.0, &tol, None, |_, y| {
            if (y[0] * y[0] + y[1] * y[1]).sqrt() < 1e-6 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(sol.stopped);
        assert!((sol.t - 0.25).abs() < 1e-8, "{}", sol.t);
    }
}
