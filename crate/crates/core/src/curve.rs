//! Sampled curves in the upper half-plane.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LoewnerError, Result};

/// A curve sampled at capacity times `times`, with `hcap(γ[0,t]) = 2t`.
///
/// The first sample is the base point `0` at time `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
}

impl CurveSample {
    pub fn new(times: Vec<f64>, points: Vec<Complex64>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(LoewnerError::malformed("times and points differ in length"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LoewnerError::malformed("curve times not strictly increasing"));
        }
        Ok(CurveSample { times, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Half-plane capacity of the whole sampled curve.
    pub fn hcap(&self) -> f64 {
        2.0 * self.last_time()
    }

    /// Image under `x + iy ↦ −x + iy`.
    pub fn mirror(&self) -> Self {
        CurveSample {
            times: self.times.clone(),
            points: self.points.iter().map(|z| -z.conj()).collect(),
        }
    }

    /// Sample closest (in time) to `t`, linearly interpolated between samples.
    pub fn at_time(&self, t: f64) -> Complex64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.points[0];
        }
        if k >= self.times.len() {
            return *self.points.last().unwrap();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = (t - t0) / (t1 - t0);
        self.points[k - 1] * (1.0 - s) + self.points[k] * s
    }

    /// Fails when two non-adjacent polyline edges intersect.
    pub fn check_simple(&self) -> Result<()> {
        let p = &self.points;
        let n = p.len();
        for i in 0..n.saturating_sub(1) {
            for j in (i + 2)..n.saturating_sub(1) {
                if segments_cross(p[i], p[i + 1], p[j], p[j + 1]) {
                    return Err(LoewnerError::NonSimpleTrace(format!(
                        "edges near t = {:.6} and t = {:.6} intersect",
                        self.times[i], self.times[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "re", "im"])?;
        for (t, z) in self.times.iter().zip(&self.points) {
            w.write_record([t.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "re", "im"] {
            return Err(LoewnerError::malformed("expected CSV header `t,re,im`"));
        }
        let mut times = Vec::new();
        let mut points = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| LoewnerError::malformed(format!("bad number on data row {}", line + 1)))
            };
            times.push(parse(0)?);
            points.push(Complex64::new(parse(1)?, parse(2)?));
        }
        CurveSample::new(times, points)
    }
}

fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    (b - a).re * (c - a).im - (b - a).im * (c - a).re
}

fn segments_cross(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether an edge of the polyline `a` crosses an edge of `b`.
pub fn polylines_cross(a: &[Complex64], b: &[Complex64]) -> bool {
    a.windows(2)
        .any(|e| b.windows(2).any(|f| segments_cross(e[0], e[1], f[0], f[1])))
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    one_sided(a, b).max(one_sided(b, a))
}

/// Largest distance from a point of `a` to the polyline through `b`.
pub fn one_sided(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .map(|z| {
            if b.len() == 1 {
                return (z - b[0]).norm();
            }
            b.windows(2)
                .map(|w| point_segment_distance(*z, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Smallest distance from a point of `a` to the polyline through `b`.
pub fn nearest(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .map(|z| {
            if b.len() == 1 {
                return (z - b[0]).norm();
            }
            b.windows(2)
                .map(|w| point_segment_distance(*z, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * s)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn detects_self_intersection() {
        let ok = CurveSample::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(1.0, 2.0)],
        )
        .unwrap();
        assert!(ok.check_simple().is_ok());
        let bad = CurveSample::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![c(0.0, 0.0), c(0.0, 2.0), c(1.0, 2.0), c(1.0, 1.0), c(-1.0, 1.0)],
        )
        .unwrap();
        assert!(matches!(bad.check_simple(), Err(LoewnerError::NonSimpleTrace(_))));
    }

    #[test]
    fn hausdorff_uses_polyline() {
        let a = [c(0.0, 0.0), c(0.0, 2.0)];
        let b = [c(0.0, 1.0)];
        assert!((one_sided(&b, &a)).abs() < 1e-15);
        assert!((hausdorff(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_roundtrip() {
        let curve = CurveSample::new(vec![0.0, 0.5], vec![c(0.0, 0.0), c(0.1, 1.3)]).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,re,im\n"));
        assert_eq!(CurveSample::read_csv(buf.as_slice()).unwrap(), curve);
    }
}
