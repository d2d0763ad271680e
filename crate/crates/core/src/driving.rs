//! Driving functions and their Loewner (Dirichlet) energy.
//!
//! A [`DrivingFunction`] is stored as piecewise-linear samples with a constant
//! extension after the last sample. On that representation the energy, its
//! scaling invariance and its additivity are exact segment arithmetic: a
//! segment of slope `m` and length `h` contributes `m² h / 2`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LoewnerError, Result};
use crate::exec::Execution;

/// Sampling step used when building a driving function from a closed form.
pub const DEFAULT_SAMPLE_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDriving")]
pub struct DrivingFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDriving {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawDriving> for DrivingFunction {
    type Error = LoewnerError;

    fn try_from(raw: RawDriving) -> Result<Self> {
        DrivingFunction::new(raw.times, raw.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub per_interval: Vec<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBound {
    pub norm_estimate: f64,
    pub bound: f64,
}

/// One linear piece of a driving function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub v0: f64,
    pub slope: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn is_empty(&self) -> bool {
        self.t1 <= self.t0
    }
}

impl DrivingFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(LoewnerError::malformed("driving function needs at least one sample"));
        }
        if times.len() != values.len() {
            return Err(LoewnerError::malformed(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 || values[0] != 0.0 {
            return Err(LoewnerError::malformed(
                "driving function must start at time 0 with value 0",
            ));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(LoewnerError::malformed(format!(
                    "times not strictly increasing at index {}",
                    i + 1
                )));
            }
        }
        if let Some(i) = values.iter().chain(times.iter()).position(|v| !v.is_finite()) {
            return Err(LoewnerError::malformed(format!("non-finite sample at position {i}")));
        }
        Ok(DrivingFunction { times, values })
    }

    /// The zero function on `[0, horizon]`.
    pub fn zero(horizon: f64) -> Self {
        if horizon > 0.0 {
            DrivingFunction {
                times: vec![0.0, horizon],
                values: vec![0.0, 0.0],
            }
        } else {
            DrivingFunction {
                times: vec![0.0],
                values: vec![0.0],
            }
        }
    }

    /// `t ↦ slope·t` on `[0, horizon]`, constant afterwards.
    pub fn linear(slope: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(LoewnerError::malformed("horizon must be positive"));
        }
        DrivingFunction::new(vec![0.0, horizon], vec![0.0, slope * horizon])
    }

    /// Samples a closed-form function on a uniform grid of step at most `step`.
    pub fn from_fn(f: impl Fn(f64) -> f64, horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0) {
            return Err(LoewnerError::malformed("horizon and step must be positive"));
        }
        let n = (horizon / step).ceil().max(1.0) as usize;
        let f0 = f(0.0);
        let times: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        let values = times.iter().map(|&t| f(t) - f0).collect();
        DrivingFunction::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Index `k` of the segment `[times[k], times[k+1])` containing `t`.
    fn locate(&self, t: f64) -> Option<usize> {
        if t >= self.last_time() || self.times.len() < 2 {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        Some(k.saturating_sub(1))
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self.locate(t) {
            None => self.last_value(),
            Some(k) => {
                let (t0, t1) = (self.times[k], self.times[k + 1]);
                let (v0, v1) = (self.values[k], self.values[k + 1]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Right derivative at `t` (zero after the last sample).
    pub fn slope_at(&self, t: f64) -> f64 {
        match self.locate(t.max(0.0)) {
            None => 0.0,
            Some(k) => {
                (self.values[k + 1] - self.values[k]) / (self.times[k + 1] - self.times[k])
            }
        }
    }

    /// Linear pieces covering `[0, horizon]`, the constant tail included as a
    /// zero-slope piece when `horizon` exceeds the last sample.
    pub fn segments(&self, horizon: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        for k in 0..self.times.len().saturating_sub(1) {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            if t0 >= horizon {
                break;
            }
            let slope = (self.values[k + 1] - self.values[k]) / (t1 - t0);
            out.push(Segment {
                t0,
                t1: t1.min(horizon),
                v0: self.values[k],
                slope,
            });
        }
        let last = self.last_time();
        if horizon > last {
            out.push(Segment {
                t0: last,
                t1: horizon,
                v0: self.last_value(),
                slope: 0.0,
            });
        }
        out
    }

    /// `(1/2)∫₀ᵀ λ̇²`, exact on the piecewise-linear representation.
    pub fn energy(&self, horizon: f64) -> Result<EnergyReport> {
        if !(horizon >= 0.0) {
            return Err(LoewnerError::malformed("energy horizon must be nonnegative"));
        }
        let per_interval: Vec<f64> = self
            .segments(horizon.min(self.last_time()))
            .iter()
            .map(|s| 0.5 * s.slope * s.slope * s.len())
            .collect();
        Ok(EnergyReport {
            total: per_interval.iter().sum(),
            per_interval,
            horizon,
        })
    }

    /// Total energy, i.e. the energy up to the last sample.
    pub fn total_energy(&self) -> f64 {
        self.energy(self.last_time()).map(|r| r.total).unwrap_or(0.0)
    }

    /// `Σ |λ(t_j) − λ(t_{j−1})|² / (t_j − t_{j−1})` over `partition`.
    ///
    /// There is no ½ prefactor: refining the partition drives this sum up to
    /// `2·I_T(λ)`.
    pub fn energy_partition_sup(&self, partition: &[f64]) -> Result<f64> {
        if partition.first() != Some(&0.0) {
            return Err(LoewnerError::malformed("partition must start at 0"));
        }
        let mut sum = 0.0;
        for w in partition.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > 0.0) {
                return Err(LoewnerError::malformed("degenerate partition interval"));
            }
            let dv = self.eval(w[1]) - self.eval(w[0]);
            sum += dv * dv / dt;
        }
        Ok(sum)
    }

    /// Largest `|λ(t₂) − λ(t₁)| / √(t₂ − t₁)` over sample pairs in `[0, T]`,
    /// together with the bound `√(2 I_T)` it must respect.
    pub fn holder_half_norm_bound(&self, horizon: f64, exec: Execution) -> Result<HolderBound> {
        let energy = self.energy(horizon)?.total;
        let mut pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t <= horizon)
            .map(|(t, v)| (*t, *v))
            .collect();
        if pts.last().map(|p| p.0) != Some(horizon) && horizon > 0.0 {
            pts.push((horizon, self.eval(horizon)));
        }
        let rows = exec.map_range(pts.len(), |i| {
            let (t1, v1) = pts[i];
            pts[i + 1..]
                .iter()
                .map(|&(t2, v2)| (v2 - v1).abs() / (t2 - t1).sqrt())
                .fold(0.0f64, f64::max)
        });
        Ok(HolderBound {
            norm_estimate: rows.into_iter().fold(0.0, f64::max),
            bound: (2.0 * energy).sqrt(),
        })
    }

    /// Driving function of `uγ`: `t ↦ u λ(t/u²)`.
    pub fn scale(&self, u: f64) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(LoewnerError::domain(format!("scale factor must be positive, got {u}")));
        }
        Ok(DrivingFunction {
            times: self.times.iter().map(|t| t * u * u).collect(),
            values: self.values.iter().map(|v| v * u).collect(),
        })
    }

    /// Driving function of `f_s(γ[s, ∞))`: `t ↦ λ(s + t) − λ(s)`.
    pub fn shift_restart(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(LoewnerError::malformed("restart time must be nonnegative"));
        }
        let base = self.eval(s);
        let mut times = vec![0.0];
        let mut values = vec![0.0];
        for (t, v) in self.times.iter().zip(&self.values) {
            if *t > s {
                times.push(t - s);
                values.push(v - base);
            }
        }
        DrivingFunction::new(times, values)
    }

    /// Restriction to `[0, horizon]` (a sample is inserted at `horizon`).
    pub fn truncate(&self, horizon: f64) -> Self {
        if horizon >= self.last_time() {
            return self.clone();
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (t, v) in self.times.iter().zip(&self.values) {
            if *t < horizon {
                times.push(*t);
                values.push(*v);
            }
        }
        if horizon > 0.0 {
            times.push(horizon);
            values.push(self.eval(horizon));
        }
        DrivingFunction { times, values }
    }

    /// Extends with a constant piece up to `horizon`.
    pub fn extend_constant(&self, horizon: f64) -> Self {
        let mut out = self.clone();
        if horizon > self.last_time() {
            out.times.push(horizon);
            out.values.push(self.last_value());
        }
        out
    }

    /// `−λ`, which drives the mirror image `x ↦ −x` of the trace.
    pub fn reflect(&self) -> Self {
        DrivingFunction {
            times: self.times.clone(),
            values: self.values.iter().map(|v| if *v == 0.0 { 0.0 } else { -v }).collect(),
        }
    }

    /// Appends `other` after this function's last sample, continuously.
    pub fn concat(&self, other: &DrivingFunction) -> Self {
        let (t_end, v_end) = (self.last_time(), self.last_value());
        let mut out = self.clone();
        for (t, v) in other.times.iter().zip(&other.values).skip(1) {
            out.times.push(t_end + t);
            out.values.push(v_end + v);
        }
        out
    }

    /// Sup-norm distance on `[0, horizon]`, evaluated at the union of samples.
    pub fn sup_distance(&self, other: &DrivingFunction, horizon: f64) -> f64 {
        self.times
            .iter()
            .chain(other.times.iter())
            .filter(|t| **t <= horizon)
            .chain(std::iter::once(&horizon))
            .map(|&t| (self.eval(t) - other.eval(t)).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "lambda"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "lambda"] {
            return Err(LoewnerError::malformed("expected CSV header `t,lambda`"));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| LoewnerError::malformed(format!("bad number on data row {}", line + 1)))
            };
            times.push(parse(0)?);
            values.push(parse(1)?);
        }
        DrivingFunction::new(times, values)
    }

    /// Loads from `.csv` or `.json` according to the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(file),
            _ => Ok(serde_json::from_reader(std::io::BufReader::new(file))?),
        }
    }
}
