use std::path::{Path, PathBuf};

use loewner_lab::flow::{FlowOptions, C};
use loewner_lab::hull::SlitHull;
use loewner_lab::minimizers::{ConstrainedOptions, ConstraintSet};
use loewner_lab::restriction::{CommutationOptions, RestrictionOptions};
use loewner_lab::sle::PassageOptions;
use loewner_lab::zipper::ZipOptions;
use loewner_lab::DrivingFunction;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A driving function given inline as `{"times": [...], "values": [...]}`
/// or as the path of a `t,lambda` CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriverSource {
    File(PathBuf),
    Samples(DrivingFunction),
}

impl DriverSource {
    pub fn load(&self) -> Result<DrivingFunction, CliError> {
        match self {
            DriverSource::File(p) => Ok(DrivingFunction::load(p)?),
            DriverSource::Samples(d) => Ok(d.clone()),
        }
    }

    fn rebase(&mut self, dir: &Path) {
        if let DriverSource::File(p) = self {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    #[default]
    Quadrature,
    MonteCarlo,
}

/// Everything a run needs. Loaded from `--config`, then overridden by the
/// command-line flags; commands fill in the defaults they use so the
/// summary records the full resolved configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// `t,re,im` CSV of a curve to invert.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<C>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<RateMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hull: Option<SlitHull>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// `(resolution, tail_capacity)` pairs for `reverse-check`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,

    /// Slit grown from 0 in `commute`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<DriverSource>,
    /// Slit grown from ∞ in `commute`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<DriverSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<Vec<f64>>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zip: Option<ZipOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restriction: Option<RestrictionOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutation: Option<CommutationOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passage: Option<PassageOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constrained: Option<ConstrainedOptions>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for src in [&mut cfg.driver, &mut cfg.w, &mut cfg.u].into_iter().flatten() {
            src.rebase(dir);
        }
        if let Some(p) = &mut cfg.curve {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tolerance", self.tolerance),
            ("resolution", self.resolution),
            ("horizon", self.horizon),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.samples == Some(0) {
            return Err(CliError::Usage("samples must be positive".into()));
        }
        Ok(())
    }

    /// The flow options, with `tolerance` as relative tolerance.
    pub fn flow(&mut self) -> FlowOptions {
        let mut f = self.flow.unwrap_or_default();
        if let Some(tol) = self.tolerance {
            f.rtol = tol;
        }
        self.flow = Some(f);
        f
    }

    pub fn zip(&mut self) -> ZipOptions {
        let mut z = self.zip.unwrap_or_default();
        if let Some(tol) = self.tolerance {
            z.flow.rtol = tol;
        }
        self.zip = Some(z);
        z
    }

    /// Zipper options for reversed curves, which need the fine default.
    pub fn fine_zip(&mut self) -> ZipOptions {
        let mut z = self.zip.unwrap_or_else(ZipOptions::fine);
        if let Some(tol) = self.tolerance {
            z.flow.rtol = tol;
        }
        self.zip = Some(z);
        z
    }

    pub fn resolution_or(&mut self, default: f64) -> f64 {
        *self.resolution.get_or_insert(default)
    }

    pub fn require_seed(&self, what: &str) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage(format!("{what} is stochastic and needs --seed")))
    }

    pub fn require<'a, T>(field: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, CliError> {
        field
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("`{command}` needs `{name}` in the config")))
    }
}
