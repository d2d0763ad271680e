use loewner_lab::flow::{self, FlowOptions, C};
use loewner_lab::minimizers::{self, ConstraintSet};
use loewner_lab::restriction::{self, TwoSlitConfig};
use loewner_lab::sle::{self, RateMethod};
use loewner_lab::welding;
use loewner_lab::zipper::{self, DEFAULT_REVERSAL_LEVELS};
use loewner_lab::{DrivingFunction, Execution, LoewnerError};
use serde_json::{json, Value};

use crate::config::{RateMode, RunConfig};
use crate::{CliError, Command};

/// What a command produced: the `results` member of the summary and the
/// CSV tables to write next to it.
pub struct Output {
    pub results: Value,
    pub tables: Vec<(&'static str, Vec<u8>)>,
}

type Table = (&'static str, Vec<u8>);

fn table(name: &'static str, write: impl FnOnce(&mut Vec<u8>) -> loewner_lab::Result<()>) -> Result<Table, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok((name, buf))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize to JSON")
}

pub fn run(cmd: Command, cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    match cmd {
        Command::Energy => energy(cfg, exec),
        Command::Trace => trace(cfg, exec),
        Command::Invert => invert(cfg, exec),
        Command::ReverseCheck => reverse_check(cfg, exec),
        Command::Minimizer => minimizer(cfg),
        Command::ConstrainedMin => constrained_min(cfg, exec),
        Command::SlePassage => sle_passage(cfg, exec),
        Command::LdRate => ld_rate(cfg, exec),
        Command::Restriction => restriction(cfg, exec),
        Command::Commute => commute(cfg, exec),
        Command::Welding => welding(cfg, exec),
    }
}

fn driver(cfg: &RunConfig, command: &str) -> Result<DrivingFunction, CliError> {
    RunConfig::require(&cfg.driver, "driver", command)?.load()
}

/// Flow options of a nested options record: replaced by the top-level
/// `flow` when one is given, with `tolerance` applied on top.
fn nested_flow(cfg: &RunConfig, inner: FlowOptions) -> FlowOptions {
    let mut f = cfg.flow.unwrap_or(inner);
    if let Some(tol) = cfg.tolerance {
        f.rtol = tol;
    }
    f
}

/// Horizon defaulting to the last driver sample.
fn horizon(cfg: &mut RunConfig, d: &DrivingFunction) -> f64 {
    *cfg.horizon.get_or_insert(d.last_time())
}

/// `constraints`, or the single point `e^{iθ}` labelled −1 when only `theta`
/// is given.
fn constraints(cfg: &mut RunConfig, command: &str) -> Result<ConstraintSet, CliError> {
    if let Some(cs) = &cfg.constraints {
        return Ok(cs.clone());
    }
    let theta = *RunConfig::require(&cfg.theta, "constraints` or `theta", command)?;
    let cs = ConstraintSet::single(C::from_polar(1.0, theta), -1)?;
    cfg.constraints = Some(cs.clone());
    Ok(cs)
}

fn energy(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let d = driver(cfg, "energy")?;
    let h = horizon(cfg, &d);
    let report = d.energy(h)?;
    let holder = d.holder_half_norm_bound(h, exec)?;
    let segments = d.segments(h.min(d.last_time()));
    let csv = table("energy.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t0", "t1", "energy"])?;
        for (s, e) in segments.iter().zip(&report.per_interval) {
            w.write_record([s.t0.to_string(), s.t1.to_string(), e.to_string()])?;
        }
        w.flush().map_err(LoewnerError::from)
    })?;
    Ok(Output {
        results: json!({ "total": report.total, "horizon": h, "holder": holder }),
        tables: vec![csv],
    })
}

fn trace(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let d = driver(cfg, "trace")?;
    let h = horizon(cfg, &d);
    let res = cfg.resolution_or(1e-3);
    let opts = cfg.flow();
    let tr = flow::trace(&d, h, res, &opts, exec)?;
    let tip = *tr.points.last().expect("trace has its base point");
    let csv = table("trace.csv", |buf| tr.write_csv(buf))?;
    Ok(Output {
        results: json!({ "samples": tr.len(), "hcap": 2.0 * h, "tip": tip }),
        tables: vec![csv],
    })
}

fn invert(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let points = match (&cfg.curve, &cfg.points) {
        (Some(path), _) => {
            let file = std::fs::File::open(path).map_err(LoewnerError::from)?;
            loewner_lab::curve::CurveSample::read_csv(file)?.points
        }
        (None, Some(p)) => p.clone(),
        (None, None) => return Err(CliError::Usage("`invert` needs `curve` or `points` in the config".into())),
    };
    let opts = cfg.zip();
    let zipped = zipper::zip(&points, &[], &opts, exec)?;
    let mut tables = vec![table("driver.csv", |buf| zipped.driving.write_csv(buf))?];
    if zipped.skipped == 0 {
        let mut pts = Vec::with_capacity(points.len() + 1);
        if points.first() != Some(&C::new(0.0, 0.0)) {
            pts.push(C::new(0.0, 0.0));
        }
        pts.extend_from_slice(&points);
        let timed = loewner_lab::curve::CurveSample::new(zipped.sample_times(), pts)?;
        tables.push(table("curve.csv", |buf| timed.write_csv(buf))?);
    }
    Ok(Output {
        results: json!({
            "capacity_time": zipped.capacity_time(),
            "hcap": zipped.hcap(),
            "energy": zipped.driving.total_energy(),
            "skipped": zipped.skipped,
        }),
        tables,
    })
}

/// Levels halving down to `finest`, with tails growing like `1/resolution²`.
fn ladder(finest: f64) -> Vec<(f64, f64)> {
    let (r0, tail0) = DEFAULT_REVERSAL_LEVELS[0];
    (0..4)
        .rev()
        .map(|k| {
            let r = finest * f64::from(1u32 << k);
            (r, tail0 * (r0 / r).powi(2))
        })
        .collect()
}

fn reverse_check(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let d = driver(cfg, "reverse-check")?;
    let h = horizon(cfg, &d);
    let levels = match (&cfg.levels, cfg.resolution) {
        (Some(l), _) => l.clone(),
        (None, Some(r)) => ladder(r),
        (None, None) => DEFAULT_REVERSAL_LEVELS.to_vec(),
    };
    cfg.levels = Some(levels.clone());
    let opts = cfg.fine_zip();
    let rows = zipper::reversal_table(&d, h, &levels, &opts, exec)?;
    let csv = table("reversal.csv", |buf| zipper::write_reversal_csv(&rows, buf))?;
    let monotone = rows.windows(2).all(|w| w[1].rel_err < w[0].rel_err);
    Ok(Output {
        results: json!({
            "energy_fwd": d.energy(h)?.total,
            "table": rows,
            "final_rel_err": rows.last().map(|r| r.rel_err),
            "monotone": monotone,
        }),
        tables: vec![csv],
    })
}

fn minimizer(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let result = match (&cfg.points, cfg.theta) {
        (Some(p), _) if p.len() == 1 => minimizers::minimizer_through(p[0])?,
        (Some(p), _) if !p.is_empty() => minimizers::multi_point_construction(p)?,
        (None, Some(theta)) => minimizers::one_point_minimizer(theta)?,
        _ => return Err(CliError::Usage("`minimizer` needs `theta` or a nonempty `points` list".into())),
    };
    let csv = table("driver.csv", |buf| result.driving.write_csv(buf))?;
    let mut results = to_value(&result);
    if let Some(theta) = cfg.theta.filter(|_| cfg.points.is_none()) {
        results["closed_form_energy"] = json!(minimizers::one_point_energy(theta));
    }
    Ok(Output { results, tables: vec![csv] })
}

fn constrained_min(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let cs = constraints(cfg, "constrained-min")?;
    let mut opts = cfg.constrained.unwrap_or_default();
    opts.flow = nested_flow(cfg, opts.flow);
    cfg.constrained = Some(opts);
    let result = minimizers::minimize_constrained(&cs, &opts, exec)?;
    let csv = table("driver.csv", |buf| result.driving.write_csv(buf))?;
    Ok(Output {
        results: to_value(&result),
        tables: vec![csv],
    })
}

fn sle_passage(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let seed = cfg.require_seed("sle-passage")?;
    let kappa = *RunConfig::require(&cfg.kappa, "kappa", "sle-passage")?;
    let cs = constraints(cfg, "sle-passage")?;
    let n = *cfg.samples.get_or_insert(100_000);
    let opts = *cfg.passage.get_or_insert_with(Default::default);
    let est = sle::estimate_passage(kappa, &cs, n, seed, &opts, exec)?;
    let exact = if cs.len() == 1 {
        Some(sle::single_point_probability(kappa, &cs)?)
    } else {
        None
    };
    let (lo, hi) = est.interval();
    Ok(Output {
        results: json!({
            "kappa": kappa,
            "constraint": cs,
            "p": est.probability,
            "ci": [lo, hi],
            "n": n,
            "seed": seed,
            "undecided": est.undecided,
            "mean_steps": est.mean_steps,
            "exact": exact,
        }),
        tables: vec![],
    })
}

fn ld_rate(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let kappas = cfg.kappas.get_or_insert_with(|| vec![1.0, 0.5, 0.25, 0.1]).clone();
    let cs = constraints(cfg, "ld-rate")?;
    let method = match *cfg.method.get_or_insert_with(Default::default) {
        RateMode::Quadrature => RateMethod::Quadrature,
        RateMode::MonteCarlo => RateMethod::MonteCarlo {
            seed: cfg.require_seed("ld-rate in monte-carlo mode")?,
            samples: *cfg.samples.get_or_insert(100_000),
        },
    };
    let opts = *cfg.passage.get_or_insert_with(Default::default);
    let rows = sle::ld_rate(&kappas, &cs, method, &opts, exec)?;
    let csv = table("rates.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["kappa", "rate", "reference"])?;
        for r in &rows {
            w.write_record([
                r.kappa.to_string(),
                r.rate.to_string(),
                r.reference.map_or(String::new(), |x| x.to_string()),
            ])?;
        }
        w.flush().map_err(LoewnerError::from)
    })?;
    Ok(Output {
        results: json!({ "rows": rows }),
        tables: vec![csv],
    })
}

fn restriction(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let hull = RunConfig::require(&cfg.hull, "hull", "restriction")?.clone();
    let d = driver(cfg, "restriction")?;
    let h = horizon(cfg, &d);
    let times = cfg
        .times
        .get_or_insert_with(|| (1..=10).map(|k| h * k as f64 / 10.0).collect())
        .clone();
    let mut opts = cfg.restriction.unwrap_or_default();
    opts.flow = nested_flow(cfg, opts.flow);
    cfg.restriction = Some(opts);
    let rows = restriction::restriction_table(&hull, &d, &times, &opts, exec)?;
    let at_horizon = restriction::restricted_energy(&hull, &d, h, &opts, exec)?;
    let csv = table("identity.csv", |buf| restriction::write_identity_csv(&rows, buf))?;
    Ok(Output {
        results: json!({ "restricted": at_horizon, "rows": rows }),
        tables: vec![csv],
    })
}

fn commute(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let w = RunConfig::require(&cfg.w, "w", "commute")?.load()?;
    let u = RunConfig::require(&cfg.u, "u", "commute")?.load()?;
    let t = *cfg.t.get_or_insert(w.last_time());
    let s = *cfg.s.get_or_insert(u.last_time());
    let resolutions = match (&cfg.resolutions, cfg.resolution) {
        (Some(r), _) => r.clone(),
        (None, Some(r)) => vec![r],
        (None, None) => vec![8e-3, 4e-3, 2e-3],
    };
    cfg.resolutions = Some(resolutions.clone());
    let mut opts = cfg.commutation.unwrap_or_default();
    opts.flow = nested_flow(cfg, opts.flow);
    cfg.commutation = Some(opts);
    let rows = restriction::commutation_table(&TwoSlitConfig { w, u, t, s }, &resolutions, &opts, exec)?;
    let csv = table("commutation.csv", |buf| restriction::write_commutation_csv(&rows, buf))?;
    let last = rows.last().expect("at least one resolution");
    Ok(Output {
        results: json!({
            "rows": rows,
            "relative_residual": last.residual.abs() / last.lhs.abs().max(last.rhs.abs()),
        }),
        tables: vec![csv],
    })
}

fn welding(cfg: &mut RunConfig, exec: Execution) -> Result<Output, CliError> {
    let d = driver(cfg, "welding")?;
    let h = horizon(cfg, &d);
    let opts = cfg.flow();
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => {
            let n = *cfg.samples.get_or_insert(20);
            let probe = welding::welding(&d, h, &[1.0], &opts, exec)?;
            (1..=n).map(|k| probe.x_max * k as f64 / (n + 1) as f64).collect()
        }
    };
    cfg.grid = Some(grid.clone());
    let pairs = welding::welding(&d, h, &grid, &opts, exec)?;
    let csv = table("welding.csv", |buf| welding::write_welding_csv(&pairs, buf))?;
    Ok(Output {
        results: json!({
            "x_min": pairs.x_min,
            "x_max": pairs.x_max,
            "ratio_bound": pairs.ratio_bound,
            "spacing_bound": pairs.spacing_bound,
            "pairs": pairs.pairs.len(),
        }),
        tables: vec![csv],
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn ladder_ends_at_the_default_levels() {
        let l = ladder(1e-3);
        for (a, b) in l.iter().zip(DEFAULT_REVERSAL_LEVELS) {
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-9 * b.1);
        }
    }

    #[test]
    fn theta_becomes_a_single_constraint() {
        let mut cfg = RunConfig {
            theta: Some(PI / 4.0),
            ..Default::default()
        };
        let cs = constraints(&mut cfg, "ld-rate").unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs.points()[0].side, -1);
        assert!(cfg.constraints.is_some());
    }
}
