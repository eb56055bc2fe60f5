//! Configuration files, SNR sweeps, cross-method reports and CSV I/O.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{outage_probability, Method};
use crate::asymptotic::{asymptotic_outage, fit_diversity_slope};
use crate::channel::SystemConfig;
use crate::error::{Error, Result};
use crate::montecarlo::{simulate, SimSpec};
use crate::oracle::{quad_outage_probability, QuadratureSettings};

/// Default Monte Carlo trial count when neither the file nor the CLI sets one.
pub const DEFAULT_TRIALS: u64 = 1_000_000;
/// Default master seed.
pub const DEFAULT_SEED: u64 = 1;

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 9] = [
    "snr_db",
    "pout_analytic",
    "pout_asymptotic",
    "pout_mc",
    "mc_ci_low",
    "mc_ci_high",
    "pout_oracle",
    "trials",
    "flags",
];

/// Contents of a `key = value` configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse '{value}' for {key}")))
}

/// Parses a comma-separated list or an inclusive `start:step:stop` range.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let bad = || Error::Config(format!("malformed SNR grid '{text}'"));
    if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, step, stop] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

/// Parses a flat configuration file. Blank lines and `#` comments are
/// ignored; unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        system: SystemConfig::default(),
        snr_grid_db: None,
        trials: None,
        seed: None,
    };
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config(format!("line {line}: expected 'key = value'")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("line {line}: duplicate key '{key}'")));
        }
        let s = &mut cfg.system;
        match key {
            "n1" => s.n1 = parse_value(key, value, line)?,
            "n2" => s.n2 = parse_value(key, value, line)?,
            "k_relays" => s.k_relays = parse_value(key, value, line)?,
            "rate_threshold" => s.rate_threshold = parse_value(key, value, line)?,
            "snr_db" => s.snr_db = parse_value(key, value, line)?,
            "i_relay" => s.i_relay = parse_value(key, value, line)?,
            "i_dest" => s.i_dest = parse_value(key, value, line)?,
            "rho_i_relay_db" => s.rho_i_relay_db = parse_value(key, value, line)?,
            "rho_i_dest_db" => s.rho_i_dest_db = parse_value(key, value, line)?,
            "mean_power" => s.mean_power = parse_value(key, value, line)?,
            "snr_grid_db" => cfg.snr_grid_db = Some(parse_grid(value)?),
            "trials" => cfg.trials = Some(parse_value(key, value, line)?),
            "seed" => cfg.seed = Some(parse_value(key, value, line)?),
            other => {
                return Err(Error::Config(format!("line {line}: unknown key '{other}'")));
            }
        }
    }
    cfg.system.validate()?;
    Ok(cfg)
}

/// Parses a comma-separated method list such as `analytic,montecarlo`.
pub fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in text.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Method = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub snr_grid_db: Vec<f64>,
    pub methods: Vec<Method>,
    pub mc_trials: u64,
    pub seed: u64,
    /// Threads used for grid points; does not affect results.
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("a sweep needs at least one method".into()));
        }
        if self.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("SNR grid values must be finite".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.methods.contains(&Method::MonteCarlo) && self.mc_trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// One grid point of a sweep; absent methods are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub pout_analytic: Option<f64>,
    pub pout_asymptotic: Option<f64>,
    pub pout_mc: Option<f64>,
    pub mc_ci_low: Option<f64>,
    pub mc_ci_high: Option<f64>,
    pub pout_oracle: Option<f64>,
    pub trials: Option<u64>,
    pub flags: Vec<String>,
}

impl SweepRow {
    fn empty(snr_db: f64) -> Self {
        SweepRow {
            snr_db,
            pout_analytic: None,
            pout_asymptotic: None,
            pout_mc: None,
            mc_ci_low: None,
            mc_ci_high: None,
            pout_oracle: None,
            trials: None,
            flags: Vec::new(),
        }
    }

    /// Value of `method` at this point, if present.
    pub fn value(&self, method: Method) -> Option<f64> {
        match method {
            Method::Analytic => self.pout_analytic,
            Method::Asymptotic => self.pout_asymptotic,
            Method::MonteCarlo => self.pout_mc,
            Method::Oracle => self.pout_oracle,
        }
    }
}

/// Seed of the Monte Carlo run at grid index `index`.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

fn evaluate_point(spec: &SweepSpec, index: usize, snr_db: f64) -> SweepRow {
    let cfg = spec.base.with_snr_db(snr_db);
    let mut row = SweepRow::empty(snr_db);
    for &method in &spec.methods {
        let tag = method.name();
        match method {
            Method::Analytic => match outage_probability(&cfg) {
                Ok(est) => {
                    row.pout_analytic = Some(est.probability);
                    row.flags
                        .extend(est.warnings.iter().map(|w| format!("{tag}:{}", w.tag())));
                }
                Err(_) => row.flags.push(format!("{tag}:failed")),
            },
            Method::Asymptotic => match asymptotic_outage(&cfg) {
                Ok(r) => row.pout_asymptotic = Some(r.probability),
                Err(_) => row.flags.push(format!("{tag}:failed")),
            },
            Method::Oracle => {
                match quad_outage_probability(&cfg, &QuadratureSettings::default()) {
                    Ok(p) => row.pout_oracle = Some(p),
                    Err(_) => row.flags.push(format!("{tag}:failed")),
                }
            }
            Method::MonteCarlo => {
                let sim = SimSpec {
                    config: cfg.clone(),
                    trials: spec.mc_trials,
                    seed: point_seed(spec.seed, index),
                    workers: 1,
                };
                match simulate(&sim) {
                    Ok(r) => {
                        row.pout_mc = Some(r.estimate);
                        row.mc_ci_low = Some(r.ci_low);
                        row.mc_ci_high = Some(r.ci_high);
                        row.trials = Some(r.trials);
                        if r.outage_count == 0 {
                            row.flags.push(format!("{tag}:zero_events"));
                        } else if r.low_event_count {
                            row.flags.push(format!("{tag}:low_event_count"));
                        }
                    }
                    Err(_) => row.flags.push(format!("{tag}:failed")),
                }
            }
        }
    }
    row
}

/// Evaluates every requested method at every grid point. Per-method
/// failures become row flags; rows come back in grid order regardless of
/// scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        spec.snr_grid_db
            .par_iter()
            .enumerate()
            .map(|(i, &snr)| evaluate_point(spec, i, snr))
            .collect()
    }))
}

fn fmt_real(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(field: &str, row: usize) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("CSV row {row}: bad field '{field}'")))
}

/// Writes rows as CSV with the fixed header. Reals carry 17 significant
/// digits so that [`read_csv`] recovers them exactly.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.snr_db),
            fmt_real(r.pout_analytic),
            fmt_real(r.pout_asymptotic),
            fmt_real(r.pout_mc),
            fmt_real(r.mc_ci_low),
            fmt_real(r.mc_ci_high),
            fmt_real(r.pout_oracle),
            r.trials.map(|t| t.to_string()).unwrap_or_default(),
            r.flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let n = i + 2;
        let snr_db = parse_opt(&rec[0], n)?
            .ok_or_else(|| Error::Config(format!("CSV row {n}: missing snr_db")))?;
        rows.push(SweepRow {
            snr_db,
            pout_analytic: parse_opt(&rec[1], n)?,
            pout_asymptotic: parse_opt(&rec[2], n)?,
            pout_mc: parse_opt(&rec[3], n)?,
            mc_ci_low: parse_opt(&rec[4], n)?,
            mc_ci_high: parse_opt(&rec[5], n)?,
            pout_oracle: parse_opt(&rec[6], n)?,
            trials: parse_opt(&rec[7], n)?,
            flags: rec[8]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(rows)
}

/// Relative tolerance between the closed form and the quadrature oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-7;
/// Relative tolerance between closed form and simulation where `P_out ≥ 1e-4`.
pub const MC_TOLERANCE: f64 = 0.05;
/// Relative tolerance between closed form and high-SNR form at ≥ 50 dB.
pub const ASYMPTOTIC_TOLERANCE: f64 = 0.10;
/// Relative tolerance of a fitted slope against the diversity order.
pub const SLOPE_TOLERANCE: f64 = 0.10;
/// Width of the top SNR window used for slope fits, dB.
pub const SLOPE_WINDOW_DB: f64 = 15.0;

/// One pass/fail line of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointComparison {
    pub snr_db: f64,
    /// `(method, |value/reference − 1|)` against the analytic column, or
    /// against the first present column when analytic is absent.
    pub relative_differences: Vec<(Method, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub reference: Method,
    pub points: Vec<PointComparison>,
    /// Fitted diversity slope per method over the top window; `None` when
    /// fewer than two usable points remain.
    pub slopes: Vec<(Method, Option<f64>)>,
    /// SNRs excluded from the simulation slope fit for lack of events.
    pub excluded_mc_points: Vec<f64>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reference: {}", self.reference)?;
        for p in &self.points {
            write!(f, "{:>8.2} dB", p.snr_db)?;
            for (m, d) in &p.relative_differences {
                write!(f, "  {m}: {d:.3e}")?;
            }
            writeln!(f)?;
        }
        for (m, s) in &self.slopes {
            match s {
                Some(s) => writeln!(f, "slope {m}: {s:.4}")?,
                None => writeln!(f, "slope {m}: n/a")?,
            }
        }
        if !self.excluded_mc_points.is_empty() {
            writeln!(f, "montecarlo points without events: {:?}", self.excluded_mc_points)?;
        }
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

const ALL_METHODS: [Method; 4] = [
    Method::Analytic,
    Method::Asymptotic,
    Method::MonteCarlo,
    Method::Oracle,
];

/// Compares the method columns of a sweep of `base` and checks them
/// against the library tolerances.
pub fn compare_report(rows: &[SweepRow], base: &SystemConfig) -> Result<Report> {
    let present: Vec<Method> = ALL_METHODS
        .into_iter()
        .filter(|&m| rows.iter().any(|r| r.value(m).is_some()))
        .collect();
    if present.len() < 2 {
        return Err(Error::Domain(
            "a comparison needs at least two method columns".into(),
        ));
    }
    let reference = present[0];
    let points = rows
        .iter()
        .map(|r| PointComparison {
            snr_db: r.snr_db,
            relative_differences: present[1..]
                .iter()
                .filter_map(|&m| {
                    let (v, reference) = (r.value(m)?, r.value(reference)?);
                    let d = if v == reference {
                        0.0
                    } else {
                        (v / reference - 1.0).abs()
                    };
                    Some((m, d))
                })
                .collect(),
        })
        .collect();

    let top = rows.iter().map(|r| r.snr_db).fold(f64::NEG_INFINITY, f64::max);
    let mut excluded_mc_points = Vec::new();
    let mut slopes = Vec::new();
    for &m in &present {
        let mut pts = Vec::new();
        for r in rows.iter().filter(|r| r.snr_db >= top - SLOPE_WINDOW_DB) {
            match r.value(m) {
                Some(v) if v > 0.0 => pts.push((r.snr_db, v)),
                Some(_) if m == Method::MonteCarlo => excluded_mc_points.push(r.snr_db),
                _ => {}
            }
        }
        slopes.push((m, fit_diversity_slope(&pts).ok()));
    }

    let mut checks = Vec::new();
    let diversity = (base.n1.min(base.n2) * base.k_relays) as f64;
    if top >= 50.0 {
        for &(m, s) in &slopes {
            if m == Method::MonteCarlo {
                continue;
            }
            if let Some(s) = s {
                let err = (s / diversity - 1.0).abs();
                checks.push(Check {
                    name: format!("{m} slope"),
                    passed: err <= SLOPE_TOLERANCE,
                    detail: format!("{s:.4} vs diversity order {diversity}"),
                });
            }
        }
    }
    let ratio_check = |m: Method, tol: f64, rows: &mut dyn Iterator<Item = &SweepRow>| {
        let mut worst: f64 = 0.0;
        let mut any = false;
        for r in rows {
            if let (Some(a), Some(v)) = (r.pout_analytic, r.value(m)) {
                any = true;
                let d = if a == v { 0.0 } else { (v / a - 1.0).abs() };
                worst = worst.max(d);
            }
        }
        any.then(|| Check {
            name: format!("analytic vs {m}"),
            passed: worst <= tol,
            detail: format!("worst relative difference {worst:.3e} (tolerance {tol:e})"),
        })
    };
    checks.extend(ratio_check(
        Method::Oracle,
        ORACLE_TOLERANCE,
        &mut rows.iter(),
    ));
    checks.extend(ratio_check(
        Method::MonteCarlo,
        MC_TOLERANCE,
        &mut rows
            .iter()
            .filter(|r| r.pout_analytic.is_some_and(|a| a >= 1e-4)),
    ));
    if top >= 50.0 {
        checks.extend(ratio_check(
            Method::Asymptotic,
            ASYMPTOTIC_TOLERANCE,
            &mut rows.iter().filter(|r| r.snr_db == top),
        ));
    }
    Ok(Report {
        reference,
        points,
        slopes,
        excluded_mc_points,
        checks,
    })
}
