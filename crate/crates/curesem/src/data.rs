//! Data ingestion and data-driven starting values: CSV reading of
//! right-censored survival records, Kaplan–Meier estimation, and the
//! two-step initial-value heuristic (censoring-based cure-rate anchors for
//! the regression coefficients, a linearising transform plus an
//! uncensored-only likelihood polish for the lifetime parameters).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ew::{ew_log_pdf, EwParams};
use crate::model::{Dataset, SurvivalRecord, Theta};
use crate::numeric::log1m_exp;
use crate::optim::{maximize, NmConfig};

/// A dataset read from disk plus ingestion bookkeeping.
#[derive(Debug, Clone)]
pub struct ReadReport {
    pub dataset: Dataset,
    /// Rows dropped because the group covariate was missing.
    pub dropped_missing: usize,
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

/// Read a `time,delta,group` CSV (UTF-8, comma-delimited, `#` comment lines
/// allowed, columns matched by name in any order). `time` must be a positive
/// real, `delta` exactly 0 or 1, and `group` a numeric covariate; rows whose
/// group cell is empty are dropped and counted. Parse and domain errors
/// carry the offending line number.
pub fn read_dataset<P: AsRef<Path>>(path: P) -> Result<ReadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    };
    let (c_time, c_delta, c_group) = (col("time")?, col("delta")?, col("group")?);
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for row in reader.records() {
        let row = row?;
        let line = line_of(&row);
        let group = row.get(c_group).unwrap_or("");
        if group.is_empty() {
            dropped += 1;
            continue;
        }
        let group: f64 = group
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: group '{group}' is not numeric")))?;
        if !group.is_finite() {
            return Err(Error::Data(format!("line {line}: group must be finite, got {group}")));
        }
        let time = row.get(c_time).unwrap_or("");
        let time: f64 = time
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: time '{time}' is not numeric")))?;
        if !time.is_finite() || time <= 0.0 {
            return Err(Error::Data(format!(
                "line {line}: time must be a positive real, got {time}"
            )));
        }
        let delta = row.get(c_delta).unwrap_or("");
        let delta = match delta.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => {
                return Err(Error::Data(format!(
                    "line {line}: delta must be 0 or 1, got '{delta}'"
                )))
            }
        };
        records.push(SurvivalRecord::new(time, delta, vec![group])?);
    }
    Ok(ReadReport { dataset: Dataset::new(records)?, dropped_missing: dropped })
}

/// Product-limit estimate of a survival function.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
    group: Option<f64>,
}

impl KmCurve {
    /// Distinct event times, ascending.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Survival estimate just after each event time; nonincreasing,
    /// positive everywhere before the last event.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    /// The stratum this curve was fitted on, if any.
    pub fn group(&self) -> Option<f64> {
        self.group
    }

    /// Right-continuous value `Ŝ(t)`; 1 before the first event.
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&u| u <= t) {
            0 => 1.0,
            i => self.survival[i - 1],
        }
    }

    /// Left limit `Ŝ(t−)`: the value just before `t`.
    pub fn left_limit_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&u| u < t) {
            0 => 1.0,
            i => self.survival[i - 1],
        }
    }

    /// Export as `time,survival[,group]` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self.group {
            Some(g) => {
                w.write_record(["time", "survival", "group"])?;
                for (t, s) in self.times.iter().zip(&self.survival) {
                    w.write_record(&[t.to_string(), s.to_string(), g.to_string()])?;
                }
            }
            None => {
                w.write_record(["time", "survival"])?;
                for (t, s) in self.times.iter().zip(&self.survival) {
                    w.write_record(&[t.to_string(), s.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Kaplan–Meier estimator, pooled or restricted to the records whose first
/// covariate equals `stratify`. Tied events drop simultaneously, and a
/// record censored at an event time still counts as at risk there.
pub fn kaplan_meier(data: &Dataset, stratify: Option<f64>) -> Result<KmCurve> {
    let mut obs: Vec<(f64, bool)> = (0..data.n())
        .filter(|&i| stratify.is_none_or(|g| data.x_row(i)[0] == g))
        .map(|i| (data.t(i), data.delta(i)))
        .collect();
    if obs.is_empty() {
        return Err(Error::Data(match stratify {
            Some(g) => format!("no records in group {g}"),
            None => "no records".into(),
        }));
    }
    obs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));
    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut s = 1.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let at_risk = obs.len() - i;
        let mut deaths = 0usize;
        let mut j = i;
        while j < obs.len() && obs[j].0 == t {
            deaths += usize::from(obs[j].1);
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            times.push(t);
            survival.push(s);
        }
        i = j;
    }
    Ok(KmCurve { times, survival, group: stratify })
}

/// Outcome of the initial-value heuristic.
#[derive(Debug, Clone)]
pub struct InitPolicyResult {
    /// The starting point for either engine.
    pub theta0: Theta,
    /// Slope of the linearising regression (the raw shape guess `k₀`).
    pub ols_slope: f64,
    /// Intercept of the linearising regression (`−k₀ log λ₀`).
    pub ols_intercept: f64,
    /// The pre-polish lifetime guess `(α₀, k₀, λ₀)`.
    pub ew_ols: EwParams,
    /// The fixed shape used in the transform.
    pub alpha0: f64,
    /// Uncensored records that contributed a regression point.
    pub used_points: usize,
}

/// Default cure-rate anchors: the censoring proportions of the lowest and
/// highest covariate groups (treating every censored subject as cured, the
/// group censoring proportion estimates its cure rate).
pub fn censoring_cure_guesses(data: &Dataset) -> Result<(f64, f64)> {
    if data.d() != 1 {
        return Err(Error::Data(format!(
            "cure-rate anchors need the single group covariate, got {} covariates",
            data.d()
        )));
    }
    let mut groups: Vec<f64> = (0..data.n()).map(|i| data.x_row(i)[0]).collect();
    groups.sort_by(|a, b| a.partial_cmp(b).expect("covariates are finite"));
    groups.dedup();
    if groups.len() < 2 {
        return Err(Error::Data("cure-rate anchors need at least two groups".into()));
    }
    let censored_fraction = |g: f64| -> f64 {
        let (mut total, mut censored) = (0usize, 0usize);
        for i in 0..data.n() {
            if data.x_row(i)[0] == g {
                total += 1;
                censored += usize::from(!data.delta(i));
            }
        }
        censored as f64 / total as f64
    };
    Ok((censored_fraction(groups[0]), censored_fraction(*groups.last().unwrap())))
}

/// The linearising transform `ψ(s) = log[−log{1 − (1−s)^{1/α₀}}]`, written
/// via `log(1−e^x)` for stability near `s = 1`. For exact lifetime survival
/// values (with the true shape as `α₀`) this is exactly `k log t − k log λ`.
fn psi(s: f64, alpha0: f64) -> f64 {
    if !(0.0..1.0).contains(&s) || s == 0.0 {
        return f64::NAN;
    }
    // (1−s)^{1/α₀} = exp(−x) with x = −log(1−s)/α₀ ≥ 0.
    (-log1m_exp(-(-s).ln_1p() / alpha0)).ln()
}

/// Two-step starting values for real data.
///
/// Regression coefficients solve the logistic link at the extreme covariate
/// groups using `cure_guesses = (c_low, c_high)` (cure-rate anchors for the
/// lowest and highest group): the two-equation system
/// `π₀(g_min) = c_low`, `π₀(g_max) = c_high` has the closed form used by the
/// simulation designs. Lifetime parameters come from (i) ordinary least
/// squares of `ψ̂(t_i)` on `log t_i` over uncensored records — `ψ̂` uses the
/// pooled Kaplan–Meier survival, taken as its left limit at each event time
/// (a left limit of exactly 1, i.e. the earliest event, yields no usable
/// point) — giving `k₀` (slope) and `λ₀` (from the intercept `−k₀ log λ₀`),
/// then (ii) maximizing the uncensored-only lifetime log-likelihood
/// `Σ log f_s(t_i)` from `(α₀, k₀, λ₀)`.
pub fn initial_values(
    data: &Dataset,
    alpha0: f64,
    cure_guesses: (f64, f64),
) -> Result<InitPolicyResult> {
    if !alpha0.is_finite() || alpha0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha0 must be finite and > 0, got {alpha0}"
        )));
    }
    if data.n_events() < 3 {
        return Err(Error::Data(format!(
            "the initial-value heuristic needs at least 3 uncensored records, got {}",
            data.n_events()
        )));
    }
    let (c_low, c_high) = cure_guesses;
    if !(c_high > 0.0 && c_low > c_high && c_low < 1.0) {
        return Err(Error::Domain(format!(
            "cure anchors must satisfy 0 < c_high < c_low < 1, got ({c_low}, {c_high})"
        )));
    }
    if data.d() != 1 {
        return Err(Error::Data(format!(
            "the initial-value heuristic needs the single group covariate, got {} covariates",
            data.d()
        )));
    }
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for i in 0..data.n() {
        g_min = g_min.min(data.x_row(i)[0]);
        g_max = g_max.max(data.x_row(i)[0]);
    }
    if g_max <= g_min {
        return Err(Error::Data("the cure-rate anchors need at least two groups".into()));
    }
    let l_low = (1.0 / c_low - 1.0).ln();
    let l_high = (1.0 / c_high - 1.0).ln();
    let beta1 = (l_high - l_low) / (g_max - g_min);
    let beta0 = l_low - beta1 * g_min;

    // Linearising regression over usable uncensored records.
    let km = kaplan_meier(data, None)?;
    let mut points = Vec::new();
    let mut event_times = Vec::new();
    for i in 0..data.n() {
        if !data.delta(i) {
            continue;
        }
        let t = data.t(i);
        event_times.push(t);
        let resp = psi(km.left_limit_at(t), alpha0);
        if resp.is_finite() {
            points.push((t.ln(), resp));
        }
    }
    if points.len() < 2 {
        return Err(Error::NonConvergence(format!(
            "only {} usable regression points for the lifetime starting values",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let x_bar = points.iter().map(|p| p.0).sum::<f64>() / m;
    let y_bar = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx = points.iter().map(|p| (p.0 - x_bar).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - x_bar) * (p.1 - y_bar)).sum::<f64>();
    if sxx <= 0.0 {
        return Err(Error::NonConvergence(
            "all usable event times coincide; the slope is undefined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let lambda0 = (-intercept / slope).exp();
    if !(slope > 0.0 && lambda0.is_finite() && lambda0 > 0.0) {
        return Err(Error::NonConvergence(format!(
            "degenerate lifetime regression (slope {slope}, intercept {intercept})"
        )));
    }
    let ew_ols = EwParams::new(alpha0, slope, lambda0)?;

    // Polish by maximizing the uncensored-only lifetime log-likelihood.
    let objective = |z: &[f64]| -> f64 {
        let p = match EwParams::new(z[0].exp(), z[1].exp(), z[2].exp()) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        event_times
            .iter()
            .map(|&t| ew_log_pdf(t, &p).unwrap_or(f64::NEG_INFINITY))
            .sum()
    };
    let report = maximize(
        objective,
        &[alpha0.ln(), slope.ln(), lambda0.ln()],
        &NmConfig::default(),
    );
    let ew = EwParams::new(
        report.argmax[0].exp(),
        report.argmax[1].exp(),
        report.argmax[2].exp(),
    )?;
    Ok(InitPolicyResult {
        theta0: Theta::new(vec![beta0, beta1], ew)?,
        ols_slope: slope,
        ols_intercept: intercept,
        ew_ols,
        alpha0,
        used_points: points.len(),
    })
}
