//! Bernoulli mixture cure-rate population model.
//!
//! A fraction `π₀(x) = 1/(1+ν)` of the population is cured (never experiences
//! the event); the rest are susceptible with exponentiated-Weibull lifetimes.
//! Covariates act on the cure probability through the log-linear link
//! `ν = exp(xᵀβ)` (intercept first); the lifetime parameters are shared.
//!
//! Population quantities:
//! * survival  `S_p(t) = π₀ + (1-π₀)·S(t)`
//! * density   `f_p(t) = (1-π₀)·f(t)`
//!
//! and the observed-data log-likelihood sums `log f_p` over event records and
//! `log S_p` over censored ones (no additive constant is retained, so values
//! are comparable across nested fits).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ew::{EwKernel, EwParams};
use crate::numeric::{log_add_exp, sigmoid, softplus};

/// Sentinel returned by likelihood evaluations when any term underflows or
/// the parameters are infeasible. Orders strictly below every legitimate
/// log-likelihood value so derivative-free maximizers can treat infeasible
/// proposals as ordinary bad points instead of unwinding through errors.
pub const INFEASIBLE_LOGLIK: f64 = -1e308;

/// Whether a log-likelihood value is a real evaluation rather than the
/// infeasibility sentinel (or an overflow beyond it).
#[inline]
pub fn loglik_is_feasible(ll: f64) -> bool {
    ll.is_finite() && ll > 0.5 * INFEASIBLE_LOGLIK
}

/// Full model parameter: cure-link coefficients `β` (intercept first, length
/// d+1) plus the susceptible lifetime parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    /// Logistic-link coefficients, intercept first.
    pub beta: Vec<f64>,
    /// Susceptible exponentiated-Weibull lifetime parameters.
    pub ew: EwParams,
}

impl Theta {
    /// Validated constructor: `beta` must be nonempty with finite entries.
    pub fn new(beta: Vec<f64>, ew: EwParams) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidParameter(
                "beta must contain at least the intercept".into(),
            ));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta entries must be finite, got {b}")));
        }
        Ok(Theta { beta, ew })
    }

    /// Covariate dimension `d` implied by the coefficient length.
    #[inline]
    pub fn d(&self) -> usize {
        self.beta.len() - 1
    }
}

/// One observation: follow-up time, event indicator (`true` when the event
/// was observed, `false` when censored) and the covariate vector (length d,
/// without the intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub t: f64,
    pub delta: bool,
    pub x: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(t: f64, delta: bool, x: Vec<f64>) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Data(format!("follow-up time must be finite and > 0, got {t}")));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("covariates must be finite, got {v}")));
        }
        Ok(SurvivalRecord { t, delta, x })
    }
}

/// Distinct covariate rows of a dataset plus each record's row index.
///
/// The logistic part of every likelihood in this crate depends on covariates
/// only through `xᵀβ`, so grouped sums over the (few) distinct rows replace
/// per-record link evaluations in hot loops. Exactness is unaffected: the
/// grouping is by bit-identical covariate vectors.
#[derive(Debug, Clone)]
pub(crate) struct PatternTable {
    /// Pattern index of each record.
    pub(crate) assignment: Vec<u32>,
    /// Distinct covariate rows, indexed by pattern id.
    pub(crate) rows: Vec<Vec<f64>>,
    /// Number of records carrying each pattern.
    pub(crate) counts: Vec<f64>,
}

impl PatternTable {
    fn build(x: &[f64], n: usize, d: usize) -> Self {
        use std::collections::HashMap;
        let mut ids: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut assignment = Vec::with_capacity(n);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let id = *ids.entry(key).or_insert_with(|| {
                rows.push(row.to_vec());
                counts.push(0.0);
                (rows.len() - 1) as u32
            });
            counts[id as usize] += 1.0;
            assignment.push(id);
        }
        PatternTable { assignment, rows, counts }
    }

    /// Number of distinct covariate rows.
    pub(crate) fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Immutable survival dataset with columnar storage (`ln t` precomputed) and
/// a cached covariate-pattern table. Shareable across concurrent evaluators.
#[derive(Debug, Clone)]
pub struct Dataset {
    t: Vec<f64>,
    ln_t: Vec<f64>,
    delta: Vec<bool>,
    /// Row-major n×d covariate matrix.
    x: Vec<f64>,
    d: usize,
    n_events: usize,
    patterns: PatternTable,
}

impl Dataset {
    /// Build from records; all must share one covariate dimension, and the
    /// collection must be nonempty.
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let n = records.len();
        if n == 0 {
            return Err(Error::Data("dataset must contain at least one record".into()));
        }
        let d = records[0].x.len();
        let mut t = Vec::with_capacity(n);
        let mut ln_t = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n * d);
        let mut n_events = 0;
        for (i, rec) in records.into_iter().enumerate() {
            if !rec.t.is_finite() || rec.t <= 0.0 {
                return Err(Error::Data(format!(
                    "record {i}: follow-up time must be finite and > 0, got {}",
                    rec.t
                )));
            }
            if rec.x.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "record {i}: covariate dimension {} differs from {d}",
                    rec.x.len()
                )));
            }
            if let Some(v) = rec.x.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("record {i}: covariates must be finite, got {v}")));
            }
            t.push(rec.t);
            ln_t.push(rec.t.ln());
            delta.push(rec.delta);
            n_events += usize::from(rec.delta);
            x.extend_from_slice(&rec.x);
        }
        let patterns = PatternTable::build(&x, n, d);
        Ok(Dataset { t, ln_t, delta, x, d, n_events, patterns })
    }

    /// Number of records.
    #[inline]
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Covariate dimension (excluding the intercept).
    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of event (uncensored) records.
    #[inline]
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.t[i]
    }

    #[inline]
    pub(crate) fn ln_t(&self, i: usize) -> f64 {
        self.ln_t[i]
    }

    #[inline]
    pub fn delta(&self, i: usize) -> bool {
        self.delta[i]
    }

    /// Covariate row of record `i` (length d).
    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Reconstruct the record list (owned copies), e.g. for export.
    pub fn records(&self) -> Vec<SurvivalRecord> {
        (0..self.n())
            .map(|i| SurvivalRecord {
                t: self.t[i],
                delta: self.delta[i],
                x: self.x_row(i).to_vec(),
            })
            .collect()
    }

    #[inline]
    pub(crate) fn patterns(&self) -> &PatternTable {
        &self.patterns
    }

    /// Pattern id of record `i` into [`Self::patterns`].
    #[inline]
    pub(crate) fn pattern_of(&self, i: usize) -> usize {
        self.patterns.assignment[i] as usize
    }
}

/// Linear predictor `β₀ + Σ_j β_{j+1} x_j`. Callers guarantee
/// `beta.len() == x.len() + 1`.
#[inline]
pub(crate) fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(beta.len(), x.len() + 1);
    let mut lin = beta[0];
    for (b, v) in beta[1..].iter().zip(x) {
        lin += b * v;
    }
    lin
}

fn checked_lin(theta: &Theta, x: &[f64]) -> Result<f64> {
    if theta.beta.len() != x.len() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {} but covariate vector has length {} (expected {})",
            theta.beta.len(),
            x.len(),
            theta.beta.len() - 1
        )));
    }
    Ok(linear_predictor(&theta.beta, x))
}

/// Incidence odds `ν = exp(xᵀβ)` (intercept prepended).
pub fn nu(theta: &Theta, x: &[f64]) -> Result<f64> {
    Ok(checked_lin(theta, x)?.exp())
}

/// Cure probability `π₀ = 1/(1+ν)`, strictly inside (0,1).
pub fn cure_rate(theta: &Theta, x: &[f64]) -> Result<f64> {
    Ok(sigmoid(-checked_lin(theta, x)?))
}

/// Population survival `S_p(t) = π₀ + (1-π₀)·S(t)`.
pub fn pop_survival(theta: &Theta, t: f64, x: &[f64]) -> Result<f64> {
    let lin = checked_lin(theta, x)?;
    let s = crate::ew::ew_survival(t, &theta.ew)?;
    Ok(sigmoid(-lin) + sigmoid(lin) * s)
}

/// `ln S_p(t)`, stable when both mixture components are tiny.
pub fn pop_log_survival(theta: &Theta, t: f64, x: &[f64]) -> Result<f64> {
    let lin = checked_lin(theta, x)?;
    let lsf = crate::ew::ew_log_survival(t, &theta.ew)?;
    Ok(log_add_exp(-softplus(lin), -softplus(-lin) + lsf))
}

/// Population (sub-)density `f_p(t) = (1-π₀)·f(t)`.
pub fn pop_density(theta: &Theta, t: f64, x: &[f64]) -> Result<f64> {
    Ok(pop_log_density(theta, t, x)?.exp())
}

/// `ln f_p(t) = ln(1-π₀) + ln f(t)`.
pub fn pop_log_density(theta: &Theta, t: f64, x: &[f64]) -> Result<f64> {
    let lin = checked_lin(theta, x)?;
    let lpdf = crate::ew::ew_log_pdf(t, &theta.ew)?;
    Ok(-softplus(-lin) + lpdf)
}

/// Observed-data log-likelihood: `Σ_{δ=1} ln f_p(t_i) + Σ_{δ=0} ln S_p(t_i)`
/// with no additive constant retained.
///
/// Returns [`INFEASIBLE_LOGLIK`] instead of `-inf`/NaN when any term
/// underflows, so optimizer loops see an ordered objective.
///
/// # Panics
/// If `theta.beta` does not match the dataset's covariate dimension; the
/// pairing is fixed once per fit, not per evaluation.
pub fn observed_loglik(theta: &Theta, data: &Dataset) -> f64 {
    assert_eq!(
        theta.beta.len(),
        data.d() + 1,
        "beta length {} incompatible with covariate dimension {}",
        theta.beta.len(),
        data.d()
    );
    let kernel = EwKernel::new(&theta.ew);
    let patterns = data.patterns();
    // Per-pattern link terms, computed once for the whole pass.
    let mut ln_sus = Vec::with_capacity(patterns.len()); // ln(1-π₀) = -softplus(-lin)
    let mut ln_cure = Vec::with_capacity(patterns.len()); // ln π₀ = -softplus(lin)
    for row in &patterns.rows {
        let lin = linear_predictor(&theta.beta, row);
        ln_sus.push(-softplus(-lin));
        ln_cure.push(-softplus(lin));
    }
    let mut total = 0.0;
    for i in 0..data.n() {
        let g = data.pattern_of(i);
        let term = if data.delta(i) {
            ln_sus[g] + kernel.log_pdf(data.t(i), data.ln_t(i))
        } else {
            log_add_exp(ln_cure[g], ln_sus[g] + kernel.log_sf(data.ln_t(i)))
        };
        if !term.is_finite() {
            return INFEASIBLE_LOGLIK;
        }
        total += term;
    }
    if total.is_finite() {
        total
    } else {
        INFEASIBLE_LOGLIK
    }
}
