//! Deterministic EM estimation for the mixture cure model.
//!
//! The complete-data representation attaches to every record a latent cure
//! status `η` (1 = susceptible). The E-step replaces `η` by its posterior
//! expectation `w` given the data and the current iterate; the M-step
//! maximizes the resulting `Q` function with Nelder–Mead over the
//! log-transformed free parameters; iteration stops when the largest
//! relative parameter change falls below `epsilon` (absolute change for
//! coordinates currently at zero).
//!
//! Divergence bookkeeping feeds the robustness studies: a run is divergent
//! when the iteration cap is hit, an iterate's objective becomes infeasible,
//! or an iterate leaves the plausibility box (`|β_j| > 50`, lifetime
//! parameters outside `[1e-6, 1e6]`).

use std::io::Write;

use crate::error::{Error, Result};
use crate::ew::EwKernel;
use crate::model::{
    linear_predictor, loglik_is_feasible, observed_loglik, Dataset, Theta, INFEASIBLE_LOGLIK,
};
use crate::numeric::{log_add_exp, softplus};
use crate::optim::{maximize, NmConfig, ParamPins, ParamSpace};

/// Coefficient magnitude beyond which an iterate counts as divergent.
pub(crate) const BETA_BOUND: f64 = 50.0;
/// Plausibility box for the lifetime parameters.
pub(crate) const EW_BOUND_LO: f64 = 1e-6;
pub(crate) const EW_BOUND_HI: f64 = 1e6;

/// Whether an iterate lies inside the plausibility box.
pub(crate) fn within_bounds(theta: &Theta) -> bool {
    theta.beta.iter().all(|b| b.abs() <= BETA_BOUND)
        && [theta.ew.alpha(), theta.ew.k(), theta.ew.lambda()]
            .iter()
            .all(|v| (EW_BOUND_LO..=EW_BOUND_HI).contains(v))
}

/// Why a run was flagged divergent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// Iteration cap reached before the stopping rule was satisfied.
    MaxIters,
    /// An iterate produced a non-finite (or sentinel) objective.
    InfeasibleObjective,
    /// An iterate left the plausibility box.
    OutOfBounds,
}

/// EM stopping and M-step configuration.
#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    /// Stopping threshold on the max relative parameter change.
    pub epsilon: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Sub-family pins (fixed shape parameters), if any.
    pub pins: ParamPins,
    /// M-step optimizer settings.
    pub nm: NmConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            epsilon: 1e-3,
            max_iters: 500,
            pins: ParamPins::default(),
            nm: NmConfig::default(),
        }
    }
}

/// One recorded iteration: the iterate, its observed-data log-likelihood and
/// the stopping statistic that produced it (`None` for the starting point).
#[derive(Debug, Clone)]
pub struct EmStep {
    pub iteration: usize,
    pub theta: Theta,
    pub loglik: f64,
    pub max_rel_change: Option<f64>,
}

/// Full iteration history of one EM run.
#[derive(Debug, Clone, Default)]
pub struct EmTrace {
    pub steps: Vec<EmStep>,
}

impl EmTrace {
    /// Export as CSV with columns
    /// `iteration, beta0.., alpha, k, lambda, loglik, max_rel_change`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_beta = self.steps.first().map_or(1, |s| s.theta.beta.len());
        let mut header: Vec<String> = vec!["iteration".into()];
        header.extend((0..n_beta).map(|j| format!("beta{j}")));
        header.extend(["alpha", "k", "lambda", "loglik", "max_rel_change"].map(String::from));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row: Vec<String> = vec![s.iteration.to_string()];
            row.extend(s.theta.beta.iter().map(|b| b.to_string()));
            row.push(s.theta.ew.alpha().to_string());
            row.push(s.theta.ew.k().to_string());
            row.push(s.theta.ew.lambda().to_string());
            row.push(s.loglik.to_string());
            row.push(s.max_rel_change.map(|c| c.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of one EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    /// Final iterate (the ML estimate when `converged`).
    pub theta: Theta,
    /// Observed-data log-likelihood at `theta`.
    pub loglik: f64,
    /// EM iterations performed.
    pub iterations: usize,
    /// Whether the stopping rule was met with every iterate feasible.
    pub converged: bool,
    /// Set when the run is divergent; `None` iff `converged`.
    pub divergence: Option<Divergence>,
    pub trace: EmTrace,
}

/// Posterior susceptibility weights at `theta`: `w_i = 1` for event records,
/// `w_i = 1 - π₀(x_i)/S_p(t_i)` for censored ones. Always in `[0,1]`.
///
/// # Panics
/// If `theta.beta` does not match the dataset's covariate dimension.
pub fn e_step(theta: &Theta, data: &Dataset) -> Vec<f64> {
    assert_eq!(
        theta.beta.len(),
        data.d() + 1,
        "beta length {} incompatible with covariate dimension {}",
        theta.beta.len(),
        data.d()
    );
    let kernel = EwKernel::new(&theta.ew);
    let patterns = data.patterns();
    let mut ln_cure = Vec::with_capacity(patterns.len());
    let mut ln_sus = Vec::with_capacity(patterns.len());
    for row in &patterns.rows {
        let lin = linear_predictor(&theta.beta, row);
        ln_cure.push(-softplus(lin));
        ln_sus.push(-softplus(-lin));
    }
    (0..data.n())
        .map(|i| {
            if data.delta(i) {
                1.0
            } else {
                let g = data.pattern_of(i);
                let lsp = log_add_exp(ln_cure[g], ln_sus[g] + kernel.log_sf(data.ln_t(i)));
                (1.0 - (ln_cure[g] - lsp).exp()).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Shared Q-function core over precomputed per-pattern weight sums.
///
/// `w_sums[g]` must hold the sum of `weights` over records with pattern `g`;
/// the M-step computes it once and reuses it across objective evaluations.
fn q_core(theta: &Theta, data: &Dataset, weights: &[f64], w_sums: &[f64]) -> f64 {
    let patterns = data.patterns();
    let mut total = 0.0;
    for (g, row) in patterns.rows.iter().enumerate() {
        let lin = linear_predictor(&theta.beta, row);
        total += w_sums[g] * lin - patterns.counts[g] * softplus(lin);
    }
    let kernel = EwKernel::new(&theta.ew);
    for i in 0..data.n() {
        let term = if data.delta(i) {
            kernel.log_pdf(data.t(i), data.ln_t(i))
        } else {
            let w = weights[i];
            if w == 0.0 {
                // Skip so that an underflowing survival term cannot poison a
                // record the weights have already written off.
                continue;
            }
            w * kernel.log_sf(data.ln_t(i))
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

fn pattern_weight_sums(data: &Dataset, weights: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; data.patterns().len()];
    for (i, w) in weights.iter().enumerate() {
        sums[data.pattern_of(i)] += w;
    }
    sums
}

/// Expected complete-data log-likelihood given posterior weights:
/// `Σ_i [w_i·x_iᵀβ − ln(1+e^{x_iᵀβ})] + Σ_{δ=1} ln f(t_i) + Σ_{δ=0} w_i·ln S(t_i)`.
///
/// Returns the infeasibility sentinel on underflow, like
/// [`observed_loglik`].
///
/// # Panics
/// If dimensions are inconsistent with the dataset.
pub fn q_function(theta: &Theta, weights: &[f64], data: &Dataset) -> f64 {
    assert_eq!(weights.len(), data.n(), "one weight per record required");
    assert_eq!(
        theta.beta.len(),
        data.d() + 1,
        "beta length {} incompatible with covariate dimension {}",
        theta.beta.len(),
        data.d()
    );
    q_core(theta, data, weights, &pattern_weight_sums(data, weights))
}

/// Run EM from `start` (snapped to any pins in `cfg`).
///
/// Alternates [`e_step`] and an M-step maximizing [`q_function`] from the
/// previous iterate until the largest relative parameter change (absolute
/// for zero coordinates) drops below `cfg.epsilon`, the iteration cap is
/// hit, or an iterate becomes infeasible. The trace records the start and
/// every accepted iterate.
///
/// Errors only on structural problems (infeasible starting point); search
/// failures are reported through the divergence flag instead.
pub fn fit_em(data: &Dataset, start: &Theta, cfg: &EmConfig) -> Result<EmFit> {
    let space = ParamSpace::new(data.d(), cfg.pins);
    let start = space.conform(start)?;
    let ll_start = observed_loglik(&start, data);
    if !loglik_is_feasible(ll_start) {
        return Err(Error::InvalidParameter(
            "starting point has infeasible observed log-likelihood".into(),
        ));
    }

    let mut trace = EmTrace::default();
    trace.steps.push(EmStep {
        iteration: 0,
        theta: start.clone(),
        loglik: ll_start,
        max_rel_change: None,
    });

    let mut current = start;
    let finish = |theta: Theta, iterations: usize, divergence: Option<Divergence>, trace: EmTrace| {
        let loglik = trace.steps.last().map_or(ll_start, |s| s.loglik);
        Ok(EmFit { theta, loglik, iterations, converged: divergence.is_none(), divergence, trace })
    };

    for r in 1..=cfg.max_iters {
        let weights = e_step(&current, data);
        let w_sums = pattern_weight_sums(data, &weights);
        let objective = |z: &[f64]| match space.unpack_log(z) {
            Ok(th) => q_core(&th, data, &weights, &w_sums),
            Err(_) => INFEASIBLE_LOGLIK,
        };
        let report = maximize(objective, &space.pack_log(&current), &cfg.nm);
        let next = match space.unpack_log(&report.argmax) {
            Ok(th) => th,
            Err(_) => {
                return finish(current, r, Some(Divergence::InfeasibleObjective), trace);
            }
        };

        let rel = max_rel_change(&space, &current, &next);
        let ll = observed_loglik(&next, data);
        trace.steps.push(EmStep {
            iteration: r,
            theta: next.clone(),
            loglik: ll,
            max_rel_change: Some(rel),
        });

        if !loglik_is_feasible(ll) {
            return finish(next, r, Some(Divergence::InfeasibleObjective), trace);
        }
        if !within_bounds(&next) {
            return finish(next, r, Some(Divergence::OutOfBounds), trace);
        }
        if rel < cfg.epsilon {
            return finish(next, r, None, trace);
        }
        current = next;
    }
    let last = current;
    finish(last, cfg.max_iters, Some(Divergence::MaxIters), trace)
}

/// Largest relative coordinate change between successive iterates on the
/// original scale; coordinates at exactly zero are compared absolutely.
fn max_rel_change(space: &ParamSpace, prev: &Theta, next: &Theta) -> f64 {
    let p = space.pack_original(prev);
    let n = space.pack_original(next);
    p.iter()
        .zip(&n)
        .map(|(a, b)| {
            let diff = (b - a).abs();
            if *a == 0.0 {
                diff
            } else {
                diff / a.abs()
            }
        })
        .fold(0.0, f64::max)
}
