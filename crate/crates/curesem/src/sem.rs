//! Stochastic EM estimation for the mixture cure model.
//!
//! Instead of averaging over the latent cure statuses, each iteration draws
//! them: censored records receive a cure status `η` from its conditional
//! Bernoulli distribution, susceptible censored records additionally receive
//! an imputed residual lifetime `y* > t` from the truncated lifetime
//! distribution, and the resulting pseudo-complete-data log-likelihood is
//! maximized. The chain of iterates `{θ⁽ʳ⁾}` is then summarized after a
//! burn-in period — by default the iterate with the largest observed-data
//! log-likelihood.
//!
//! Two imputation schemes are provided: (a) closed-form inversion of the
//! (improper) conditional cdf of the population lifetime past `t`, and
//! (b) a mixture re-draw followed by truncated sampling. Pooled over the
//! latent draw they impute the same finite lifetimes; (a) is the default.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::em::{within_bounds, Divergence, EmConfig};
use crate::error::{Error, Result};
use crate::ew::{ew_isf_ln, ew_sample_truncated, EwKernel};
use crate::model::{
    cure_rate, linear_predictor, loglik_is_feasible, observed_loglik, pop_survival, Dataset,
    SurvivalRecord, Theta, INFEASIBLE_LOGLIK,
};
use crate::numeric::{log_add_exp, softplus};
use crate::optim::{maximize, NmConfig, ParamPins, ParamSpace};

/// Imputed lifetime of one record: a finite value for susceptible records,
/// or the cured tag (conceptually an infinite lifetime). The tag never
/// enters likelihood sums as a float, so no infinities can propagate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImputedLifetime {
    Finite(f64),
    Cured,
}

impl ImputedLifetime {
    /// The finite lifetime, if any.
    pub fn finite(&self) -> Option<f64> {
        match self {
            ImputedLifetime::Finite(y) => Some(*y),
            ImputedLifetime::Cured => None,
        }
    }
}

/// One pseudo-complete-data record produced by an S-step.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRecord {
    pub y_star: ImputedLifetime,
    pub delta: bool,
    pub x: Vec<f64>,
    /// Cure status: `true` = susceptible.
    pub eta: bool,
}

/// How the chain is reduced to one estimate after burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// The post-burn-in iterate with the largest observed-data
    /// log-likelihood (earliest on ties).
    #[default]
    MaxLoglik,
    /// Coordinate-wise mean of the post-burn-in iterates.
    PostBurninAverage,
    /// Use the warm-up iterations only, then finish from their best iterate
    /// with the deterministic EM algorithm.
    SemThenEm,
}

/// Which truncated-lifetime imputation scheme the S-step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LifetimeScheme {
    /// Closed-form inversion of the conditional population cdf past `t`.
    #[default]
    InverseCdf,
    /// Mixture re-draw, then a truncated lifetime draw for susceptibles.
    BernoulliThenTruncated,
}

/// Stochastic-EM run configuration.
#[derive(Debug, Clone, Copy)]
pub struct SemConfig {
    /// Total chain length `R`.
    pub total_iters: usize,
    /// Burn-in length `R*` (must be `< total_iters`).
    pub burn_in: usize,
    pub selection: Selection,
    pub scheme: LifetimeScheme,
    /// Seed of the chain's private random stream.
    pub seed: u64,
    /// Sub-family pins (fixed shape parameters), if any.
    pub pins: ParamPins,
    /// M-step optimizer settings.
    pub nm: NmConfig,
    /// Stopping settings for the EM finish under [`Selection::SemThenEm`].
    pub em_epsilon: f64,
    pub em_max_iters: usize,
}

impl Default for SemConfig {
    fn default() -> Self {
        SemConfig {
            total_iters: 1500,
            burn_in: 500,
            selection: Selection::default(),
            scheme: LifetimeScheme::default(),
            seed: 0,
            pins: ParamPins::default(),
            nm: NmConfig::default(),
            em_epsilon: 1e-3,
            em_max_iters: 500,
        }
    }
}

/// One chain entry: the iterate after the r-th M-step and its observed-data
/// log-likelihood.
#[derive(Debug, Clone)]
pub struct SemChainStep {
    pub iteration: usize,
    pub theta: Theta,
    pub loglik: f64,
}

/// The full sequence of chain iterates.
#[derive(Debug, Clone, Default)]
pub struct SemChain {
    pub steps: Vec<SemChainStep>,
}

impl SemChain {
    /// Export as CSV with columns `iter, beta0.., alpha, k, lambda, loglik`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_beta = self.steps.first().map_or(1, |s| s.theta.beta.len());
        let mut header: Vec<String> = vec!["iter".into()];
        header.extend((0..n_beta).map(|j| format!("beta{j}")));
        header.extend(["alpha", "k", "lambda", "loglik"].map(String::from));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row: Vec<String> = vec![s.iteration.to_string()];
            row.extend(s.theta.beta.iter().map(|b| b.to_string()));
            row.push(s.theta.ew.alpha().to_string());
            row.push(s.theta.ew.k().to_string());
            row.push(s.theta.ew.lambda().to_string());
            row.push(s.loglik.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of one stochastic-EM run.
#[derive(Debug, Clone)]
pub struct SemFit {
    /// Selected estimate.
    pub theta: Theta,
    /// Observed-data log-likelihood at `theta`.
    pub loglik: f64,
    /// Chain position the estimate came from (MaxLoglik selection only).
    pub selected_iteration: Option<usize>,
    /// Whether the run completed with no divergence flag.
    pub converged: bool,
    /// Set when the run is divergent; `None` iff `converged`.
    pub divergence: Option<Divergence>,
    pub chain: SemChain,
}

/// Draw a cure status for one record at the current iterate: event records
/// are susceptible with certainty; censored records are susceptible with
/// conditional probability `1 - π₀(x)/S_p(t)`.
pub fn draw_cure_status<R: Rng + ?Sized>(rng: &mut R, theta: &Theta, rec: &SurvivalRecord) -> bool {
    if rec.delta {
        return true;
    }
    let p = 1.0 - cure_rate(theta, &rec.x).expect("dimension mismatch")
        / pop_survival(theta, rec.t, &rec.x).expect("domain");
    rng.random::<f64>() < p
}

/// Impute a lifetime for one record given its drawn cure status.
///
/// Event records keep `y* = t`; cured records get the cured tag. A censored
/// susceptible record draws `y* > t`:
///
/// * [`LifetimeScheme::InverseCdf`]: `u ~ U(0, b)` with
///   `b = 1 - π₀/S_p(t)`, then the conditional cdf
///   `G(y) = [S_p(t) - S_p(y)]/S_p(t)` is inverted in closed form — the
///   algebra collapses to `S(y*) = S(t)·(1 - u/b)` in the susceptible
///   survival, handled on the log scale.
/// * [`LifetimeScheme::BernoulliThenTruncated`]: re-draw mixture membership
///   `m ~ Bernoulli(ν/(1+ν))`; on `m = 1` sample the lifetime distribution
///   truncated at `t`, on `m = 0` the record imputes as cured (callers set
///   its `η` to 0).
///
/// Errors with a degenerate-truncation error when the survival past `t` has
/// underflowed and no draw is representable.
pub fn impute_lifetime<R: Rng + ?Sized>(
    rng: &mut R,
    theta: &Theta,
    rec: &SurvivalRecord,
    eta: bool,
    scheme: LifetimeScheme,
) -> Result<ImputedLifetime> {
    if rec.delta {
        return Ok(ImputedLifetime::Finite(rec.t));
    }
    if !eta {
        return Ok(ImputedLifetime::Cured);
    }
    match scheme {
        LifetimeScheme::InverseCdf => {
            let lsf = crate::ew::ew_log_survival(rec.t, &theta.ew)?;
            if lsf == f64::NEG_INFINITY {
                return Err(Error::DegenerateTruncation(format!(
                    "survival underflowed at censoring time {}",
                    rec.t
                )));
            }
            // u ~ U(0,b) with G(y*) = u reduces to S(y*) = S(t)·(1 - u/b);
            // draw the conditional tail probability 1 - u/b directly.
            let v: f64 = rng.random();
            let y = ew_isf_ln(lsf + (-v).ln_1p(), &theta.ew)?;
            Ok(ImputedLifetime::Finite(ensure_past(y, rec.t)))
        }
        LifetimeScheme::BernoulliThenTruncated => {
            let p_susceptible = 1.0 - cure_rate(theta, &rec.x)?;
            if rng.random::<f64>() < p_susceptible {
                let y = ew_sample_truncated(rng, &theta.ew, rec.t)?;
                Ok(ImputedLifetime::Finite(ensure_past(y, rec.t)))
            } else {
                Ok(ImputedLifetime::Cured)
            }
        }
    }
}

/// Keep an imputed lifetime finite and strictly past the censoring time.
/// Rounding at the `u → 0⁺` boundary can land exactly on `t`, and at
/// extreme chain iterates (tiny shape `k`) the inverse transform can
/// overflow; such a draw clamps to the largest representable value, where
/// its likelihood terms penalize the iterate instead of crashing the chain.
#[inline]
fn ensure_past(y: f64, t: f64) -> f64 {
    if y > t {
        y.min(f64::MAX)
    } else {
        crate::numeric::next_above(t)
    }
}

/// Pseudo-complete-data log-likelihood:
/// `Σ_{η=1} [xᵀβ - ln(1+e^{xᵀβ}) + ln f(y*)] + Σ_{η=0} [-ln(1+e^{xᵀβ})]`.
///
/// Cured records contribute through the link only — their lifetime terms
/// vanish analytically, so the cured tag never meets floating-point math.
/// Returns the infeasibility sentinel on underflow.
pub fn pseudo_complete_loglik(theta: &Theta, pseudo: &[PseudoRecord]) -> f64 {
    let kernel = EwKernel::new(&theta.ew);
    let mut total = 0.0;
    for rec in pseudo {
        debug_assert_eq!(theta.beta.len(), rec.x.len() + 1, "dimension mismatch");
        let lin = linear_predictor(&theta.beta, &rec.x);
        let term = if rec.eta {
            let y = rec
                .y_star
                .finite()
                .expect("susceptible records carry a finite lifetime");
            lin - softplus(lin) + kernel.log_pdf(y, y.ln())
        } else {
            -softplus(lin)
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

/// S-step working state, reused across iterations to avoid reallocation.
struct SStep {
    /// Cure status per record.
    eta: Vec<bool>,
    /// Imputed lifetime and its log, per record (valid where `eta`).
    y: Vec<f64>,
    ln_y: Vec<f64>,
    /// Susceptible-count per covariate pattern.
    eta_sums: Vec<f64>,
}

impl SStep {
    fn new(data: &Dataset) -> Self {
        let n = data.n();
        SStep {
            eta: vec![false; n],
            y: vec![0.0; n],
            ln_y: vec![0.0; n],
            eta_sums: vec![0.0; data.patterns().len()],
        }
    }

    /// Draw cure statuses and lifetimes for every record at `theta`.
    fn run(
        &mut self,
        rng: &mut ChaCha12Rng,
        theta: &Theta,
        data: &Dataset,
        scheme: LifetimeScheme,
    ) -> Result<()> {
        let kernel = EwKernel::new(&theta.ew);
        let patterns = data.patterns();
        let mut ln_cure = Vec::with_capacity(patterns.len());
        let mut ln_sus = Vec::with_capacity(patterns.len());
        let mut sus_prob = Vec::with_capacity(patterns.len());
        for row in &patterns.rows {
            let lin = linear_predictor(&theta.beta, row);
            ln_cure.push(-softplus(lin));
            ln_sus.push(-softplus(-lin));
            sus_prob.push(crate::numeric::sigmoid(lin));
        }
        self.eta_sums.fill(0.0);
        for i in 0..data.n() {
            let g = data.pattern_of(i);
            let (eta, y) = if data.delta(i) {
                (true, data.t(i))
            } else {
                let lsf = kernel.log_sf(data.ln_t(i));
                let lsp = log_add_exp(ln_cure[g], ln_sus[g] + lsf);
                let p = 1.0 - (ln_cure[g] - lsp).exp();
                if !(rng.random::<f64>() < p) {
                    self.eta[i] = false;
                    continue;
                }
                match scheme {
                    LifetimeScheme::InverseCdf => {
                        if lsf == f64::NEG_INFINITY {
                            return Err(Error::DegenerateTruncation(format!(
                                "survival underflowed at censoring time {}",
                                data.t(i)
                            )));
                        }
                        let v: f64 = rng.random();
                        let y = ew_isf_ln(lsf + (-v).ln_1p(), &theta.ew)?;
                        (true, ensure_past(y, data.t(i)))
                    }
                    LifetimeScheme::BernoulliThenTruncated => {
                        if rng.random::<f64>() < sus_prob[g] {
                            let y = ew_sample_truncated(rng, &theta.ew, data.t(i))?;
                            (true, ensure_past(y, data.t(i)))
                        } else {
                            self.eta[i] = false;
                            continue;
                        }
                    }
                }
            };
            self.eta[i] = eta;
            self.y[i] = y;
            self.ln_y[i] = y.ln();
            self.eta_sums[g] += 1.0;
        }
        Ok(())
    }

    /// Pseudo-complete-data log-likelihood at `theta` for the current draw,
    /// aggregated over covariate patterns.
    fn loglik(&self, theta: &Theta, data: &Dataset) -> f64 {
        let patterns = data.patterns();
        let mut total = 0.0;
        for (g, row) in patterns.rows.iter().enumerate() {
            let lin = linear_predictor(&theta.beta, row);
            total += self.eta_sums[g] * lin - patterns.counts[g] * softplus(lin);
        }
        let kernel = EwKernel::new(&theta.ew);
        for i in 0..data.n() {
            if !self.eta[i] {
                continue;
            }
            let term = kernel.log_pdf(self.y[i], self.ln_y[i]);
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

    /// Materialize the current draw as public pseudo records.
    #[cfg(test)]
    fn pseudo_records(&self, data: &Dataset) -> Vec<PseudoRecord> {
        (0..data.n())
            .map(|i| PseudoRecord {
                y_star: if self.eta[i] {
                    ImputedLifetime::Finite(self.y[i])
                } else {
                    ImputedLifetime::Cured
                },
                delta: data.delta(i),
                x: data.x_row(i).to_vec(),
                eta: self.eta[i],
            })
            .collect()
    }
}

/// Run the stochastic EM chain from `start` (snapped to any pins in `cfg`).
///
/// Each iteration draws cure statuses and lifetimes (S-step) and maximizes
/// the pseudo-complete-data log-likelihood from the previous iterate
/// (M-step). After `cfg.burn_in` iterations are discarded, the chain is
/// reduced per `cfg.selection`. Under [`Selection::SemThenEm`] only the
/// burn-in segment is generated and its best iterate seeds a deterministic
/// EM finish.
///
/// Divergence never aborts the chain unless an M-step produces unusable
/// parameters: out-of-box iterates and infeasible post-burn-in likelihoods
/// set the flag and the chain continues, so study-level reporting can count
/// the run while still seeing the full trace.
///
/// Errors only on structural problems: invalid configuration, an infeasible
/// starting point, or a degenerate truncation during imputation.
pub fn fit_sem(data: &Dataset, start: &Theta, cfg: &SemConfig) -> Result<SemFit> {
    if cfg.total_iters == 0 || cfg.burn_in >= cfg.total_iters {
        return Err(Error::InvalidParameter(format!(
            "burn-in ({}) must be smaller than the total iteration count ({})",
            cfg.burn_in, cfg.total_iters
        )));
    }
    let space = ParamSpace::new(data.d(), cfg.pins);
    let start = space.conform(start)?;
    if !loglik_is_feasible(observed_loglik(&start, data)) {
        return Err(Error::InvalidParameter(
            "starting point has infeasible observed log-likelihood".into(),
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut state = SStep::new(data);
    let mut chain = SemChain::default();
    let mut divergence: Option<Divergence> = None;
    let mut current = start.clone();

    let r_max = match cfg.selection {
        Selection::SemThenEm => cfg.burn_in.max(1),
        _ => cfg.total_iters,
    };
    for r in 1..=r_max {
        state.run(&mut rng, &current, data, cfg.scheme)?;
        let objective = |z: &[f64]| match space.unpack_log(z) {
            Ok(th) => state.loglik(&th, data),
            Err(_) => INFEASIBLE_LOGLIK,
        };
        let report = maximize(objective, &space.pack_log(&current), &cfg.nm);
        let next = match space.unpack_log(&report.argmax) {
            Ok(th) => th,
            Err(_) => {
                // Unusable M-step output: truncate the chain here.
                divergence = Some(Divergence::InfeasibleObjective);
                break;
            }
        };
        let ll = observed_loglik(&next, data);
        chain.steps.push(SemChainStep { iteration: r, theta: next.clone(), loglik: ll });
        if divergence.is_none() && !within_bounds(&next) {
            divergence = Some(Divergence::OutOfBounds);
        }
        if divergence.is_none() && r > cfg.burn_in && !loglik_is_feasible(ll) {
            divergence = Some(Divergence::InfeasibleObjective);
        }
        current = next;
    }

    // Reduce the chain to one estimate.
    let post: Vec<&SemChainStep> =
        chain.steps.iter().filter(|s| s.iteration > cfg.burn_in).collect();
    let (theta, loglik, selected_iteration, em_converged) = match cfg.selection {
        Selection::MaxLoglik => {
            match post
                .iter()
                .filter(|s| loglik_is_feasible(s.loglik))
                .max_by(|a, b| {
                    // Strictly-greater comparison keeps the earliest maximum.
                    a.loglik.partial_cmp(&b.loglik).unwrap().then(
                        b.iteration.cmp(&a.iteration),
                    )
                }) {
                Some(best) => {
                    (best.theta.clone(), best.loglik, Some(best.iteration), true)
                }
                None => {
                    divergence.get_or_insert(Divergence::InfeasibleObjective);
                    let last = chain.steps.last().map_or(&start, |s| &s.theta).clone();
                    let ll = observed_loglik(&last, data);
                    (last, ll, None, true)
                }
            }
        }
        Selection::PostBurninAverage => {
            if post.is_empty() {
                divergence.get_or_insert(Divergence::InfeasibleObjective);
                let last = chain.steps.last().map_or(&start, |s| &s.theta).clone();
                let ll = observed_loglik(&last, data);
                (last, ll, None, true)
            } else {
                let m = post.len() as f64;
                let mut mean = space.pack_original(&post[0].theta);
                for s in &post[1..] {
                    for (acc, v) in mean.iter_mut().zip(space.pack_original(&s.theta)) {
                        *acc += v;
                    }
                }
                for v in &mut mean {
                    *v /= m;
                }
                match space.unpack_original(&mean) {
                    Ok(th) => {
                        let ll = observed_loglik(&th, data);
                        if !loglik_is_feasible(ll) {
                            divergence.get_or_insert(Divergence::InfeasibleObjective);
                        }
                        (th, ll, None, true)
                    }
                    Err(_) => {
                        divergence.get_or_insert(Divergence::InfeasibleObjective);
                        let last = chain.steps.last().map_or(&start, |s| &s.theta).clone();
                        let ll = observed_loglik(&last, data);
                        (last, ll, None, true)
                    }
                }
            }
        }
        Selection::SemThenEm => {
            let warm = chain
                .steps
                .iter()
                .filter(|s| loglik_is_feasible(s.loglik))
                .max_by(|a, b| {
                    a.loglik.partial_cmp(&b.loglik).unwrap().then(
                        b.iteration.cmp(&a.iteration),
                    )
                })
                .map_or(&start, |s| &s.theta)
                .clone();
            let em_cfg = EmConfig {
                epsilon: cfg.em_epsilon,
                max_iters: cfg.em_max_iters,
                pins: cfg.pins,
                nm: cfg.nm,
            };
            let fit = crate::em::fit_em(data, &warm, &em_cfg)?;
            if divergence.is_none() {
                divergence = fit.divergence;
            }
            (fit.theta, fit.loglik, None, fit.converged)
        }
    };

    Ok(SemFit {
        theta,
        loglik,
        selected_iteration,
        converged: divergence.is_none() && em_converged,
        divergence,
        chain,
    })
}
