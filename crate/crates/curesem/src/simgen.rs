//! Simulation machinery: derive regression coefficients from target cure
//! rates, solve per-group censoring rates, generate datasets, run Monte
//! Carlo studies (bias / RMSE / coverage / divergence), and execute the
//! robustness protocols (far starting values, contaminated data).
//!
//! The shipped harness uses the single group covariate `x ∈ {1,2,3,4}`;
//! a design fixes the group-1 and group-4 cure rates, the per-group
//! censoring proportions, and the true lifetime parameters. Everything
//! else — regression coefficients, the middle cure rates, the censoring
//! rate parameters — is solved from those targets.
//!
//! Replicate `i` of a study derives every random stream from
//! `seed + i`, so a full study reproduces bit for bit, replicates are
//! embarrassingly parallel, and the parallel and sequential drivers give
//! identical output.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ew::{ew_sample, ew_survival, EwParams};
use crate::inference::{fit_submodel, Engine, FitResult, SubModel};
use crate::model::{Dataset, SurvivalRecord, Theta};
use crate::numeric::adaptive_simpson;

/// The group covariate levels of the shipped harness.
const GROUPS: usize = 4;

/// How a replicate picks its starting point relative to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPolicy {
    /// Every coordinate within ±10% of its true value.
    #[default]
    NearTrue,
    /// Every coordinate off by at least 50% and at most 75%, either side.
    Far,
}

/// The population contaminating records in an outlier study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub pi01: f64,
    pub pi04: f64,
    pub censoring: [f64; 4],
    pub ew: EwParams,
}

/// A complete study design: targets, truth, and study size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    /// Sample size per replicate (split over the four groups).
    pub n: usize,
    /// Group-1 target cure rate.
    pub pi01: f64,
    /// Group-4 target cure rate (must be below `pi01`).
    pub pi04: f64,
    /// Per-group censoring proportions (each must exceed that group's
    /// implied cure rate).
    pub censoring: [f64; 4],
    /// True lifetime parameters.
    pub ew_true: EwParams,
    /// Number of Monte Carlo replicates.
    pub replicates: usize,
    /// Base seed; replicate `i` uses `seed + i`.
    pub seed: u64,
    #[serde(default)]
    pub initials: InitialPolicy,
    /// Fraction of records drawn from the outlier population.
    #[serde(default)]
    pub outlier_fraction: f64,
    #[serde(default)]
    pub outliers: Option<OutlierSpec>,
}

/// One generating population with everything solved.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedPopulation {
    /// Regression coefficients `(β₀, β₁)` hitting the target cure rates.
    pub beta: [f64; 2],
    /// Implied cure rates for groups 1–4.
    pub cure_rates: [f64; 4],
    /// Exponential censoring rates for groups 1–4.
    pub gammas: [f64; 4],
    /// The population parameter vector.
    pub theta: Theta,
}

/// A design with its populations solved, ready to generate data.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedDesign {
    pub design: SimDesign,
    pub population: SolvedPopulation,
    pub outliers: Option<SolvedPopulation>,
}

impl SolvedDesign {
    /// The true parameter vector estimates are judged against.
    pub fn truth(&self) -> &Theta {
        &self.population.theta
    }
}

/// Regression coefficients hitting the group-1 and group-4 cure-rate
/// targets under the logistic link:
/// `β₁ = [log(1/π₀₄ - 1) - log(1/π₀₁ - 1)]/3`, `β₀ = log(1/π₀₁ - 1) - β₁`.
pub fn solve_betas(pi01: f64, pi04: f64) -> Result<(f64, f64)> {
    if !(pi04 > 0.0 && pi01 > pi04 && pi01 < 1.0) {
        return Err(Error::Domain(format!(
            "cure-rate targets must satisfy 0 < pi04 < pi01 < 1, got ({pi01}, {pi04})"
        )));
    }
    let l1 = (1.0 / pi01 - 1.0).ln();
    let l4 = (1.0 / pi04 - 1.0).ln();
    let beta1 = (l4 - l1) / 3.0;
    Ok((l1 - beta1, beta1))
}

/// Cure rates of all four groups implied by the regression coefficients:
/// `π₀(x) = 1/(1 + e^{β₀+β₁x})` at `x = 1..4`.
pub fn implied_cure_rates(beta0: f64, beta1: f64) -> [f64; 4] {
    std::array::from_fn(|j| {
        let x = (j + 1) as f64;
        1.0 / (1.0 + (beta0 + beta1 * x).exp())
    })
}

/// The exponential censoring rate γ hitting the overall censoring
/// proportion `p` in a group with cure rate `pi0`, solving
/// `p = π₀ + (1-π₀)·∫₀^∞ S(x)·γe^{-γx} dx`.
///
/// With `u = e^{-γx}` the integral becomes `∫₀¹ S(-ln u/γ) du`, evaluated
/// by adaptive quadrature; the root is bracketed on `γ ∈ [1e-8, 1e8]` and
/// bisected to relative precision 1e-10. The censoring proportion is
/// increasing in γ (a faster censoring clock censors more), so the
/// bracket check doubles as a design-consistency check.
pub fn solve_gamma(p: f64, pi0: f64, ew: &EwParams) -> Result<f64> {
    if !(pi0 > 0.0 && p > pi0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "censoring proportion must satisfy pi0 < p < 1, got p={p}, pi0={pi0}"
        )));
    }
    // Target conditional censoring probability P[Y > C | susceptible].
    let c = (p - pi0) / (1.0 - pi0);
    let tail_prob = |gamma: f64| -> f64 {
        let integrand = |u: f64| -> f64 {
            if u <= 0.0 {
                return 0.0; // S(∞)
            }
            if u >= 1.0 {
                return 1.0; // S(0)
            }
            let x = -u.ln() / gamma;
            ew_survival(x, ew).unwrap_or(0.0)
        };
        adaptive_simpson(&integrand, 0.0, 1.0, 1e-12)
    };
    let (mut lo, mut hi) = (1e-8, 1e8);
    let (f_lo, f_hi) = (tail_prob(lo) - c, tail_prob(hi) - c);
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::NonConvergence(format!(
            "no censoring rate in [1e-8, 1e8] reaches proportion {p} at cure rate {pi0}"
        )));
    }
    while hi - lo > 1e-10 * lo.abs().max(hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if tail_prob(mid) - c <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn solve_population(
    pi01: f64,
    pi04: f64,
    censoring: &[f64; 4],
    ew: &EwParams,
) -> Result<SolvedPopulation> {
    let (beta0, beta1) = solve_betas(pi01, pi04)?;
    let cure_rates = implied_cure_rates(beta0, beta1);
    let mut gammas = [0.0; 4];
    for j in 0..GROUPS {
        gammas[j] = solve_gamma(censoring[j], cure_rates[j], ew)?;
    }
    Ok(SolvedPopulation {
        beta: [beta0, beta1],
        cure_rates,
        gammas,
        theta: Theta::new(vec![beta0, beta1], *ew)?,
    })
}

/// Validate a design and solve its populations.
pub fn solve_design(design: &SimDesign) -> Result<SolvedDesign> {
    if design.n < GROUPS {
        return Err(Error::InvalidParameter(format!(
            "sample size {} leaves a group empty",
            design.n
        )));
    }
    if design.replicates == 0 {
        return Err(Error::InvalidParameter("a study needs at least one replicate".into()));
    }
    if !(0.0..1.0).contains(&design.outlier_fraction) {
        return Err(Error::InvalidParameter(format!(
            "outlier fraction {} outside [0, 1)",
            design.outlier_fraction
        )));
    }
    let population =
        solve_population(design.pi01, design.pi04, &design.censoring, &design.ew_true)?;
    let outliers = if design.outlier_fraction > 0.0 {
        let spec = design.outliers.as_ref().ok_or_else(|| {
            Error::InvalidParameter(
                "outlier fraction is positive but no outlier population is given".into(),
            )
        })?;
        Some(solve_population(spec.pi01, spec.pi04, &spec.censoring, &spec.ew)?)
    } else {
        None
    };
    Ok(SolvedDesign { design: design.clone(), population, outliers })
}

/// Per-group record counts: `n/4` each, remainder round-robin from group 1.
fn group_sizes(n: usize) -> [usize; 4] {
    std::array::from_fn(|j| n / GROUPS + usize::from(j < n % GROUPS))
}

/// Generate one dataset, also reporting each record's latent susceptible
/// status (used by distributional oracles).
fn generate_with_latents<R: Rng + ?Sized>(
    solved: &SolvedDesign,
    rng: &mut R,
) -> (Vec<SurvivalRecord>, Vec<bool>) {
    let n = solved.design.n;
    let contaminate = solved.design.outlier_fraction;
    let mut recs = Vec::with_capacity(n);
    let mut susceptible = Vec::with_capacity(n);
    for (j, &m_j) in group_sizes(n).iter().enumerate() {
        let x = (j + 1) as f64;
        for _ in 0..m_j {
            // Fixed per-record draw order: [outlier?], M, C, [Y].
            let pop = if contaminate > 0.0 && rng.random::<f64>() < contaminate {
                solved.outliers.as_ref().expect("validated design has outlier population")
            } else {
                &solved.population
            };
            let m = rng.random::<f64>() < 1.0 - pop.cure_rates[j];
            let u: f64 = rng.random();
            let c = (-(1.0 - u).ln()).max(1e-300) / pop.gammas[j];
            let (t, delta) = if m {
                let y = ew_sample(rng, &pop.theta.ew);
                if y <= c {
                    (y, true)
                } else {
                    (c, false)
                }
            } else {
                // No risk: the lifetime is infinite, only censoring is seen.
                (c, false)
            };
            recs.push(SurvivalRecord::new(t, delta, vec![x]).expect("generated time is positive"));
            susceptible.push(m);
        }
    }
    (recs, susceptible)
}

/// Generate one dataset from a solved design: per record draw the mixture
/// membership `M ~ Bernoulli(1-π₀(x))` and a censoring time
/// `C ~ Exponential(γ_group)`; a record with no risk observes `T = C`
/// censored, a susceptible record observes `T = min(Y, C)` with an event
/// iff the lifetime came first. Records are laid out group 1 through 4.
pub fn generate_dataset<R: Rng + ?Sized>(solved: &SolvedDesign, rng: &mut R) -> Dataset {
    let (recs, _) = generate_with_latents(solved, rng);
    Dataset::new(recs).expect("generated records are valid")
}

/// Draw a starting point around `truth` under `policy`: per coordinate
/// (β₀, β₁, α, k, λ in order) the true value is scaled by `1 + U(-0.1, 0.1)`
/// (near-true) or by `1 ± U(0.50, 0.75)` with a random side (far),
/// resampling the rare draw that leaves the parameter space.
pub fn draw_initials<R: Rng + ?Sized>(
    rng: &mut R,
    truth: &Theta,
    policy: InitialPolicy,
) -> Result<Theta> {
    let factor = |rng: &mut R| -> f64 {
        match policy {
            InitialPolicy::NearTrue => 1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0),
            InitialPolicy::Far => {
                let side = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                1.0 + side * (0.50 + 0.25 * rng.random::<f64>())
            }
        }
    };
    for _ in 0..100 {
        let beta: Vec<f64> = truth.beta.iter().map(|b| b * factor(rng)).collect();
        let ew = EwParams::new(
            truth.ew.alpha() * factor(rng),
            truth.ew.k() * factor(rng),
            truth.ew.lambda() * factor(rng),
        );
        if let Ok(ew) = ew {
            return Theta::new(beta, ew);
        }
    }
    Err(Error::NonConvergence(
        "could not draw a starting point inside the parameter space".into(),
    ))
}

/// One quantity's aggregate across converged replicates.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub name: String,
    pub truth: f64,
    /// Mean of the estimates.
    pub mean: f64,
    /// Mean estimate minus truth.
    pub bias: f64,
    /// Root of the mean squared error against the truth.
    pub rmse: f64,
    /// Sample standard deviation of the estimates (NaN below 2 replicates).
    pub empirical_se: f64,
    /// Mean of the model-based (curvature / delta-method) standard errors.
    pub mean_model_se: f64,
    /// Fraction of converged replicates whose 90% interval covers truth.
    pub coverage_90: f64,
    /// Fraction of converged replicates whose 95% interval covers truth.
    pub coverage_95: f64,
}

/// Monte Carlo study summary: one row per model parameter and per group
/// cure rate, computed over converged replicates; divergence counted over
/// all replicates. No replicate converged ⇒ no rows.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub rows: Vec<MetricRow>,
    pub replicates: usize,
    pub converged: usize,
}

impl McSummary {
    pub fn divergence_pct(&self) -> f64 {
        100.0 * (self.replicates - self.converged) as f64 / self.replicates as f64
    }

    /// Find a row by quantity name (`beta0`, …, `lambda`, `pi01`…`pi04`).
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Export one row per quantity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "quantity",
            "truth",
            "mean",
            "bias",
            "rmse",
            "empirical_se",
            "mean_model_se",
            "cp90",
            "cp95",
        ])?;
        for r in &self.rows {
            w.write_record(&[
                r.name.clone(),
                r.truth.to_string(),
                r.mean.to_string(),
                r.bias.to_string(),
                r.rmse.to_string(),
                r.empirical_se.to_string(),
                r.mean_model_se.to_string(),
                r.coverage_90.to_string(),
                r.coverage_95.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Divergence comparison of the two engines on identical data and
/// identical far starting values.
#[derive(Debug, Clone, Copy)]
pub struct RobustInitials {
    pub replicates: usize,
    pub sem_divergent: usize,
    pub em_divergent: usize,
}

impl RobustInitials {
    pub fn sem_divergence_pct(&self) -> f64 {
        100.0 * self.sem_divergent as f64 / self.replicates as f64
    }

    pub fn em_divergence_pct(&self) -> f64 {
        100.0 * self.em_divergent as f64 / self.replicates as f64
    }
}

/// Tracked quantities: the five model parameters, then the four group
/// cure rates.
const QUANTITIES: [&str; 9] =
    ["beta0", "beta1", "alpha", "k", "lambda", "pi01", "pi02", "pi03", "pi04"];

#[derive(Debug, Clone)]
struct ReplicateMetrics {
    estimates: [f64; 9],
    model_ses: [f64; 9],
    hits90: [bool; 9],
    hits95: [bool; 9],
}

#[derive(Debug, Clone)]
struct EngineOutcome {
    converged: bool,
    metrics: Option<ReplicateMetrics>,
}

/// Derive the private random stream of one engine lane in one replicate.
/// Distinct from the data stream (which is keyed with the raw `seed + i`)
/// and across lanes; splitmix finishing makes any key reuse implausible.
fn lane_seed(base: u64, replicate: u64, lane: u64) -> u64 {
    let mut z = base
        .wrapping_add(replicate)
        .wrapping_add(lane.wrapping_mul(0xA076_1D64_78BD_642F))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn truths(solved: &SolvedDesign) -> [f64; 9] {
    let p = &solved.population;
    [
        p.beta[0],
        p.beta[1],
        p.theta.ew.alpha(),
        p.theta.ew.k(),
        p.theta.ew.lambda(),
        p.cure_rates[0],
        p.cure_rates[1],
        p.cure_rates[2],
        p.cure_rates[3],
    ]
}

fn metrics_from_fit(fit: &FitResult, truths: &[f64; 9]) -> ReplicateMetrics {
    debug_assert_eq!(fit.params.len(), 5);
    debug_assert_eq!(fit.cure_rates_by_group.len(), 4);
    let mut m = ReplicateMetrics {
        estimates: [0.0; 9],
        model_ses: [0.0; 9],
        hits90: [false; 9],
        hits95: [false; 9],
    };
    for (q, p) in fit.params.iter().enumerate() {
        m.estimates[q] = p.estimate;
        m.model_ses[q] = p.se;
        m.hits90[q] = p.ci_90.contains(truths[q]);
        m.hits95[q] = p.ci_95.contains(truths[q]);
    }
    for (g, cr) in fit.cure_rates_by_group.iter().enumerate() {
        let q = 5 + g;
        m.estimates[q] = cr.estimate;
        m.model_ses[q] = cr.se;
        m.hits90[q] = cr.ci_90.contains(truths[q]);
        m.hits95[q] = cr.ci_95.contains(truths[q]);
    }
    m
}

/// Run one replicate: generate data, draw the start, fit every engine lane
/// on the same data and start.
fn run_replicate(
    solved: &SolvedDesign,
    engines: &[Engine],
    index: usize,
    force_far: bool,
    need_inference: bool,
) -> Vec<EngineOutcome> {
    let design = &solved.design;
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed.wrapping_add(index as u64));
    let data = generate_dataset(solved, &mut rng);
    let policy = if force_far { InitialPolicy::Far } else { design.initials };
    let start = match draw_initials(&mut rng, solved.truth(), policy) {
        Ok(start) => start,
        Err(_) => {
            return vec![EngineOutcome { converged: false, metrics: None }; engines.len()];
        }
    };
    let truths = truths(solved);
    engines
        .iter()
        .enumerate()
        .map(|(lane, engine)| {
            let engine = match engine {
                Engine::Em(cfg) => Engine::Em(*cfg),
                Engine::Sem(cfg) => Engine::Sem(crate::sem::SemConfig {
                    seed: lane_seed(design.seed, index as u64, lane as u64),
                    ..*cfg
                }),
            };
            if need_inference {
                match fit_submodel(&data, SubModel::Ew, &start, &engine) {
                    Ok(fit) if fit.converged => EngineOutcome {
                        converged: true,
                        metrics: Some(metrics_from_fit(&fit, &truths)),
                    },
                    // Engine divergence, or a converged point whose
                    // information matrix is unusable: the replicate counts
                    // as divergent either way.
                    Ok(_) | Err(_) => EngineOutcome { converged: false, metrics: None },
                }
            } else {
                let converged = match &engine {
                    Engine::Em(cfg) => {
                        crate::em::fit_em(&data, &start, cfg).map_or(false, |f| f.converged)
                    }
                    Engine::Sem(cfg) => {
                        crate::sem::fit_sem(&data, &start, cfg).map_or(false, |f| f.converged)
                    }
                };
                EngineOutcome { converged, metrics: None }
            }
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn map_replicates<F>(k: usize, parallel: bool, f: F) -> Vec<Vec<EngineOutcome>>
where
    F: Fn(usize) -> Vec<EngineOutcome> + Sync,
{
    use rayon::prelude::*;
    if !parallel {
        return (0..k).map(f).collect();
    }
    let op = || (0..k).into_par_iter().map(&f).collect();
    match thread_pool() {
        Some(pool) => pool.install(op),
        None => op(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_replicates<F>(k: usize, _parallel: bool, f: F) -> Vec<Vec<EngineOutcome>>
where
    F: Fn(usize) -> Vec<EngineOutcome> + Sync,
{
    (0..k).map(f).collect()
}

/// Dedicated pool honoring `CURESEM_THREADS`; `None` means rayon's default.
#[cfg(feature = "parallel")]
fn thread_pool() -> Option<&'static rayon::ThreadPool> {
    use std::sync::OnceLock;
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        std::env::var("CURESEM_THREADS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .map(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("replicate thread pool")
            })
    })
    .as_ref()
}

fn summarize(solved: &SolvedDesign, outcomes: &[EngineOutcome]) -> McSummary {
    let truths = truths(solved);
    let kept: Vec<&ReplicateMetrics> =
        outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
    let m = kept.len();
    let mut rows = Vec::new();
    if m > 0 {
        for (q, name) in QUANTITIES.iter().enumerate() {
            let truth = truths[q];
            let mean = kept.iter().map(|r| r.estimates[q]).sum::<f64>() / m as f64;
            let rmse = (kept.iter().map(|r| (r.estimates[q] - truth).powi(2)).sum::<f64>()
                / m as f64)
                .sqrt();
            let empirical_se = if m > 1 {
                (kept.iter().map(|r| (r.estimates[q] - mean).powi(2)).sum::<f64>()
                    / (m - 1) as f64)
                    .sqrt()
            } else {
                f64::NAN
            };
            let mean_model_se = kept.iter().map(|r| r.model_ses[q]).sum::<f64>() / m as f64;
            let coverage_90 =
                kept.iter().filter(|r| r.hits90[q]).count() as f64 / m as f64;
            let coverage_95 =
                kept.iter().filter(|r| r.hits95[q]).count() as f64 / m as f64;
            rows.push(MetricRow {
                name: (*name).to_string(),
                truth,
                mean,
                bias: mean - truth,
                rmse,
                empirical_se,
                mean_model_se,
                coverage_90,
                coverage_95,
            });
        }
    }
    McSummary { rows, replicates: outcomes.len(), converged: m }
}

fn study(design: &SimDesign, engine: &Engine, parallel: bool) -> Result<McSummary> {
    let solved = solve_design(design)?;
    let engines = [*engine];
    let outcomes: Vec<EngineOutcome> =
        map_replicates(design.replicates, parallel, |i| {
            run_replicate(&solved, &engines, i, false, true)
        })
        .into_iter()
        .map(|mut v| v.pop().expect("one outcome per engine"))
        .collect();
    Ok(summarize(&solved, &outcomes))
}

/// Monte Carlo study of one engine: per replicate, generate a dataset,
/// draw starting values per the design's policy, fit the full model, and
/// aggregate bias, RMSE, empirical and model-based standard errors and
/// 90/95% coverage over the converged replicates. Replicates run in
/// parallel (the `CURESEM_THREADS` environment variable caps the worker
/// count) and the result is identical to [`run_mc_study_seq`].
pub fn run_mc_study(design: &SimDesign, engine: &Engine) -> Result<McSummary> {
    study(design, engine, true)
}

/// Sequential driver of the same study, byte-for-byte identical to
/// [`run_mc_study`].
pub fn run_mc_study_seq(design: &SimDesign, engine: &Engine) -> Result<McSummary> {
    study(design, engine, false)
}

/// Far-initials robustness protocol: per replicate both engines fit the
/// same dataset from the same far starting point, and only the divergence
/// counts are reported (no curvature inference is attempted).
pub fn run_robust_initials(
    design: &SimDesign,
    sem_engine: &Engine,
    em_engine: &Engine,
) -> Result<RobustInitials> {
    let solved = solve_design(design)?;
    let engines = [*sem_engine, *em_engine];
    let outcomes = map_replicates(design.replicates, true, |i| {
        run_replicate(&solved, &engines, i, true, false)
    });
    let mut report = RobustInitials {
        replicates: design.replicates,
        sem_divergent: 0,
        em_divergent: 0,
    };
    for pair in &outcomes {
        report.sem_divergent += usize::from(!pair[0].converged);
        report.em_divergent += usize::from(!pair[1].converged);
    }
    Ok(report)
}

/// Outlier robustness protocol: data are contaminated per the design's
/// outlier population, both engines fit the same replicates, and each is
/// summarized against the TRUE (uncontaminated) parameters. Returned as
/// (SEM summary, EM summary) per the engine order of the arguments.
pub fn run_outlier_study(
    design: &SimDesign,
    sem_engine: &Engine,
    em_engine: &Engine,
) -> Result<(McSummary, McSummary)> {
    let solved = solve_design(design)?;
    let engines = [*sem_engine, *em_engine];
    let outcomes = map_replicates(design.replicates, true, |i| {
        run_replicate(&solved, &engines, i, false, true)
    });
    let (sem, em): (Vec<EngineOutcome>, Vec<EngineOutcome>) = outcomes
        .into_iter()
        .map(|mut pair| {
            let em = pair.pop().expect("two outcomes");
            let sem = pair.pop().expect("two outcomes");
            (sem, em)
        })
        .unzip();
    Ok((summarize(&solved, &sem), summarize(&solved, &em)))
}

/// The shipped designs: "low" fixes `(π₀₁, π₀₄) = (0.40, 0.10)` with
/// per-group censoring `(0.50, 0.40, 0.30, 0.20)`; "high" fixes
/// `(0.50, 0.20)` with censoring `(0.65, 0.50, 0.40, 0.30)`.
pub fn standard_design(
    n: usize,
    high_cure: bool,
    ew_true: EwParams,
    replicates: usize,
    seed: u64,
) -> SimDesign {
    let (pi01, pi04, censoring) = if high_cure {
        (0.50, 0.20, [0.65, 0.50, 0.40, 0.30])
    } else {
        (0.40, 0.10, [0.50, 0.40, 0.30, 0.20])
    };
    SimDesign {
        n,
        pi01,
        pi04,
        censoring,
        ew_true,
        replicates,
        seed,
        initials: InitialPolicy::NearTrue,
        outlier_fraction: 0.0,
        outliers: None,
    }
}
