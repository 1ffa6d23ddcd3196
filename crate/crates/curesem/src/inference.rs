//! Standard errors, confidence intervals, delta-method cure-rate
//! uncertainty, likelihood-ratio tests, and AIC over the nested sub-model
//! lattice of the lifetime family.
//!
//! All uncertainty statements come from the curvature of the observed-data
//! log-likelihood at the estimate: the covariance is `(-H)⁻¹` for the
//! numerically differentiated Hessian `H` on the original parameter scale.
//! Fixed (pinned) parameters report a zero standard error and a degenerate
//! interval at the point.

use std::io::Write;

use nalgebra::DMatrix;
use statrs::function::gamma::gamma_ur;

use crate::em::{fit_em, Divergence, EmConfig};
use crate::error::{Error, Result};
use crate::model::{cure_rate, observed_loglik, Dataset, Theta};
use crate::optim::{numeric_hessian, ParamPins, ParamSpace};
use crate::sem::{fit_sem, SemConfig};

/// Normal critical value for two-sided 90% intervals.
pub const Z_90: f64 = 1.645;
/// Normal critical value for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Two-sided confidence level of a Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceLevel {
    Ninety,
    NinetyFive,
}

impl ConfidenceLevel {
    /// The normal critical value the level maps to.
    pub fn z(self) -> f64 {
        match self {
            ConfidenceLevel::Ninety => Z_90,
            ConfidenceLevel::NinetyFive => Z_95,
        }
    }
}

/// A closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ci {
    pub lower: f64,
    pub upper: f64,
}

impl Ci {
    /// Whether the interval contains `v`.
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    fn point(v: f64) -> Self {
        Ci { lower: v, upper: v }
    }
}

/// The members of the nested sub-model lattice: the full model and the five
/// constrained families obtained by pinning shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubModel {
    /// Both shapes free.
    #[default]
    Ew,
    /// α = 1, k = 1.
    Exponential,
    /// α = 1, k = 2.
    Rayleigh,
    /// α = 1.
    Weibull,
    /// k = 1.
    GeneralizedExponential,
    /// k = 2.
    BurrTypeX,
}

impl SubModel {
    /// Every member, full model first.
    pub fn all() -> [SubModel; 6] {
        [
            SubModel::Ew,
            SubModel::Exponential,
            SubModel::Rayleigh,
            SubModel::Weibull,
            SubModel::GeneralizedExponential,
            SubModel::BurrTypeX,
        ]
    }

    /// The pinned-parameter constraint the member imposes.
    pub fn pins(self) -> ParamPins {
        match self {
            SubModel::Ew => ParamPins { alpha: None, k: None },
            SubModel::Exponential => ParamPins { alpha: Some(1.0), k: Some(1.0) },
            SubModel::Rayleigh => ParamPins { alpha: Some(1.0), k: Some(2.0) },
            SubModel::Weibull => ParamPins { alpha: Some(1.0), k: None },
            SubModel::GeneralizedExponential => ParamPins { alpha: None, k: Some(1.0) },
            SubModel::BurrTypeX => ParamPins { alpha: None, k: Some(2.0) },
        }
    }

    /// Number of free lifetime parameters (λ is always free).
    pub fn free_ew_count(self) -> usize {
        match self {
            SubModel::Ew => 3,
            SubModel::Exponential | SubModel::Rayleigh => 1,
            _ => 2,
        }
    }

    /// Display name.
    pub fn label(self) -> &'static str {
        match self {
            SubModel::Ew => "EW",
            SubModel::Exponential => "exponential",
            SubModel::Rayleigh => "Rayleigh",
            SubModel::Weibull => "Weibull",
            SubModel::GeneralizedExponential => "generalized-exponential",
            SubModel::BurrTypeX => "Burr-X",
        }
    }

    /// Parse a display name (case-insensitive, aliases accepted).
    pub fn parse(name: &str) -> Result<SubModel> {
        match name.to_ascii_lowercase().as_str() {
            "ew" | "exponentiated-weibull" => Ok(SubModel::Ew),
            "exponential" | "exp" => Ok(SubModel::Exponential),
            "rayleigh" => Ok(SubModel::Rayleigh),
            "weibull" => Ok(SubModel::Weibull),
            "generalized-exponential" | "ge" => Ok(SubModel::GeneralizedExponential),
            "burr-x" | "burrx" => Ok(SubModel::BurrTypeX),
            other => Err(Error::InvalidParameter(format!("unknown sub-model `{other}`"))),
        }
    }
}

/// Which estimation engine a fit runs, with its settings.
#[derive(Debug, Clone, Copy)]
pub enum Engine {
    Em(EmConfig),
    Sem(SemConfig),
}

/// One row of the parameter table.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub name: String,
    pub estimate: f64,
    /// Pinned by the sub-model constraint.
    pub fixed: bool,
    pub se: f64,
    pub ci_90: Ci,
    pub ci_95: Ci,
}

/// Delta-method summary of the cure rate at one covariate pattern.
#[derive(Debug, Clone)]
pub struct CureRateSummary {
    pub x: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub ci_90: Ci,
    pub ci_95: Ci,
}

/// A fitted model with its inference tables.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub sub_model: SubModel,
    pub theta: Theta,
    /// One row per model parameter, link coefficients first.
    pub params: Vec<ParamSummary>,
    pub loglik: f64,
    /// Number of free parameters `q`.
    pub free_params: usize,
    /// `-2·loglik + 2q`.
    pub aic: f64,
    /// Cure-rate estimates at each distinct covariate pattern, in order of
    /// first appearance in the data.
    pub cure_rates_by_group: Vec<CureRateSummary>,
    pub converged: bool,
    pub divergence: Option<Divergence>,
}

/// Likelihood-ratio test result.
#[derive(Debug, Clone, Copy)]
pub struct Lrt {
    /// `Λ = -2(l̂₀ - l̂)`, clipped below at 0.
    pub lambda: f64,
    /// Degrees of freedom (difference in free parameter counts).
    pub df: usize,
    /// Upper chi-square tail probability at `lambda`.
    pub p_value: f64,
}

/// Covariance of the free parameters: `(-H)⁻¹` for the observed-data
/// log-likelihood Hessian `H`. Errors when the information matrix is
/// singular or produces a negative variance.
pub fn covariance_from_hessian(hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let info = -hessian.clone();
    let cov = info
        .try_inverse()
        .ok_or_else(|| Error::SingularInformation("information matrix is singular".into()))?;
    for j in 0..cov.nrows() {
        let v = cov[(j, j)];
        if !v.is_finite() || v < 0.0 {
            return Err(Error::SingularInformation(format!(
                "non-positive variance {v} in coordinate {j}"
            )));
        }
    }
    Ok(cov)
}

/// Numerically differentiated Hessian of the observed-data log-likelihood at
/// `theta` over the free coordinates of `space`, on the original scale.
pub fn observed_hessian(
    data: &Dataset,
    space: &ParamSpace,
    theta: &Theta,
) -> Result<DMatrix<f64>> {
    let f = |v: &[f64]| match space.unpack_original(v) {
        Ok(th) => observed_loglik(&th, data),
        // A probe outside the parameter space surfaces as a differentiation
        // failure rather than a silently wild difference quotient.
        Err(_) => f64::NAN,
    };
    numeric_hessian(f, &space.pack_original(theta)).map_err(|e| {
        Error::SingularInformation(format!("hessian differentiation failed: {e}"))
    })
}

/// Wald intervals `θ̂_j ± z·se_j` for every free coordinate of `space`, in
/// `free_names` order. Positive parameters (the lifetime block) clip below
/// at 0.
pub fn wald_intervals(
    space: &ParamSpace,
    theta: &Theta,
    hessian: &DMatrix<f64>,
    level: ConfidenceLevel,
) -> Result<Vec<Ci>> {
    let cov = covariance_from_hessian(hessian)?;
    Ok(intervals_from_cov(space, theta, &cov, level.z()))
}

fn intervals_from_cov(space: &ParamSpace, theta: &Theta, cov: &DMatrix<f64>, z: f64) -> Vec<Ci> {
    let est = space.pack_original(theta);
    est.iter()
        .enumerate()
        .map(|(j, &e)| {
            let half = z * cov[(j, j)].sqrt();
            let mut lower = e - half;
            if j >= space.n_beta() {
                lower = lower.max(0.0);
            }
            Ci { lower, upper: e + half }
        })
        .collect()
}

/// Delta-method cure-rate estimate at covariate pattern `x`:
/// `π̂₀ = 1/(1+e^{x̃ᵀβ̂})` with gradient `∂π₀/∂β = -π₀(1-π₀)·x̃` (zero in the
/// lifetime coordinates), `se² = gᵀΣg`, and the interval clipped to `[0,1]`.
pub fn cure_rate_ci(
    space: &ParamSpace,
    theta: &Theta,
    hessian: &DMatrix<f64>,
    x: &[f64],
    level: ConfidenceLevel,
) -> Result<(f64, f64, Ci)> {
    let cov = covariance_from_hessian(hessian)?;
    cure_rate_from_cov(space, theta, &cov, x, level.z())
}

fn cure_rate_from_cov(
    space: &ParamSpace,
    theta: &Theta,
    cov: &DMatrix<f64>,
    x: &[f64],
    z: f64,
) -> Result<(f64, f64, Ci)> {
    let pi0 = cure_rate(theta, x)?;
    let scale = -pi0 * (1.0 - pi0);
    // Gradient over the free coordinates: the intercept-augmented pattern in
    // the link block, zero in the lifetime block.
    let mut g = DMatrix::zeros(space.dim(), 1);
    g[(0, 0)] = scale;
    for (j, &xj) in x.iter().enumerate() {
        g[(j + 1, 0)] = scale * xj;
    }
    let var = (g.transpose() * cov * &g)[(0, 0)];
    if !var.is_finite() || var < 0.0 {
        return Err(Error::SingularInformation(format!(
            "non-positive cure-rate variance {var}"
        )));
    }
    let se = var.sqrt();
    let ci = Ci {
        lower: (pi0 - z * se).max(0.0),
        upper: (pi0 + z * se).min(1.0),
    };
    Ok((pi0, se, ci))
}

/// Likelihood-ratio test of a nested `null` fit against the `full` fit with
/// `q_star` constrained parameters: `Λ = -2(l̂₀ - l̂)` clipped below at 0 and
/// an upper chi-square(`q_star`) tail p-value.
///
/// Errors when the null beats the full fit by more than numerical noise
/// (1e-6) — the nesting promise is then violated, which signals an upstream
/// optimization failure.
pub fn lrt(full: &FitResult, null: &FitResult, q_star: usize) -> Result<Lrt> {
    if q_star == 0 {
        return Err(Error::InvalidParameter(
            "likelihood-ratio test needs at least one constrained parameter".into(),
        ));
    }
    if null.loglik > full.loglik + 1e-6 {
        return Err(Error::NestingViolated(format!(
            "null log-likelihood {} exceeds full log-likelihood {}",
            null.loglik, full.loglik
        )));
    }
    let lambda = (2.0 * (full.loglik - null.loglik)).max(0.0);
    let p_value = if lambda > 0.0 {
        gamma_ur(q_star as f64 / 2.0, lambda / 2.0)
    } else {
        1.0
    };
    Ok(Lrt { lambda, df: q_star, p_value })
}

/// Fit one member of the sub-model lattice and assemble its inference
/// tables. The sub-model's constraint overrides any pins in the engine's
/// configuration; the start is snapped onto the constraint.
///
/// A run the engine flags as divergent still returns its estimate and
/// log-likelihood, with the uncertainty columns set to NaN (no curvature
/// statement is trustworthy there). A converged fit whose information
/// matrix cannot be inverted errors, so study-level callers can count the
/// replicate as divergent.
pub fn fit_submodel(
    data: &Dataset,
    sub_model: SubModel,
    start: &Theta,
    engine: &Engine,
) -> Result<FitResult> {
    fit_submodel_impl(data, sub_model, start, engine, false)
}

/// Fit the full model for interactive reporting: the estimate always comes
/// back when the engine itself ran, even if the information matrix at the
/// optimum cannot be inverted — the uncertainty columns are then NaN, as for
/// a divergent run. Study-level callers use [`fit_submodel`] instead, whose
/// hard error lets them count such replicates as divergent.
pub fn fit_model_reported(data: &Dataset, start: &Theta, engine: &Engine) -> Result<FitResult> {
    fit_submodel_impl(data, SubModel::Ew, start, engine, true)
}

fn fit_submodel_impl(
    data: &Dataset,
    sub_model: SubModel,
    start: &Theta,
    engine: &Engine,
    lenient: bool,
) -> Result<FitResult> {
    let pins = sub_model.pins();
    let (theta, loglik, converged, divergence) = match engine {
        Engine::Em(cfg) => {
            let fit = fit_em(data, start, &EmConfig { pins, ..*cfg })?;
            (fit.theta, fit.loglik, fit.converged, fit.divergence)
        }
        Engine::Sem(cfg) => {
            let fit = fit_sem(data, start, &SemConfig { pins, ..*cfg })?;
            (fit.theta, fit.loglik, fit.converged, fit.divergence)
        }
    };
    let space = ParamSpace::new(data.d(), pins);

    let (free_cis_90, free_cis_95, ses, cure_rates) = if converged {
        match uncertainty_tables(data, &space, &theta) {
            Err(Error::SingularInformation(_)) if lenient => nan_tables(data, &space, &theta)?,
            other => other?,
        }
    } else {
        nan_tables(data, &space, &theta)?
    };

    // Merge free-coordinate columns with pinned rows into the full table.
    let free_names = space.free_names();
    let mut params = Vec::with_capacity(data.d() + 4);
    let mut free_idx = 0;
    let mut push_free = |params: &mut Vec<ParamSummary>, name: &str, estimate: f64| {
        params.push(ParamSummary {
            name: name.to_string(),
            estimate,
            fixed: false,
            se: ses[free_idx],
            ci_90: free_cis_90[free_idx],
            ci_95: free_cis_95[free_idx],
        });
        debug_assert_eq!(free_names[free_idx], name);
        free_idx += 1;
    };
    let push_pinned = |params: &mut Vec<ParamSummary>, name: &str, value: f64| {
        params.push(ParamSummary {
            name: name.to_string(),
            estimate: value,
            fixed: true,
            se: 0.0,
            ci_90: Ci::point(value),
            ci_95: Ci::point(value),
        });
    };
    for (j, &b) in theta.beta.iter().enumerate() {
        push_free(&mut params, &format!("beta{j}"), b);
    }
    match pins.alpha {
        Some(a) => push_pinned(&mut params, "alpha", a),
        None => push_free(&mut params, "alpha", theta.ew.alpha()),
    }
    match pins.k {
        Some(k) => push_pinned(&mut params, "k", k),
        None => push_free(&mut params, "k", theta.ew.k()),
    }
    push_free(&mut params, "lambda", theta.ew.lambda());

    let free_params = space.dim();
    let aic = -2.0 * loglik + 2.0 * free_params as f64;
    Ok(FitResult {
        sub_model,
        theta,
        params,
        loglik,
        free_params,
        aic,
        cure_rates_by_group: cure_rates,
        converged,
        divergence,
    })
}

/// Fit the full (unconstrained) model.
pub fn fit_model(data: &Dataset, start: &Theta, engine: &Engine) -> Result<FitResult> {
    fit_submodel(data, SubModel::Ew, start, engine)
}

type UncertaintyTables = (Vec<Ci>, Vec<Ci>, Vec<f64>, Vec<CureRateSummary>);

/// Standard errors, intervals, and cure-rate summaries from the observed
/// information at `theta`.
fn uncertainty_tables(
    data: &Dataset,
    space: &ParamSpace,
    theta: &Theta,
) -> Result<UncertaintyTables> {
    let hessian = observed_hessian(data, space, theta)?;
    let cov = covariance_from_hessian(&hessian)?;
    let cis_90 = intervals_from_cov(space, theta, &cov, Z_90);
    let cis_95 = intervals_from_cov(space, theta, &cov, Z_95);
    let ses: Vec<f64> = (0..space.dim()).map(|j| cov[(j, j)].sqrt()).collect();
    let mut cure_rates = Vec::new();
    for row in &data.patterns().rows {
        let (estimate, se, ci_95) = cure_rate_from_cov(space, theta, &cov, row, Z_95)?;
        let (_, _, ci_90) = cure_rate_from_cov(space, theta, &cov, row, Z_90)?;
        cure_rates.push(CureRateSummary { x: row.clone(), estimate, se, ci_90, ci_95 });
    }
    Ok((cis_90, cis_95, ses, cure_rates))
}

/// Point estimates with every uncertainty column NaN — no curvature
/// statement is trustworthy at `theta`.
fn nan_tables(data: &Dataset, space: &ParamSpace, theta: &Theta) -> Result<UncertaintyTables> {
    let nan_ci = Ci { lower: f64::NAN, upper: f64::NAN };
    let dim = space.dim();
    let cure_rates = data
        .patterns()
        .rows
        .iter()
        .map(|row| {
            Ok(CureRateSummary {
                x: row.clone(),
                estimate: cure_rate(theta, row)?,
                se: f64::NAN,
                ci_90: nan_ci,
                ci_95: nan_ci,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((vec![nan_ci; dim], vec![nan_ci; dim], vec![f64::NAN; dim], cure_rates))
}

/// One sub-model's entry in a comparison: its fit and, for proper
/// sub-models with both fits converged, the likelihood-ratio test against
/// the full model.
#[derive(Debug, Clone)]
pub struct ModelRow {
    pub fit: FitResult,
    pub lrt: Option<Lrt>,
}

/// Comparison of the full model against every constrained family.
#[derive(Debug, Clone)]
pub struct ModelComparison {
    pub rows: Vec<ModelRow>,
}

impl ModelComparison {
    /// The row with the smallest AIC among converged fits.
    pub fn best_by_aic(&self) -> Option<&ModelRow> {
        self.rows
            .iter()
            .filter(|r| r.fit.converged)
            .min_by(|a, b| a.fit.aic.partial_cmp(&b.fit.aic).unwrap())
    }

    /// Export one row per model: estimates, standard errors, fit quality
    /// and the test against the full model.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_beta = self
            .rows
            .first()
            .map_or(1, |r| r.fit.theta.beta.len());
        let mut header: Vec<String> = vec!["model".into()];
        for j in 0..n_beta {
            header.push(format!("beta{j}"));
        }
        header.extend(["alpha", "k", "lambda"].map(String::from));
        for j in 0..n_beta {
            header.push(format!("se_beta{j}"));
        }
        header.extend(["se_alpha", "se_k", "se_lambda"].map(String::from));
        header.extend(
            ["loglik", "aic", "converged", "lrt_lambda", "lrt_df", "lrt_p"].map(String::from),
        );
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = vec![row.fit.sub_model.label().to_string()];
            let (estimates, ses): (Vec<f64>, Vec<f64>) =
                row.fit.params.iter().map(|p| (p.estimate, p.se)).unzip();
            rec.extend(estimates.iter().map(|v| v.to_string()));
            rec.extend(ses.iter().map(|v| v.to_string()));
            rec.push(row.fit.loglik.to_string());
            rec.push(row.fit.aic.to_string());
            rec.push(row.fit.converged.to_string());
            match &row.lrt {
                Some(t) => {
                    rec.push(t.lambda.to_string());
                    rec.push(t.df.to_string());
                    rec.push(t.p_value.to_string());
                }
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit the full model and every constrained family from the same start
/// (snapped onto each constraint) and test each sub-model against the full
/// fit. Sub-models whose own fit or the full fit diverged carry no test.
pub fn compare_models(data: &Dataset, start: &Theta, engine: &Engine) -> Result<ModelComparison> {
    let full = fit_submodel(data, SubModel::Ew, start, engine)?;
    let mut rows = vec![ModelRow { fit: full.clone(), lrt: None }];
    for sub in &SubModel::all()[1..] {
        // One sub-model failing outright must not kill the comparison: its
        // row is dropped and the rest are still reported.
        let Ok(fit) = fit_submodel(data, *sub, start, engine) else {
            continue;
        };
        let lrt = if full.converged && fit.converged {
            let q_star = full.free_params - fit.free_params;
            lrt(&full, &fit, q_star).ok()
        } else {
            None
        };
        rows.push(ModelRow { fit, lrt });
    }
    Ok(ModelComparison { rows })
}
