//! Exponentiated-Weibull distribution kernels.
//!
//! The family has two shape parameters `alpha`, `k` and a scale `lambda`:
//!
//! * cdf      `F(y) = [1 - exp(-(y/λ)^k)]^α`
//! * density  `f(y) = (αk/λ) (y/λ)^{k-1} exp(-(y/λ)^k) [1 - exp(-(y/λ)^k)]^{α-1}`
//!
//! It nests the exponential (`α=k=1`), Rayleigh (`α=1, k=2`), Weibull (`α=1`),
//! generalized exponential (`k=1`) and Burr Type X (`k=2`) distributions, and
//! its hazard covers constant, monotone, bathtub and unimodal shapes.
//!
//! Scope of this module:
//! - density / distribution / survival / hazard and their log forms,
//! - closed-form quantile and inverse-transform sampling (plus left-truncated
//!   sampling),
//! - raw moments via the series expansion of `E(Y^q)`,
//! - hazard-shape classification from `(α, k)`.
//!
//! All functions are pure; sampling mutates only the caller-supplied RNG.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log1m_exp, next_above};

/// Default truncation tolerance for the raw-moment series.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-12;

/// Hard cap on the number of raw-moment series terms before signalling
/// non-convergence.
pub const MOMENT_MAX_TERMS: usize = 100_000;

/// The three exponentiated-Weibull parameters. All strictly positive;
/// construction rejects anything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEwParams", into = "RawEwParams")]
pub struct EwParams {
    alpha: f64,
    k: f64,
    lambda: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawEwParams {
    alpha: f64,
    k: f64,
    lambda: f64,
}

impl TryFrom<RawEwParams> for EwParams {
    type Error = Error;

    fn try_from(raw: RawEwParams) -> Result<Self> {
        EwParams::new(raw.alpha, raw.k, raw.lambda)
    }
}

impl From<EwParams> for RawEwParams {
    fn from(p: EwParams) -> Self {
        RawEwParams { alpha: p.alpha, k: p.k, lambda: p.lambda }
    }
}

impl EwParams {
    /// Validated constructor: every parameter must be finite and `> 0`.
    pub fn new(alpha: f64, k: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("k", k), ("lambda", lambda)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(EwParams { alpha, k, lambda })
    }

    /// First shape parameter `α` (the exponentiation power).
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Second shape parameter `k` (the Weibull shape).
    #[inline]
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Scale parameter `λ` (time units).
    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Qualitative shape of the hazard function, a pure function of `(α, k)`.
///
/// The two composite tags exist for the two parameter quadrants whose shape
/// taxonomy depends on the product `kα`; with the side conditions applied
/// (`kα < 1` bathtub / `kα ≥ 1` increasing when `k > 1`, and `kα > 1` unimodal
/// / `kα ≤ 1` decreasing when `k < 1`) every point resolves to a definite
/// tag, so the composites are currently never produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardShape {
    Constant,
    Increasing,
    Decreasing,
    Bathtub,
    Unimodal,
    BathtubOrIncreasing,
    UnimodalOrDecreasing,
}

fn check_time(y: f64) -> Result<()> {
    if !y.is_finite() || y <= 0.0 {
        return Err(Error::Domain(format!("time must be finite and > 0, got {y}")));
    }
    Ok(())
}

fn check_u(u: f64) -> Result<()> {
    if !u.is_finite() || u <= 0.0 || u >= 1.0 {
        return Err(Error::Domain(format!("probability must lie strictly in (0,1), got {u}")));
    }
    Ok(())
}

/// Precomputed per-parameter constants for repeated log-density / log-survival
/// evaluation over many time points (hot loops in the likelihoods).
#[derive(Debug, Clone, Copy)]
pub(crate) struct EwKernel {
    alpha: f64,
    k: f64,
    ln_alpha: f64,
    ln_k: f64,
    ln_lambda: f64,
}

impl EwKernel {
    #[inline]
    pub(crate) fn new(p: &EwParams) -> Self {
        EwKernel {
            alpha: p.alpha,
            k: p.k,
            ln_alpha: p.alpha.ln(),
            ln_k: p.k.ln(),
            ln_lambda: p.lambda.ln(),
        }
    }

    /// `ln(y/λ)` and `(y/λ)^k`, shared by the log-density and log-survival.
    #[inline]
    fn core(&self, ln_y: f64) -> (f64, f64) {
        let z = ln_y - self.ln_lambda; // ln(y/λ)
        let w = (self.k * z).exp(); // (y/λ)^k, may under/overflow harmlessly
        (z, w)
    }

    /// `ln(1 - e^{-w})` with the exact small-`w` limit `k·ln(y/λ)` patched in
    /// when `w` underflows to zero.
    #[inline]
    fn ln_base(&self, z: f64, w: f64) -> f64 {
        if w > 0.0 {
            log1m_exp(w)
        } else {
            self.k * z
        }
    }

    /// Log-density at `y > 0` given `ln y`.
    #[inline]
    pub(crate) fn log_pdf(&self, y: f64, ln_y: f64) -> f64 {
        debug_assert!(y > 0.0 && (ln_y - y.ln()).abs() < 1e-9);
        let (z, w) = self.core(ln_y);
        self.ln_alpha + self.ln_k - self.ln_lambda + (self.k - 1.0) * z - w
            + (self.alpha - 1.0) * self.ln_base(z, w)
    }

    /// Log-survival at `y > 0` given `ln y`, with an analytic deep-tail branch
    /// so the value stays finite as long as `(y/λ)^k` does.
    #[inline]
    pub(crate) fn log_sf(&self, ln_y: f64) -> f64 {
        let (z, w) = self.core(ln_y);
        if w > 700.0 {
            // S(y) = 1 - (1 - e^{-w})^α ~ α e^{-w}; the direct route below
            // underflows to ln(0) here even though the log is representable.
            return self.ln_alpha - w;
        }
        let ln_cdf = self.alpha * self.ln_base(z, w); // ≤ 0
        log1m_exp(-ln_cdf)
    }

    /// Log-cdf at `y > 0` given `ln y`.
    #[inline]
    pub(crate) fn log_cdf(&self, ln_y: f64) -> f64 {
        let (z, w) = self.core(ln_y);
        self.alpha * self.ln_base(z, w)
    }
}

/// Density `f(y)` at `y > 0`.
pub fn ew_pdf(y: f64, p: &EwParams) -> Result<f64> {
    Ok(ew_log_pdf(y, p)?.exp())
}

/// Log-density `ln f(y)` at `y > 0`.
///
/// May be `±inf` at the boundary behaviors of the family (e.g. `y → 0` with
/// `kα < 1`), never NaN.
pub fn ew_log_pdf(y: f64, p: &EwParams) -> Result<f64> {
    check_time(y)?;
    Ok(EwKernel::new(p).log_pdf(y, y.ln()))
}

/// Distribution function `F(y)` at `y > 0`; nondecreasing with limits 0 and 1.
pub fn ew_cdf(y: f64, p: &EwParams) -> Result<f64> {
    check_time(y)?;
    Ok(EwKernel::new(p).log_cdf(y.ln()).exp())
}

/// Survival function `S(y) = 1 - F(y)` at `y > 0`.
pub fn ew_survival(y: f64, p: &EwParams) -> Result<f64> {
    Ok(ew_log_survival(y, p)?.exp())
}

/// Log-survival `ln S(y)` at `y > 0`.
pub fn ew_log_survival(y: f64, p: &EwParams) -> Result<f64> {
    check_time(y)?;
    Ok(EwKernel::new(p).log_sf(y.ln()))
}

/// Hazard rate `f(y) / S(y)` at `y > 0`.
///
/// Signals [`Error::Overflow`] when the survival has no representable
/// logarithm any more (instead of silently returning NaN or infinity).
pub fn ew_hazard(y: f64, p: &EwParams) -> Result<f64> {
    check_time(y)?;
    let kernel = EwKernel::new(p);
    let ln_y = y.ln();
    let lsf = kernel.log_sf(ln_y);
    if !lsf.is_finite() {
        return Err(Error::Overflow(format!(
            "survival underflowed at y={y}; hazard is not representable"
        )));
    }
    Ok((kernel.log_pdf(y, ln_y) - lsf).exp())
}

/// Quantile function: the unique `y` with `F(y) = u`, in closed form
/// `λ · (-ln(1 - u^{1/α}))^{1/k}` for `u ∈ (0,1)`.
pub fn ew_quantile(u: f64, p: &EwParams) -> Result<f64> {
    check_u(u)?;
    let a = u.ln() / p.alpha; // ln u^{1/α} ≤ 0
    // inner = -ln(1 - e^{a}), computed on the side of (0,1) where precision
    // survives: via expm1 when u^{1/α} is close to 1, via ln1p otherwise.
    let inner = if a > -std::f64::consts::LN_2 {
        -(-a.exp_m1()).ln()
    } else {
        -(-a.exp()).ln_1p()
    };
    Ok(p.lambda * inner.powf(1.0 / p.k))
}

/// Inverse survival function on the log scale: the unique `y > 0` with
/// `ln S(y) = ln_s`, for `ln_s < 0`.
///
/// Taking the target on the log scale keeps the inversion exact deep in the
/// tail, where `S` itself has long underflowed (mirroring the deep-tail
/// branch of [`ew_log_survival`]).
pub fn ew_isf_ln(ln_s: f64, p: &EwParams) -> Result<f64> {
    if !(ln_s < 0.0) {
        return Err(Error::Domain(format!(
            "log survival target must be negative and non-NaN, got {ln_s}"
        )));
    }
    // Solve 1 - (1 - e^{-w})^α = s for w = (y/λ)^k.
    let inner = if ln_s < -700.0 {
        // s below the floor of exp: S(y) ~ α e^{-w} ⇒ w = ln α - ln s.
        p.alpha.ln() - ln_s
    } else {
        // a = ln (1-s)^{1/α}, from whichever side of s keeps precision.
        let a = if ln_s > -std::f64::consts::LN_2 {
            (-ln_s.exp_m1()).ln() / p.alpha
        } else {
            (-ln_s.exp()).ln_1p() / p.alpha
        };
        if a > -std::f64::consts::LN_2 {
            -(-a.exp_m1()).ln()
        } else {
            -(-a.exp()).ln_1p()
        }
    };
    Ok(p.lambda * inner.powf(1.0 / p.k))
}

/// Inverse survival function: the unique `y` with `S(y) = s`, `s ∈ (0,1)`.
pub fn ew_isf(s: f64, p: &EwParams) -> Result<f64> {
    check_u(s)?;
    ew_isf_ln(s.ln(), p)
}

/// Raw moment `E(Y^q)` via the series
/// `α λ^q Γ(q/k + 1) Σ_i (-1)^i C(α-1, i) (1+i)^{-(1+q/k)}`.
///
/// For integer `α` the sum is finite (binomial coefficients vanish past
/// `i = α-1`); otherwise the series is truncated once a term's absolute
/// contribution drops below `tol`, with [`MOMENT_MAX_TERMS`] as a hard cap.
/// `q = 0` returns 1 exactly.
pub fn ew_raw_moment(q: u32, p: &EwParams, tol: f64) -> Result<f64> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be finite and > 0, got {tol}")));
    }
    if q == 0 {
        return Ok(1.0);
    }
    let ratio = f64::from(q) / p.k;
    let prefactor =
        p.alpha * p.lambda.powi(q as i32) * statrs::function::gamma::gamma(ratio + 1.0);
    if !prefactor.is_finite() {
        return Err(Error::Overflow(format!(
            "moment prefactor overflowed for q={q}, k={}, lambda={}",
            p.k, p.lambda
        )));
    }

    let integer_alpha = p.alpha.fract() == 0.0 && p.alpha < 1e9;
    let exponent = -(1.0 + ratio);
    let mut sum = 0.0;
    // signed coefficient s_i = (-1)^i C(α-1, i), built multiplicatively.
    let mut coeff = 1.0;
    let mut i: usize = 0;
    loop {
        let term = prefactor * coeff * f64::from(i as u32 + 1).powf(exponent);
        sum += term;
        if integer_alpha && i + 1 >= p.alpha as usize {
            break;
        }
        if !integer_alpha && term.abs() < tol {
            break;
        }
        i += 1;
        if i >= MOMENT_MAX_TERMS {
            return Err(Error::NonConvergence(format!(
                "moment series for q={q}, alpha={} did not reach tol={tol} within {MOMENT_MAX_TERMS} terms",
                p.alpha
            )));
        }
        coeff *= (i as f64 - p.alpha) / i as f64;
    }
    Ok(sum)
}

/// Classify the hazard shape from `(α, k)`.
///
/// Rules: the hazard is constant only in the exponential case `α = k = 1`;
/// monotone increasing when `k ≥ 1, kα ≥ 1` and decreasing when
/// `k ≤ 1, kα ≤ 1` (each excluding the exponential point); bathtub-shaped
/// when `k > 1, kα < 1`; unimodal when `k < 1, kα > 1`.
pub fn hazard_shape(p: &EwParams) -> HazardShape {
    let (a, k) = (p.alpha, p.k);
    let ka = k * a;
    if a == 1.0 && k == 1.0 {
        HazardShape::Constant
    } else if k >= 1.0 && ka >= 1.0 {
        HazardShape::Increasing
    } else if k <= 1.0 && ka <= 1.0 {
        HazardShape::Decreasing
    } else if k > 1.0 {
        // ka < 1 here
        HazardShape::Bathtub
    } else {
        // k < 1, ka > 1
        HazardShape::Unimodal
    }
}

fn positive_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Inverse-transform sample from the distribution. Deterministic given the
/// RNG state.
pub fn ew_sample<R: Rng + ?Sized>(rng: &mut R, p: &EwParams) -> f64 {
    // The uniform draw lies in (0, 1), so the closed-form quantile cannot fail.
    ew_quantile(positive_uniform(rng), p).expect("quantile on (0,1) is total")
}

/// Sample conditioned on exceeding `lower`, by inverse transform on
/// `u ∈ (F(lower), 1)`. The draw is strictly greater than `lower`.
///
/// Signals [`Error::DegenerateTruncation`] when `S(lower)` underflows, i.e.
/// the conditioning event has no representable mass.
pub fn ew_sample_truncated<R: Rng + ?Sized>(
    rng: &mut R,
    p: &EwParams,
    lower: f64,
) -> Result<f64> {
    check_time(lower)?;
    let s_lower = ew_survival(lower, p)?;
    if s_lower <= 0.0 {
        return Err(Error::DegenerateTruncation(format!(
            "survival underflowed at truncation point {lower}"
        )));
    }
    // u = 1 - S(lower)·(1 - v) maps v ∈ (0,1) onto (F(lower), 1).
    let v = positive_uniform(rng);
    let u = (1.0 - s_lower * (1.0 - v)).min(1.0 - f64::EPSILON / 2.0);
    let y = ew_quantile(u, p)?;
    // Guard the support contract against quantile rounding at tiny truncated
    // mass: the draw must exceed the truncation point strictly.
    Ok(if y > lower { y } else { next_above(lower) })
}
