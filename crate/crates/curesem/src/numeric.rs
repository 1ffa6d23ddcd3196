//! Small numerical helpers shared across the crate: stable log-space forms,
//! adaptive quadrature, and floating-point stepping.

/// `log(1 - exp(-x))` for `x >= 0`, stable over the whole range.
///
/// Returns `-inf` at `x == 0`. Uses `ln1p(-exp(-x))` when `exp(-x)` is small
/// and `ln(-expm1(-x))` otherwise, which keeps full precision near both ends.
#[inline]
pub(crate) fn log1m_exp(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// `log(1 + exp(x))`, stable for large `|x|`.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + exp(-x))`, stable for large `|x|`.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(exp(a) + exp(b))` without overflow; tolerates `-inf` arguments.
#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi; // also covers both -inf
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Smallest representable `f64` strictly greater than `x` (finite,
/// non-negative `x` only — sufficient for stepping past a censoring time).
#[inline]
pub(crate) fn next_above(x: f64) -> f64 {
    debug_assert!(x.is_finite() && x >= 0.0);
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The integrand must be finite on the interval. Recursion is capped; if the
/// cap is hit the current best estimate is returned, which keeps the routine
/// total (callers needing certainty validate against independent checks).
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson_rule(a, b, fa, fm, fb);
    simpson_refine(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[inline]
fn simpson_rule(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson_rule(a, m, fa, flm, fm);
    let right = simpson_rule(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        let half = 0.5 * tol;
        simpson_refine(f, a, m, fa, flm, fm, left, half, depth - 1)
            + simpson_refine(f, m, b, fm, frm, fb, right, half, depth - 1)
    }
}
