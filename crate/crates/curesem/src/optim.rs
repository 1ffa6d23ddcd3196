//! Derivative-free maximization and numeric derivatives.
//!
//! Likelihood surfaces here live over `θ = (β, α, k, λ)` with positivity
//! constraints on the lifetime parameters. Optimization therefore runs over
//! the unconstrained vector `z = (β, log α, log k, log λ)` (pinned
//! coordinates dropped — see [`ParamPins`]), while the Hessian used for
//! standard errors is taken on the original scale, where uncertainty is
//! reported.
//!
//! The maximizer is a classic Nelder–Mead simplex with coefficients
//! (reflection, expansion, contraction, shrink) = (1, 2, 0.5, 0.5). It never
//! throws from inside the search: infeasible points are expected to enter as
//! ordered sentinel values (see [`crate::model::INFEASIBLE_LOGLIK`]), and
//! non-convergence is reported, not raised.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ew::EwParams;
use crate::model::Theta;

/// Fixed values for the shape parameters of nested sub-families; `None`
/// leaves a coordinate free. The scale `λ` is always free.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamPins {
    pub alpha: Option<f64>,
    pub k: Option<f64>,
}

/// Packing/unpacking between [`Theta`] and the free-coordinate vectors used
/// by the optimizer (log scale) and the Hessian (original scale).
///
/// Coordinate order: `β₀..β_d`, then `α` if free, then `k` if free, then `λ`.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpace {
    n_beta: usize,
    pins: ParamPins,
}

impl ParamSpace {
    /// Space for covariate dimension `d` (so `d+1` link coefficients).
    pub fn new(d: usize, pins: ParamPins) -> Self {
        ParamSpace { n_beta: d + 1, pins }
    }

    pub fn pins(&self) -> ParamPins {
        self.pins
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.n_beta
            + usize::from(self.pins.alpha.is_none())
            + usize::from(self.pins.k.is_none())
            + 1
    }

    /// Number of link coefficients (`d+1`).
    pub fn n_beta(&self) -> usize {
        self.n_beta
    }

    /// Names of the free coordinates, in packing order.
    pub fn free_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_beta).map(|j| format!("beta{j}")).collect();
        if self.pins.alpha.is_none() {
            names.push("alpha".into());
        }
        if self.pins.k.is_none() {
            names.push("k".into());
        }
        names.push("lambda".into());
        names
    }

    /// Snap the pinned coordinates of `theta` to their pinned values.
    pub fn conform(&self, theta: &Theta) -> Result<Theta> {
        let ew = EwParams::new(
            self.pins.alpha.unwrap_or(theta.ew.alpha()),
            self.pins.k.unwrap_or(theta.ew.k()),
            theta.ew.lambda(),
        )?;
        Theta::new(theta.beta.clone(), ew)
    }

    fn split_free(&self, v: &[f64]) -> (f64, f64, f64) {
        debug_assert_eq!(v.len(), self.dim());
        let mut it = v[self.n_beta..].iter().copied();
        let alpha = self.pins.alpha.map_or_else(|| it.next().unwrap(), |_| f64::NAN);
        let k = self.pins.k.map_or_else(|| it.next().unwrap(), |_| f64::NAN);
        let lambda = it.next().unwrap();
        (alpha, k, lambda)
    }

    /// Free coordinates on the log scale: positive parameters enter as logs.
    pub fn pack_log(&self, theta: &Theta) -> Vec<f64> {
        debug_assert_eq!(theta.beta.len(), self.n_beta);
        let mut z = theta.beta.clone();
        if self.pins.alpha.is_none() {
            z.push(theta.ew.alpha().ln());
        }
        if self.pins.k.is_none() {
            z.push(theta.ew.k().ln());
        }
        z.push(theta.ew.lambda().ln());
        z
    }

    /// Inverse of [`Self::pack_log`]; pinned coordinates are reinstated.
    /// Errors when the exponentiated coordinates are not valid lifetime
    /// parameters (e.g. overflow to infinity).
    pub fn unpack_log(&self, z: &[f64]) -> Result<Theta> {
        let (la, lk, ll) = self.split_free(z);
        let ew = EwParams::new(
            self.pins.alpha.unwrap_or_else(|| la.exp()),
            self.pins.k.unwrap_or_else(|| lk.exp()),
            ll.exp(),
        )?;
        Theta::new(z[..self.n_beta].to_vec(), ew)
    }

    /// Free coordinates on the original scale (used for the Hessian).
    pub fn pack_original(&self, theta: &Theta) -> Vec<f64> {
        debug_assert_eq!(theta.beta.len(), self.n_beta);
        let mut v = theta.beta.clone();
        if self.pins.alpha.is_none() {
            v.push(theta.ew.alpha());
        }
        if self.pins.k.is_none() {
            v.push(theta.ew.k());
        }
        v.push(theta.ew.lambda());
        v
    }

    /// Inverse of [`Self::pack_original`].
    pub fn unpack_original(&self, v: &[f64]) -> Result<Theta> {
        let (a, k, l) = self.split_free(v);
        let ew = EwParams::new(
            self.pins.alpha.unwrap_or(a),
            self.pins.k.unwrap_or(k),
            l,
        )?;
        Theta::new(v[..self.n_beta].to_vec(), ew)
    }
}

/// Nelder–Mead stopping configuration.
#[derive(Debug, Clone, Copy)]
pub struct NmConfig {
    /// Terminate when the simplex's objective spread (max − min) drops below
    /// this.
    pub ftol: f64,
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
}

impl Default for NmConfig {
    fn default() -> Self {
        NmConfig { ftol: 1e-8, max_evals: 5000 }
    }
}

/// Outcome of one maximization run.
#[derive(Debug, Clone)]
pub struct OptimReport {
    /// Best free-coordinate vector found.
    pub argmax: Vec<f64>,
    /// Objective value at `argmax`; never below the starting value.
    pub value: f64,
    /// Nelder–Mead iterations performed.
    pub iterations: usize,
    /// Objective evaluations consumed.
    pub evals: usize,
    /// Whether the spread criterion was met before the evaluation cap.
    pub converged: bool,
}

/// Relative size of the initial-simplex perturbation per coordinate.
const SIMPLEX_REL_STEP: f64 = 0.05;
/// Absolute perturbation used when a starting coordinate is exactly zero.
const SIMPLEX_ABS_STEP: f64 = 0.05;

/// Maximize `f` by Nelder–Mead from `start`.
///
/// The initial simplex is the start vertex plus one vertex per coordinate,
/// perturbed by 5% of the coordinate (absolute 0.05 at zero). Coefficients
/// are (1, 2, 0.5, 0.5); termination on objective spread < `cfg.ftol` or the
/// evaluation cap. The report's value never falls below `f(start)`; failure
/// to meet the spread criterion is flagged, never raised.
pub fn maximize<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], cfg: &NmConfig) -> OptimReport {
    let n = start.len();
    assert!(n > 0, "cannot optimize over zero coordinates");
    let evals = std::cell::Cell::new(0usize);
    let eval = |z: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(z);
        // NaN would poison the vertex ordering; treat as worst possible.
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    // Vertices and their objective values, kept sorted best-first.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f_start = eval(start);
    simplex.push((start.to_vec(), f_start));
    for j in 0..n {
        let mut v = start.to_vec();
        v[j] += if v[j] == 0.0 { SIMPLEX_ABS_STEP } else { SIMPLEX_REL_STEP * v[j] };
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let sort = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    };
    sort(&mut simplex);

    let mut iterations = 0usize;
    let mut converged = false;
    while evals.get() < cfg.max_evals {
        let spread = simplex[0].1 - simplex[n].1;
        if spread.abs() < cfg.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi;
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let worst = simplex[n].clone();
        let point_at = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + coef * (c - w)).collect()
        };

        // Reflection (coefficient 1).
        let xr = point_at(1.0);
        let fr = eval(&xr);
        if fr > simplex[0].1 {
            // Expansion (coefficient 2).
            let xe = point_at(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            // Contraction (coefficient 0.5), outside or inside of the worst.
            let (xc, fc) = if fr > worst.1 {
                let xc = point_at(0.5);
                let fc = eval(&xc);
                if fc >= fr { (xc, fc) } else { (Vec::new(), f64::NEG_INFINITY) }
            } else {
                let xc = point_at(-0.5);
                let fc = eval(&xc);
                if fc > worst.1 { (xc, fc) } else { (Vec::new(), f64::NEG_INFINITY) }
            };
            if xc.is_empty() {
                // Shrink all vertices toward the best (coefficient 0.5).
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (vi, bi) in v.iter_mut().zip(&best) {
                        *vi = bi + 0.5 * (*vi - bi);
                    }
                    *fv = eval(v);
                    if evals.get() >= cfg.max_evals {
                        break;
                    }
                }
            } else {
                simplex[n] = (xc, fc);
            }
        }
        sort(&mut simplex);
    }

    // The best vertex is monotone through reflect/expand/contract and is the
    // fixed point of shrink, so it cannot be worse than the start; keep the
    // explicit guard anyway for the contract.
    let (argmax, value) = simplex.swap_remove(0);
    if value >= f_start {
        OptimReport { argmax, value, iterations, evals: evals.get(), converged }
    } else {
        OptimReport {
            argmax: start.to_vec(),
            value: f_start,
            iterations,
            evals: evals.get(),
            converged,
        }
    }
}

/// Central-difference gradient with per-coordinate step
/// `h_j = max(1e-5, 1e-5·|z_j|)`.
///
/// Errors when the objective is non-finite at a probe point, naming the
/// offending coordinate.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64]) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(z.len());
    let mut probe = z.to_vec();
    for j in 0..z.len() {
        let h = 1e-5f64.max(1e-5 * z[j].abs());
        probe[j] = z[j] + h;
        let up = f(&probe);
        probe[j] = z[j] - h;
        let down = f(&probe);
        probe[j] = z[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Domain(format!(
                "objective non-finite while probing coordinate {j} (f+={up}, f-={down})"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Central second-difference Hessian on the original parameter scale, with
/// step `h_j = 1e-4·max(1, |x_j|)`, symmetrized as `(H +eᵀH)/2`.
///
/// Errors when the objective is non-finite at any probe point. Downstream,
/// `(-H)⁻¹` is the estimator covariance; singularity is surfaced there.
pub fn numeric_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut probe = x.to_vec();
    let eval = |p: &[f64], what: &str| -> Result<f64> {
        let v = f(p);
        if !v.is_finite() {
            return Err(Error::Domain(format!("objective non-finite at Hessian probe ({what})")));
        }
        Ok(v)
    };
    let f0 = eval(&probe, "center")?;
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        probe[i] = x[i] + h[i];
        let up = eval(&probe, &format!("coordinate {i} +h"))?;
        probe[i] = x[i] - h[i];
        let down = eval(&probe, &format!("coordinate {i} -h"))?;
        probe[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = eval(&probe, &format!("coordinates {i},{j}"));
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{observed_loglik, Dataset, SurvivalRecord};

    fn space_full(d: usize) -> ParamSpace {
        ParamSpace::new(d, ParamPins::default())
    }

    fn theta(beta: &[f64], alpha: f64, k: f64, lambda: f64) -> Theta {
        Theta::new(beta.to_vec(), EwParams::new(alpha, k, lambda).unwrap()).unwrap()
    }

    // ---------- parameter space ----------

    #[test]
    fn pack_round_trips_are_identity() {
        let th = theta(&[-0.4, 0.55], 2.3, 0.8, 1.7);
        for pins in [
            ParamPins::default(),
            ParamPins { alpha: Some(1.0), k: None },
            ParamPins { alpha: None, k: Some(2.0) },
            ParamPins { alpha: Some(1.0), k: Some(1.0) },
        ] {
            let sp = ParamSpace::new(1, pins);
            let th_c = sp.conform(&th).unwrap();
            let back = sp.unpack_log(&sp.pack_log(&th_c)).unwrap();
            assert_eq!(back.beta, th_c.beta);
            assert!((back.ew.alpha() - th_c.ew.alpha()).abs() < 1e-14);
            assert!((back.ew.k() - th_c.ew.k()).abs() < 1e-14);
            assert!((back.ew.lambda() - th_c.ew.lambda()).abs() < 1e-14);
            let back = sp.unpack_original(&sp.pack_original(&th_c)).unwrap();
            assert_eq!(back, th_c);
        }
    }

    #[test]
    fn space_dimensions_and_names() {
        let sp = ParamSpace::new(1, ParamPins::default());
        assert_eq!(sp.dim(), 5);
        assert_eq!(sp.free_names(), ["beta0", "beta1", "alpha", "k", "lambda"]);
        let sp = ParamSpace::new(1, ParamPins { alpha: Some(1.0), k: Some(2.0) });
        assert_eq!(sp.dim(), 3);
        assert_eq!(sp.free_names(), ["beta0", "beta1", "lambda"]);
        let sp = ParamSpace::new(2, ParamPins { alpha: Some(1.0), k: None });
        assert_eq!(sp.dim(), 5);
        assert_eq!(sp.free_names(), ["beta0", "beta1", "beta2", "k", "lambda"]);
    }

    #[test]
    fn unpack_rejects_overflow() {
        let sp = space_full(0);
        assert!(sp.unpack_log(&[0.0, 800.0, 0.0, 0.0]).is_err());
        assert!(sp.unpack_original(&[0.0, -1.0, 1.0, 1.0]).is_err());
    }

    // ---------- maximize ----------

    #[test]
    fn quadratic_bowl_recovers_center() {
        let z0 = [1.5, -2.0, 0.25, 3.0];
        let f = |z: &[f64]| -> f64 {
            -z.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let report = maximize(f, &[0.0, 0.0, 0.0, 0.0], &NmConfig::default());
        assert!(report.converged);
        for (got, want) in report.argmax.iter().zip(&z0) {
            assert!((got - want).abs() < 1e-4, "got {got} want {want}");
        }
    }

    #[test]
    fn never_below_start_on_likelihood_surface() {
        let recs = vec![
            SurvivalRecord::new(0.4, true, vec![1.0]).unwrap(),
            SurvivalRecord::new(1.1, false, vec![2.0]).unwrap(),
            SurvivalRecord::new(0.9, true, vec![3.0]).unwrap(),
            SurvivalRecord::new(2.3, false, vec![4.0]).unwrap(),
            SurvivalRecord::new(0.2, true, vec![2.0]).unwrap(),
            SurvivalRecord::new(1.7, false, vec![1.0]).unwrap(),
        ];
        let data = Dataset::new(recs).unwrap();
        let sp = space_full(1);
        let f = |z: &[f64]| match sp.unpack_log(z) {
            Ok(th) => observed_loglik(&th, &data),
            Err(_) => crate::model::INFEASIBLE_LOGLIK,
        };
        let start = sp.pack_log(&theta(&[0.0, 0.0], 1.0, 1.0, 1.0));
        let f_start = f(&start);
        let report = maximize(f, &start, &NmConfig::default());
        assert!(report.value >= f_start);
        assert!(report.value.is_finite());
    }

    #[test]
    fn rosenbrock_5d_with_restarts() {
        // Banana-valley surface; restarting from the previous optimum with a
        // fresh simplex is the standard way to polish Nelder–Mead output.
        let f = |z: &[f64]| -> f64 {
            -z.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum::<f64>()
        };
        // Start inside the global basin: for dimension ≥ 4 the function also
        // has a local optimum near x₁ ≈ -0.96 that would trap any local
        // method started from the classic (-1.2, 1, …) point.
        let mut z = vec![0.5, 0.5, 0.5, 0.5, 0.5];
        let cfg = NmConfig::default();
        for _ in 0..40 {
            let report = maximize(f, &z, &cfg);
            z = report.argmax;
            if report.converged && -report.value < 1e-12 {
                break;
            }
        }
        for zi in &z {
            assert!((zi - 1.0).abs() < 1e-3, "z={z:?}");
        }
    }

    #[test]
    fn nan_objective_is_treated_as_worst() {
        // The objective is NaN past 1.5; the search must turn back toward
        // the optimum instead of accepting or propagating NaN vertices.
        let f = |z: &[f64]| {
            if z[0] > 1.5 {
                f64::NAN
            } else {
                -(z[0] - 1.0) * (z[0] - 1.0)
            }
        };
        let report = maximize(f, &[1.4], &NmConfig::default());
        assert!(report.value.is_finite());
        assert!(report.value >= f(&[1.4]));
        assert!((report.argmax[0] - 1.0).abs() < 0.05, "argmax={}", report.argmax[0]);
    }

    // ---------- gradient ----------

    #[test]
    fn gradient_of_linear_function() {
        let c = [2.0, -3.0, 0.5];
        let f = |z: &[f64]| z.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
        let g = numeric_gradient(f, &[0.3, -1.0, 4.0]).unwrap();
        for (gi, ci) in g.iter().zip(&c) {
            assert!((gi - ci).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_of_sum_of_squares() {
        let f = |z: &[f64]| z.iter().map(|a| a * a).sum::<f64>();
        let g = numeric_gradient(f, &[1.0, 1.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_richardson_oracle_on_loglik() {
        let recs = vec![
            SurvivalRecord::new(0.6, true, vec![1.0]).unwrap(),
            SurvivalRecord::new(1.4, false, vec![2.0]).unwrap(),
            SurvivalRecord::new(0.8, true, vec![4.0]).unwrap(),
            SurvivalRecord::new(2.0, false, vec![3.0]).unwrap(),
        ];
        let data = Dataset::new(recs).unwrap();
        let sp = space_full(1);
        let f = |z: &[f64]| observed_loglik(&sp.unpack_log(z).unwrap(), &data);
        let z = sp.pack_log(&theta(&[-0.3, 0.4], 1.8, 1.1, 1.4));
        let grad = numeric_gradient(f, &z).unwrap();
        // Richardson extrapolation of central differences at h and h/2.
        let mut probe = z.clone();
        for j in 0..z.len() {
            let h = 1e-4;
            let mut central = |step: f64| {
                probe[j] = z[j] + step;
                let up = f(&probe);
                probe[j] = z[j] - step;
                let down = f(&probe);
                probe[j] = z[j];
                (up - down) / (2.0 * step)
            };
            let d_h = central(h);
            let d_h2 = central(h / 2.0);
            let oracle = (4.0 * d_h2 - d_h) / 3.0;
            assert!(
                (grad[j] - oracle).abs() <= 1e-4 * oracle.abs().max(1.0),
                "j={j} grad={} oracle={oracle}",
                grad[j]
            );
        }
    }

    #[test]
    fn gradient_error_names_coordinate() {
        let f = |z: &[f64]| if z[1] > 1.0 { f64::INFINITY } else { z[0] };
        let err = numeric_gradient(f, &[0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    // ---------- hessian ----------

    #[test]
    fn hessian_of_quadratic_form() {
        // f = -½ xᵀAx with symmetric A ⇒ H = -A.
        let a = [[3.0, 0.7, -0.2], [0.7, 2.0, 0.4], [-0.2, 0.4, 1.5]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * a[i][j] * x[j];
                }
            }
            -0.5 * s
        };
        let h = numeric_hessian(f, &[0.3, -0.7, 1.2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[(i, j)] + a[i][j]).abs() < 1e-4, "i={i} j={j} h={}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let f = |x: &[f64]| -(x[0] * x[0] + 0.3 * x[0] * x[1].powi(3) + x[1] * x[1]);
        let h = numeric_hessian(f, &[0.4, 0.9]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn hessian_error_on_nonfinite_probe() {
        let f = |x: &[f64]| if x[0] > 1.0 { f64::NAN } else { -x[0] * x[0] };
        assert!(numeric_hessian(f, &[1.0]).is_err());
    }
}
