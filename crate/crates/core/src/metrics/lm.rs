//! Bounded, weighted Levenberg–Marquardt least squares.
//!
//! Minimizes `Σ w_i (f_i(p) - y_i)²`. Positive parameters are optimized in
//! log space; every parameter is clamped to its bounds after each step. The
//! reported covariance is `(JᵀWJ)⁻¹` at the optimum with no rescaling by the
//! reduced chi-square, which is correct when the weights are inverse
//! variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A model evaluated at a fixed set of data points.
pub trait Model {
    fn n_params(&self) -> usize;
    fn n_points(&self) -> usize;
    /// Model values at every data point.
    fn values(&self, p: &[f64]) -> Vec<f64>;
    /// `∂f_i/∂p_k`, rows are points.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Linear,
    /// Optimized as `ln p`; requires a positive lower bound.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: &'static str,
    pub init: f64,
    pub lower: f64,
    pub upper: f64,
    pub transform: Transform,
}

impl Param {
    pub fn log(name: &'static str, init: f64, lower: f64, upper: f64) -> Self {
        Self { name, init, lower, upper, transform: Transform::Log }
    }

    pub fn linear(name: &'static str, init: f64, lower: f64, upper: f64) -> Self {
        Self { name, init, lower, upper, transform: Transform::Linear }
    }

    fn to_internal(&self, p: f64) -> f64 {
        let p = p.clamp(self.lower, self.upper);
        match self.transform {
            Transform::Linear => p,
            Transform::Log => p.ln(),
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        let p = match self.transform {
            Transform::Linear => u,
            Transform::Log => u.exp(),
        };
        p.clamp(self.lower, self.upper)
    }

    /// `dp/du` at external value `p`.
    fn scale(&self, p: f64) -> f64 {
        match self.transform {
            Transform::Linear => 1.0,
            Transform::Log => p,
        }
    }

    fn at_bound(&self, p: f64) -> bool {
        let near = |b: f64| b.is_finite() && (p - b).abs() <= 1e-9 * b.abs();
        p == self.lower || p == self.upper || near(self.lower) || near(self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Options {
    pub max_iterations: usize,
    /// Stop when every internal step component is below this.
    pub x_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub f_tol: f64,
    pub lambda_init: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iterations: 500, x_tol: 1e-12, f_tol: 1e-15, lambda_init: 1e-3 }
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error(
        "fit did not converge after {iterations} iterations (chi2 {chi2:.6e}, parameters {params:?})"
    )]
    NoConvergence { iterations: usize, chi2: f64, params: Vec<f64> },
    #[error("fit input: {0}")]
    BadInput(String),
    #[error("fit numerics: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// One-sigma errors; 0 for parameters pinned at a bound, infinite for
    /// parameters the data do not constrain.
    pub sigmas: Vec<f64>,
    pub pinned: Vec<bool>,
    pub unconstrained: Vec<bool>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// Weighted residuals `√w (y - f)`.
    pub residuals: Vec<f64>,
}

fn cost(model: &dyn Model, p: &[f64], y: &[f64], sw: &[f64]) -> (f64, DVector<f64>) {
    let f = model.values(p);
    let r = DVector::from_iterator(y.len(), f.iter().zip(y).zip(sw).map(|((f, y), s)| s * (f - y)));
    (r.norm_squared(), r)
}

/// Fits `model` to `y` with weights `w`.
pub fn fit(
    model: &dyn Model,
    y: &[f64],
    w: &[f64],
    params: &[Param],
    opts: &Options,
) -> Result<FitOutcome, FitError> {
    let n = model.n_points();
    let k = model.n_params();
    if y.len() != n || w.len() != n || params.len() != k {
        return Err(FitError::BadInput(format!(
            "{} points, {} values, {} weights, {} of {} parameters",
            n,
            y.len(),
            w.len(),
            params.len(),
            k
        )));
    }
    if n < k {
        return Err(FitError::BadInput(format!("{n} points cannot constrain {k} parameters")));
    }
    if y.iter().chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v < 0.0) {
        return Err(FitError::BadInput("non-finite data or negative weight".into()));
    }
    for p in params {
        let ok = p.lower <= p.upper
            && p.init.is_finite()
            && (p.transform == Transform::Linear || p.lower > 0.0);
        if !ok {
            return Err(FitError::BadInput(format!("parameter `{}` has invalid bounds", p.name)));
        }
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    let mut u: Vec<f64> = params.iter().map(|p| p.to_internal(p.init)).collect();
    let external = |u: &[f64]| -> Vec<f64> {
        params.iter().zip(u).map(|(p, &u)| p.to_external(u)).collect()
    };
    let mut p = external(&u);
    let (mut chi2, mut r) = cost(model, &p, y, &sw);
    if !chi2.is_finite() {
        return Err(FitError::Numerical(format!("model not finite at initial parameters {p:?}")));
    }
    let mut lambda = opts.lambda_init;
    let mut converged = chi2 == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jac = internal_jacobian(model, params, &p, &sw);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let max_diag = (0..k).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let step = match a.cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial_u: Vec<f64> = u.iter().zip(step.iter()).map(|(u, s)| u + s).collect();
            let trial_p = external(&trial_u);
            // Re-derive the internal point so clamped parameters stay on the bound.
            let trial_u: Vec<f64> =
                params.iter().zip(&trial_p).map(|(p, &v)| p.to_internal(v)).collect();
            let (trial_chi2, trial_r) = cost(model, &trial_p, y, &sw);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let moved = trial_u
                    .iter()
                    .zip(&u)
                    .all(|(a, b)| (a - b).abs() <= opts.x_tol * (b.abs() + opts.x_tol));
                let decrease = chi2 - trial_chi2;
                converged = moved || decrease <= opts.f_tol * chi2 || trial_chi2 == 0.0;
                u = trial_u;
                p = trial_p;
                chi2 = trial_chi2;
                r = trial_r;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction at any damping: a minimum to machine precision.
            converged = true;
        }
    }
    if !converged {
        return Err(FitError::NoConvergence { iterations, chi2, params: p });
    }

    let pinned: Vec<bool> = params.iter().zip(&p).map(|(q, &v)| q.at_bound(v)).collect();
    let (sigmas, unconstrained) = uncertainties(model, &p, &sw, &pinned);
    let residuals = r.iter().map(|v| -v).collect();
    Ok(FitOutcome {
        params: p,
        sigmas,
        pinned,
        unconstrained,
        chi2,
        dof: n.saturating_sub(k),
        iterations,
        residuals,
    })
}

fn internal_jacobian(model: &dyn Model, params: &[Param], p: &[f64], sw: &[f64]) -> DMatrix<f64> {
    let mut j = model.jacobian(p);
    for (row, s) in sw.iter().enumerate() {
        for (col, q) in params.iter().enumerate() {
            j[(row, col)] *= s * q.scale(p[col]);
        }
    }
    j
}

/// Standard errors from `(JᵀWJ)⁻¹` over the free (non-pinned) parameters.
fn uncertainties(model: &dyn Model, p: &[f64], sw: &[f64], pinned: &[bool]) -> (Vec<f64>, Vec<bool>) {
    let k = p.len();
    let free: Vec<usize> = (0..k).filter(|&i| !pinned[i]).collect();
    let mut sigmas = vec![0.0; k];
    let mut unconstrained = vec![false; k];
    if free.is_empty() {
        return (sigmas, unconstrained);
    }
    let jac = model.jacobian(p);
    let mut jw = DMatrix::zeros(sw.len(), free.len());
    for (row, s) in sw.iter().enumerate() {
        for (c, &i) in free.iter().enumerate() {
            jw[(row, c)] = s * jac[(row, i)];
        }
    }
    let info = jw.transpose() * &jw;
    // Scale to unit diagonal so the rank test is insensitive to parameter units.
    let d: Vec<f64> = (0..free.len()).map(|i| info[(i, i)].sqrt()).collect();
    let mut scaled = info;
    for i in 0..free.len() {
        for j in 0..free.len() {
            scaled[(i, j)] /= d[i] * d[j];
        }
    }
    for (c, &i) in free.iter().enumerate() {
        if !(d[c] > 0.0) || !d[c].is_finite() {
            sigmas[i] = f64::INFINITY;
            unconstrained[i] = true;
        }
    }
    let ok: Vec<usize> = (0..free.len()).filter(|&c| d[c] > 0.0 && d[c].is_finite()).collect();
    if ok.is_empty() {
        return (sigmas, unconstrained);
    }
    let sub = DMatrix::from_fn(ok.len(), ok.len(), |a, b| scaled[(ok[a], ok[b])]);
    let sub_svd = sub.svd(true, true);
    let cutoff = sub_svd.singular_values.max() * 1e-12;
    let u = sub_svd.u.as_ref().unwrap();
    let vt = sub_svd.v_t.as_ref().unwrap();
    for (a, &c) in ok.iter().enumerate() {
        let mut var = 0.0;
        let mut degenerate = false;
        for (s_idx, &s) in sub_svd.singular_values.iter().enumerate() {
            let weight = u[(a, s_idx)] * vt[(s_idx, a)];
            if s <= cutoff {
                if weight.abs() > 1e-6 {
                    degenerate = true;
                }
                continue;
            }
            var += weight / s;
        }
        let i = free[c];
        if degenerate || !(var >= 0.0) {
            sigmas[i] = f64::INFINITY;
            unconstrained[i] = true;
        } else {
            sigmas[i] = var.sqrt() / d[c];
        }
    }
    (sigmas, unconstrained)
}

/// Central finite-difference Jacobian, for checking analytic ones.
pub fn numeric_jacobian(model: &dyn Model, p: &[f64], rel_step: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(model.n_points(), p.len());
    for k in 0..p.len() {
        let h = rel_step * p[k].abs().max(1.0);
        let mut hi = p.to_vec();
        let mut lo = p.to_vec();
        hi[k] += h;
        lo[k] -= h;
        let (fh, fl) = (model.values(&hi), model.values(&lo));
        for i in 0..fh.len() {
            j[(i, k)] = (fh[i] - fl[i]) / (2.0 * h);
        }
    }
    j
}
