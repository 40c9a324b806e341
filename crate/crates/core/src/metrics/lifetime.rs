//! Lifetime fit of a decay histogram: single exponential convolved with the
//! instrument response, plus a flat background.
//!
//! Expected counts in bin `[l, r)` are `amp·(F(r − t0) − F(l − t0)) + bg`,
//! where `F` is the CDF of the exponentially modified Gaussian (or, with a
//! measured IRF, of the exponential convolved with the IRF histogram).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{self, FitError, Model, Options, Param};
use crate::model::{Histogram, MetricResult};
use crate::special::{erfc, erfcx, norm_cdf, norm_pdf};

/// CDF of an Exp(`lambda`) delay plus N(0, `sigma`²) jitter, with its
/// derivatives `(F, ∂F/∂u, ∂F/∂λ)`.
pub fn emg_cdf(u: f64, lambda: f64, sigma: f64) -> (f64, f64, f64) {
    if sigma == 0.0 {
        if u < 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let e = (-lambda * u).exp();
        return (-(-lambda * u).exp_m1(), lambda * e, u * e);
    }
    let s = u / sigma;
    let z = (lambda * sigma - s) * std::f64::consts::FRAC_1_SQRT_2;
    // E = exp(−λu + λ²σ²/2)·Φ(u/σ − λσ), evaluated without overflow.
    let e = if z >= 0.0 {
        0.5 * (-0.5 * s * s).exp() * erfcx(z)
    } else {
        0.5 * (-lambda * u + 0.5 * (lambda * sigma).powi(2)).exp() * erfc(z)
    };
    let cdf = norm_cdf(s) - e;
    let d_lambda = (u - lambda * sigma * sigma) * e + sigma * norm_pdf(s);
    (cdf, lambda * e, d_lambda)
}

#[derive(Debug, Clone)]
pub enum Irf {
    Gaussian { sigma_ps: f64 },
    /// Normalized weights at bin-center offsets, ps.
    Measured { offsets: Vec<f64>, weights: Vec<f64> },
}

impl Irf {
    pub fn measured(h: &Histogram) -> Result<Self, FitError> {
        let total = h.total();
        if total == 0 {
            return Err(FitError::BadInput("IRF histogram is empty".into()));
        }
        let (offsets, weights) = (0..h.len())
            .filter(|&j| h.counts()[j] > 0)
            .map(|j| (h.bin_center(j), h.counts()[j] as f64 / total as f64))
            .unzip();
        Ok(Irf::Measured { offsets, weights })
    }

    /// Standard deviation of the response.
    pub fn width(&self) -> f64 {
        match self {
            Irf::Gaussian { sigma_ps } => *sigma_ps,
            Irf::Measured { offsets, weights } => {
                let mean: f64 = offsets.iter().zip(weights).map(|(o, w)| o * w).sum();
                let var: f64 = offsets.iter().zip(weights).map(|(o, w)| w * (o - mean).powi(2)).sum();
                var.sqrt()
            }
        }
    }

    fn cdf(&self, u: f64, lambda: f64) -> (f64, f64, f64) {
        match self {
            Irf::Gaussian { sigma_ps } => emg_cdf(u, lambda, *sigma_ps),
            Irf::Measured { offsets, weights } => {
                let mut acc = (0.0, 0.0, 0.0);
                for (o, w) in offsets.iter().zip(weights) {
                    let (f, d, l) = emg_cdf(u - o, lambda, 0.0);
                    acc.0 += w * f;
                    acc.1 += w * d;
                    acc.2 += w * l;
                }
                acc
            }
        }
    }
}

/// Binned decay model. Parameter order: `[t1_ps, t0_ps, amplitude, background]`.
#[derive(Debug, Clone)]
pub struct LifetimeModel {
    pub edges: Vec<f64>,
    pub irf: Irf,
}

impl LifetimeModel {
    pub fn for_histogram(h: &Histogram, irf: Irf) -> Self {
        let edges = (0..=h.len()).map(|j| h.origin() as f64 + (j as u64 * h.bin_width()) as f64).collect();
        Self { edges, irf }
    }

    fn cdfs(&self, p: &[f64]) -> Vec<(f64, f64, f64)> {
        let lambda = 1.0 / p[0];
        self.edges.iter().map(|&x| self.irf.cdf(x - p[1], lambda)).collect()
    }
}

impl Model for LifetimeModel {
    fn n_params(&self) -> usize {
        4
    }

    fn n_points(&self) -> usize {
        self.edges.len() - 1
    }

    fn values(&self, p: &[f64]) -> Vec<f64> {
        let c = self.cdfs(p);
        c.windows(2).map(|w| p[2] * (w[1].0 - w[0].0) + p[3]).collect()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let c = self.cdfs(p);
        let (t1, amp) = (p[0], p[2]);
        DMatrix::from_fn(self.n_points(), 4, |i, k| {
            let (l, r) = (c[i], c[i + 1]);
            match k {
                // dλ/dt1 = −1/t1²
                0 => -amp * (r.2 - l.2) / (t1 * t1),
                1 => -amp * (r.1 - l.1),
                2 => r.0 - l.0,
                _ => 1.0,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub t1_ps: MetricResult,
    pub t0_ps: MetricResult,
    pub amplitude: MetricResult,
    pub background: MetricResult,
    /// The decay is not resolved against the instrument response; the
    /// result is effectively the IRF alone.
    pub unresolved: bool,
    pub irf_width_ps: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

const T1_FLOOR_PS: f64 = 1e-2;

/// Weighted least-squares lifetime fit with weights `1/max(counts, 1)`.
pub fn fit_lifetime(decay: &Histogram, irf: Irf) -> Result<LifetimeFit, FitError> {
    if decay.len() < 5 {
        return Err(FitError::BadInput(format!("{} bins are too few for a lifetime fit", decay.len())));
    }
    if decay.total() == 0 {
        return Err(FitError::BadInput("decay histogram is empty".into()));
    }
    if let Irf::Gaussian { sigma_ps } = irf {
        if !(sigma_ps >= 0.0 && sigma_ps.is_finite()) {
            return Err(FitError::BadInput(format!("IRF sigma {sigma_ps} ps")));
        }
    }
    let y: Vec<f64> = decay.counts().iter().map(|&c| c as f64).collect();
    let w: Vec<f64> = y.iter().map(|&v| 1.0 / v.max(1.0)).collect();
    let irf_width = irf.width();
    let guess = initial_guess(decay, &y, irf_width);
    let span = (decay.end() - decay.origin()) as f64;
    let bw = decay.bin_width() as f64;
    let params = [
        Param::log("t1_ps", guess[0], T1_FLOOR_PS, 10.0 * span),
        Param::linear("t0_ps", guess[1], decay.origin() as f64 - span, decay.end() as f64),
        Param::log("amplitude", guess[2], 1e-9, 1e3 * decay.total() as f64 + 1.0),
        Param::log("background", guess[3], 1e-9 / bw, 1e3 * y.iter().fold(1.0f64, |a, &b| a.max(b))),
    ];
    let model = LifetimeModel::for_histogram(decay, irf);
    let out = lm::fit(&model, &y, &w, &params, &Options { max_iterations: 1000, ..Default::default() })?;

    let mr = |i: usize| MetricResult { value: out.params[i], sigma: out.sigmas[i] };
    let t1 = mr(0);
    let unresolved = out.pinned[0] || t1.value < 3.0 * t1.sigma || t1.value < 0.1 * irf_width;
    Ok(LifetimeFit {
        t1_ps: t1,
        t0_ps: mr(1),
        amplitude: mr(2),
        background: mr(3),
        unresolved,
        irf_width_ps: irf_width,
        chi2: out.chi2,
        dof: out.dof,
        iterations: out.iterations,
        residuals: out.residuals,
    })
}

fn initial_guess(h: &Histogram, y: &[f64], irf_width: f64) -> [f64; 4] {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let low = &sorted[..(sorted.len() / 10).max(1)];
    let bg = (low.iter().sum::<f64>() / low.len() as f64).max(1e-3);
    let (peak_j, &peak) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let bw = h.bin_width() as f64;
    let t0 = h.bin_center(peak_j) - irf_width.min(2.0 * bw);
    let level = bg + (peak - bg) / std::f64::consts::E;
    let fall = y[peak_j..].iter().position(|&v| v < level).unwrap_or(y.len() - peak_j);
    let t1 = (fall as f64 * bw).max(bw / 2.0);
    let amp = y.iter().map(|v| (v - bg).max(0.0)).sum::<f64>().max(1.0);
    [t1, t0, amp, bg]
}
