//! Blinking fit: peak areas at long delays follow `A₀(1 + A·e^(−|t|/τ_B))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{self, FitError, Model, Options, Param};
use crate::model::{MetricResult, PeakAreas};

/// Bunching envelope of correlation-peak areas versus delay.
#[derive(Debug, Clone)]
pub struct BlinkingModel {
    /// Peak delays, ps.
    pub delays: Vec<f64>,
}

impl BlinkingModel {
    /// Parameter order: `[a0, a, tau_b_ps]`.
    pub fn eval(a0: f64, a: f64, tau: f64, t: f64) -> f64 {
        a0 * (1.0 + a * (-t.abs() / tau).exp())
    }
}

impl Model for BlinkingModel {
    fn n_params(&self) -> usize {
        3
    }

    fn n_points(&self) -> usize {
        self.delays.len()
    }

    fn values(&self, p: &[f64]) -> Vec<f64> {
        self.delays.iter().map(|&t| Self::eval(p[0], p[1], p[2], t)).collect()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let (a0, a, tau) = (p[0], p[1], p[2]);
        DMatrix::from_fn(self.delays.len(), 3, |i, k| {
            let t = self.delays[i].abs();
            let e = (-t / tau).exp();
            match k {
                0 => 1.0 + a * e,
                1 => a0 * e,
                _ => a0 * a * e * t / (tau * tau),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkingFit {
    pub a: MetricResult,
    pub tau_b_ps: MetricResult,
    pub a0: MetricResult,
    /// `1/(1+A)` with propagated error.
    pub efficiency: MetricResult,
    /// A is at its lower bound or below three standard errors.
    pub no_blinking: bool,
    pub tau_unconstrained: bool,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub delays_ps: Vec<i64>,
    /// Weighted residuals per peak.
    pub residuals: Vec<f64>,
}

const A_FLOOR: f64 = 1e-9;

/// Fits the blinking envelope to every peak at nonzero delay, weighting each
/// area by its inverse Poisson variance.
pub fn fit_blinking(peaks: &PeakAreas) -> Result<BlinkingFit, FitError> {
    let side: Vec<(i64, u64)> = peaks.side_peaks().collect();
    if side.len() < 8 {
        return Err(FitError::BadInput(format!(
            "blinking fit needs at least 8 side peaks, got {}",
            side.len()
        )));
    }
    let delays: Vec<f64> = side.iter().map(|&(c, _)| c as f64).collect();
    let y: Vec<f64> = side.iter().map(|&(_, a)| a as f64).collect();
    if y.iter().all(|&v| v == 0.0) {
        return Err(FitError::BadInput("all side peaks are empty".into()));
    }
    let w: Vec<f64> = y.iter().map(|&v| 1.0 / v.max(1.0)).collect();

    let (a0, a, tau) = initial_guess(&delays, &y, peaks.spacing as f64);
    let max_t = delays.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let spacing = (peaks.spacing as f64).max(1.0);
    let params = [
        Param::log("a0", a0, 1e-12, 1e18),
        Param::log("a", a, A_FLOOR, 1e6),
        Param::log("tau_b_ps", tau, spacing / 100.0, 1e3 * max_t),
    ];
    let model = BlinkingModel { delays };
    let out = lm::fit(&model, &y, &w, &params, &Options::default())?;

    let mr = |i: usize| MetricResult { value: out.params[i], sigma: out.sigmas[i] };
    let a = mr(1);
    let no_blinking = out.pinned[1] || a.value < 3.0 * a.sigma;
    let eff = 1.0 / (1.0 + a.value);
    Ok(BlinkingFit {
        a,
        tau_b_ps: mr(2),
        a0: mr(0),
        efficiency: MetricResult { value: eff, sigma: a.sigma * eff * eff },
        no_blinking,
        tau_unconstrained: out.unconstrained[2] || no_blinking,
        chi2: out.chi2,
        dof: out.dof,
        iterations: out.iterations,
        delays_ps: side.iter().map(|&(c, _)| c).collect(),
        residuals: out.residuals,
    })
}

/// Plateau from the outermost quarter, amplitude from the innermost peaks,
/// decay length from the first 1/e crossing of the excess.
fn initial_guess(delays: &[f64], y: &[f64], spacing: f64) -> (f64, f64, f64) {
    let mut by_delay: Vec<(f64, f64)> = delays.iter().map(|t| t.abs()).zip(y.iter().copied()).collect();
    by_delay.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = by_delay.len();
    let outer = &by_delay[n - (n / 4).max(1)..];
    let a0 = (outer.iter().map(|p| p.1).sum::<f64>() / outer.len() as f64).max(1.0);
    let inner = &by_delay[..2.min(n)];
    let peak = inner.iter().map(|p| p.1).sum::<f64>() / inner.len() as f64;
    let a = (peak / a0 - 1.0).max(1e-3);
    let threshold = a0 * (1.0 + a / std::f64::consts::E);
    let tau = by_delay
        .iter()
        .find(|p| p.1 < threshold)
        .map(|p| p.0)
        .unwrap_or(by_delay[n - 1].0 / 5.0)
        .max(spacing);
    (a0, a, tau)
}

/// Fraction of time the emitter is bright for blinking strength `a`.
pub fn blinking_efficiency(a: f64) -> f64 {
    1.0 / (1.0 + a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_peaks(a0: f64, a: f64, tau: f64, n_side: i64) -> PeakAreas {
        let centers: Vec<i64> = (-n_side..=n_side).map(|k| k * 25_000).collect();
        let areas = centers
            .iter()
            .map(|&c| if c == 0 { 0 } else { BlinkingModel::eval(a0, a, tau, c as f64).round() as u64 })
            .collect();
        PeakAreas::new(centers, areas, 3000, 25_000)
    }

    #[test]
    fn recovers_large_exact_model() {
        // Large counts keep rounding below the 1e-6 level.
        let p = exact_peaks(1e12, 2.71, 294_000.0, 120);
        let fit = fit_blinking(&p).unwrap();
        assert!((fit.a.value / 2.71 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.tau_b_ps.value / 294_000.0 - 1.0).abs() < 1e-6);
        assert!(!fit.no_blinking);
        assert!((fit.efficiency.value - 0.2695).abs() < 1e-4);
    }

    #[test]
    fn constant_areas_mean_no_blinking() {
        let centers: Vec<i64> = (-20..=20).map(|k| k * 25_000).collect();
        let areas = vec![5000; centers.len()];
        let fit = fit_blinking(&PeakAreas::new(centers, areas, 3000, 25_000)).unwrap();
        assert!(fit.no_blinking);
        assert!(fit.tau_unconstrained);
        assert!(fit.a.value < 1e-3);
        assert!((fit.a0.value - 5000.0).abs() < 1.0);
    }

    #[test]
    fn too_few_peaks() {
        assert!(matches!(fit_blinking(&exact_peaks(1e3, 1.0, 1e5, 3)), Err(FitError::BadInput(_))));
    }

    #[test]
    fn efficiency_values() {
        assert_eq!(blinking_efficiency(0.0), 1.0);
        assert_eq!(blinking_efficiency(1.0), 0.5);
        assert!((blinking_efficiency(2.71) - 0.269_541_778).abs() < 1e-8);
    }
}
