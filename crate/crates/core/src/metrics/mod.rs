//! Figures of merit from integrated peak areas, plus blinking, lifetime and
//! efficiency analyses. Uncertainties assume Poisson counting statistics.

pub mod blinking;
pub mod lifetime;
pub mod lm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LossBudget, MetricResult, PeakAreas};

pub use blinking::{blinking_efficiency, fit_blinking, BlinkingFit, BlinkingModel};
pub use lifetime::{fit_lifetime, Irf, LifetimeFit, LifetimeModel};
pub use lm::{FitError, FitOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

/// g²(0) = A₀ / A_avg over all side peaks.
pub fn g2_zero(p: &PeakAreas) -> Result<MetricResult, MetricError> {
    let a0 = p
        .central()
        .ok_or_else(|| MetricError::Undefined("no peak at zero delay".into()))?
        as f64;
    let sides: Vec<f64> = p.side_peaks().map(|(_, a)| a as f64).collect();
    if sides.is_empty() {
        return Err(MetricError::Undefined("g2 needs at least one side peak".into()));
    }
    let sum: f64 = sides.iter().sum();
    if sum == 0.0 {
        return Err(MetricError::Undefined("side peaks are empty".into()));
    }
    let avg = sum / sides.len() as f64;
    let value = a0 / avg;
    let sigma = if a0 == 0.0 { 1.0 / avg } else { value * (1.0 / a0 + 1.0 / sum).sqrt() };
    Ok(MetricResult::new(value, sigma))
}

/// Areas of the two peaks at `±spacing`.
fn neighbours(p: &PeakAreas) -> Result<(f64, f64), MetricError> {
    let s = p.spacing as i64;
    match (p.area_at(-s), p.area_at(s)) {
        (Some(l), Some(r)) => Ok((l as f64, r as f64)),
        _ => Err(MetricError::Undefined(format!("peaks at ±{s} ps are required"))),
    }
}

/// Two-photon interference visibility `1 − Ã∥/Ã⊥`, each central area
/// normalized by the mean of its own `±spacing` peaks.
pub fn tpi_visibility(parallel: &PeakAreas, orthogonal: &PeakAreas) -> Result<MetricResult, MetricError> {
    if parallel.window != orthogonal.window || parallel.spacing != orthogonal.spacing {
        return Err(MetricError::Incompatible(format!(
            "window/spacing {}/{} ps vs {}/{} ps",
            parallel.window, parallel.spacing, orthogonal.window, orthogonal.spacing
        )));
    }
    let central = |p: &PeakAreas| {
        p.central().map(|a| a as f64).ok_or_else(|| MetricError::Undefined("no peak at zero delay".into()))
    };
    let a_par = central(parallel)?;
    let a_orth = central(orthogonal)?;
    let (l, r) = neighbours(parallel)?;
    let s_par = l + r;
    let (l, r) = neighbours(orthogonal)?;
    let s_orth = l + r;
    if a_orth == 0.0 {
        return Err(MetricError::Undefined("orthogonal central peak is empty".into()));
    }
    if s_par == 0.0 || s_orth == 0.0 {
        return Err(MetricError::Undefined("normalization peaks are empty".into()));
    }
    let ratio = (a_par / s_par) / (a_orth / s_orth);
    let value = 1.0 - ratio;
    let rel = 1.0 / a_orth + 1.0 / s_par + 1.0 / s_orth;
    let sigma = if a_par == 0.0 {
        (1.0 / s_par) / (a_orth / s_orth)
    } else {
        ratio * (rel + 1.0 / a_par).sqrt()
    };
    Ok(MetricResult::new(value, sigma))
}

/// Single-photon indistinguishability corrected for multi-photon events:
/// `M_s = (V + g²)/(1 − g²)`.
pub fn corrected_indistinguishability(v: MetricResult, g2: MetricResult) -> Result<MetricResult, MetricError> {
    if !(g2.value < 1.0) {
        return Err(MetricError::Undefined(format!("g2 = {} must be below 1", g2.value)));
    }
    let d = 1.0 - g2.value;
    let value = (v.value + g2.value) / d;
    let dv = 1.0 / d;
    let dg = (1.0 + v.value) / (d * d);
    let sigma = ((dv * v.sigma).powi(2) + (dg * g2.sigma).powi(2)).sqrt();
    Ok(MetricResult::new(value, sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub total_transmission: f64,
    /// Detector clicks per excitation pulse.
    pub overall_efficiency: f64,
    /// Overall efficiency divided by the setup transmission.
    pub corrected_efficiency: f64,
}

pub fn efficiency_budget(b: &LossBudget) -> Result<EfficiencyReport, MetricError> {
    if !(b.rep_rate_hz > 0.0 && b.rep_rate_hz.is_finite()) {
        return Err(MetricError::InvalidBudget(format!("rep rate {} Hz", b.rep_rate_hz)));
    }
    if !(b.measured_click_rate_hz >= 0.0 && b.measured_click_rate_hz.is_finite()) {
        return Err(MetricError::InvalidBudget(format!("click rate {} Hz", b.measured_click_rate_hz)));
    }
    for (name, t) in &b.components {
        if !(*t > 0.0 && *t <= 1.0) {
            return Err(MetricError::InvalidBudget(format!("`{name}` transmission {t} outside (0, 1]")));
        }
    }
    let total: f64 = b.components.iter().map(|(_, t)| t).product();
    let overall = b.measured_click_rate_hz / b.rep_rate_hz;
    Ok(EfficiencyReport {
        total_transmission: total,
        overall_efficiency: overall,
        corrected_efficiency: overall / total,
    })
}

/// Component transmissions of the reference setup, with the mirror entry
/// covering all four mirrors together.
pub fn reference_budget() -> LossBudget {
    let components = [
        ("90:10 BS", 0.88),
        ("Cryostat window", 0.98),
        ("12 nm bandpass", 0.97),
        ("Variable bandpass (0.1 nm)", 0.36),
        ("Beam sampler for camera", 0.93),
        ("Silver mirrors (4x)", 0.93),
        ("Fibers & connectors", 0.96),
        ("Detector", 0.94),
    ];
    LossBudget {
        components: components.iter().map(|&(n, t)| (n.to_string(), t)).collect(),
        measured_click_rate_hz: 400e3,
        rep_rate_hz: 80e6,
    }
}
