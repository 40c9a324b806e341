//! JSON report documents written by the analysis commands.

use serde::Serialize;

use photonmetrics::metrics::{BlinkingFit, EfficiencyReport, LifetimeFit};
use photonmetrics::model::{LossBudget, MetricResult, PeakAreas, Targets};
use photonmetrics::simulate::SimReport;
use photonmetrics::RunConfig;

/// Settings that determine a correlation analysis, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationSettings {
    pub ch_a: u8,
    pub ch_b: u8,
    pub bin_width_ps: u64,
    pub max_delay_ps: u64,
    pub window_ps: u64,
    pub spacing_ps: u64,
    pub n_side: usize,
    pub recenter: bool,
}

/// Where an analyzed stream came from.
#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    pub tags: usize,
    /// Seed recorded in the run manifest next to the file, if there is one.
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct G2Report {
    pub metric: &'static str,
    pub value: f64,
    pub sigma: f64,
    pub a0: u64,
    pub side_areas: Vec<u64>,
    pub peaks: PeakAreas,
    pub input: InputInfo,
    pub settings: CorrelationSettings,
}

#[derive(Debug, Serialize)]
pub struct HomReport {
    pub metric: &'static str,
    pub value: f64,
    pub sigma: f64,
    pub a_parallel: u64,
    pub a_orthogonal: u64,
    pub side_areas_parallel: Vec<u64>,
    pub side_areas_orthogonal: Vec<u64>,
    pub parallel: InputInfo,
    pub orthogonal: InputInfo,
    /// Present when a g²(0) value was supplied.
    pub corrected_indistinguishability: Option<MetricResult>,
    pub g2: Option<MetricResult>,
    pub settings: CorrelationSettings,
}

#[derive(Debug, Serialize)]
pub struct BlinkingReport {
    pub metric: &'static str,
    pub fit: BlinkingFit,
    pub message: Option<String>,
    pub peaks: PeakAreas,
    pub input: InputInfo,
    pub settings: CorrelationSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct LifetimeSettings {
    pub channel: u8,
    pub sync_period_ps: u64,
    pub bin_width_ps: u64,
    pub offset_ps: i64,
    pub irf_sigma_ps: Option<f64>,
    pub irf_file: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LifetimeReport {
    pub metric: &'static str,
    pub fit: LifetimeFit,
    pub message: Option<String>,
    pub input: InputInfo,
    pub settings: LifetimeSettings,
}

#[derive(Debug, Serialize)]
pub struct BudgetReport {
    pub metric: &'static str,
    #[serde(flatten)]
    pub result: EfficiencyReport,
    pub budget: LossBudget,
}

/// One figure of merit compared with its reference value.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub value: f64,
    pub sigma: f64,
    pub target: Option<f64>,
    pub target_sigma: Option<f64>,
    /// |value − target| in units of the combined uncertainty.
    pub deviation_sigma: Option<f64>,
    pub within_3_sigma: Option<bool>,
}

impl Comparison {
    pub fn new(m: MetricResult, target: Option<photonmetrics::model::Target>) -> Self {
        let deviation = target.map(|t| {
            let s = (m.sigma.powi(2) + t.sigma.powi(2)).sqrt();
            let d = (m.value - t.value).abs();
            if s > 0.0 {
                d / s
            } else if d <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        });
        Self {
            value: m.value,
            sigma: m.sigma,
            target: target.map(|t| t.value),
            target_sigma: target.map(|t| t.sigma),
            deviation_sigma: deviation,
            within_3_sigma: deviation.map(|d| d <= 3.0),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StageReport {
    pub seed: u64,
    pub simulation: SimReport,
    pub peaks: PeakAreas,
}

#[derive(Debug, Serialize)]
pub struct CharacterizeReport {
    pub metric: &'static str,
    pub profile: Option<String>,
    pub seed: u64,
    pub pulses: u64,
    pub g2: Comparison,
    pub v_tpi: Comparison,
    pub m_s: Comparison,
    pub targets: Targets,
    pub hbt: StageReport,
    pub hom_parallel: StageReport,
    pub hom_orthogonal: StageReport,
    pub settings: CorrelationSettings,
    pub config: RunConfig,
}

/// Sidecar written next to every simulated tag file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub pulses: u64,
    pub output: String,
    pub sha256: String,
    pub simulation: SimReport,
    pub warnings: Vec<String>,
    /// The configuration in config-file syntax; parsing it reproduces the run.
    pub config_text: String,
    pub config: RunConfig,
}
