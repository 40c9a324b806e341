//! Domain types shared by the simulator and the analysis pipeline.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::{Error, Result};

/// One detection event: detector channel plus integer picosecond timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    pub t: u64,
}

impl TimeTag {
    pub const fn new(channel: u8, t: u64) -> Self {
        Self { channel, t }
    }
}

// Streams are ordered by time; ties are broken by channel so that sorting is
// total and deterministic.
impl Ord for TimeTag {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.cmp(&other.t).then(self.channel.cmp(&other.channel))
    }
}

impl PartialOrd for TimeTag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Returns the index of the first tag that is earlier than its predecessor.
pub fn first_unsorted(stream: &[TimeTag]) -> Option<usize> {
    stream
        .windows(2)
        .position(|w| w[1].t < w[0].t)
        .map(|i| i + 1)
}

/// Source parameters for one simulated emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterConfig {
    /// Pulse repetition rate in Hz.
    pub rep_rate_hz: f64,
    /// Excitation probability per pulse while the emitter is bright.
    pub p_exc: f64,
    /// Excited-state lifetime in ps.
    pub t1_ps: f64,
    /// Probability of a second (re-excitation) photon after a first emission.
    pub epsilon: f64,
    /// Blinking strength `A`; the bright-state probability is `1/(1+A)`.
    pub blink_strength: f64,
    /// Blinking correlation time in ps.
    pub blink_tau_ps: f64,
    /// Standard deviation of the per-photon angular-frequency detuning, rad/ps.
    pub sigma_detuning: f64,
    /// Slow-refill delay constant for re-excited photons, ps. `None` disables it.
    pub refill_tau_ps: Option<f64>,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            rep_rate_hz: 80e6,
            p_exc: 1.0,
            t1_ps: 300.0,
            epsilon: 0.0,
            blink_strength: 0.0,
            blink_tau_ps: 294_000.0,
            sigma_detuning: 0.0,
            refill_tau_ps: None,
        }
    }
}

impl EmitterConfig {
    /// Pulse period rounded to whole picoseconds.
    pub fn period_ps(&self) -> u64 {
        (1e12 / self.rep_rate_hz).round() as u64
    }

    /// Radiative decay rate, 1/ps.
    pub fn gamma(&self) -> f64 {
        1.0 / self.t1_ps
    }

    /// Stationary probability that the emitter is in its bright state.
    pub fn on_fraction(&self) -> f64 {
        1.0 / (1.0 + self.blink_strength)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Invalid { key: format!("emitter.{key}"), msg: msg.to_string() })
        };
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return bad("rep_rate_hz", "must be positive");
        }
        if self.period_ps() == 0 {
            return bad("rep_rate_hz", "pulse period rounds to 0 ps");
        }
        if !(0.0..=1.0).contains(&self.p_exc) {
            return bad("p_exc", "must lie in [0, 1]");
        }
        if !(self.t1_ps > 0.0 && self.t1_ps.is_finite()) {
            return bad("t1_ps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", "must lie in [0, 1]");
        }
        if !(self.blink_strength >= 0.0 && self.blink_strength.is_finite()) {
            return bad("blink_strength", "must be >= 0");
        }
        if self.blink_strength > 0.0 && !(self.blink_tau_ps > 0.0 && self.blink_tau_ps.is_finite()) {
            return bad("blink_tau_ps", "must be positive when blinking is enabled");
        }
        if !(self.sigma_detuning >= 0.0 && self.sigma_detuning.is_finite()) {
            return bad("sigma_detuning_rad_per_ps", "must be >= 0");
        }
        if let Some(tau) = self.refill_tau_ps {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad("refill_tau_ps", "must be positive");
            }
        }
        Ok(())
    }
}

/// Measurement topology behind the demultiplexer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Autocorrelation: one splitter input used, the other blocked.
    Hbt,
    /// Two-photon interference of consecutive photons.
    Hom,
}

/// Relative polarization of the two interferometer inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarizationSetting {
    Parallel,
    Orthogonal,
}

/// Polarization tag carried by a simulated photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    pub topology: Topology,
    pub polarization: PolarizationSetting,
    /// Demultiplexer switching period (two pulse periods), ps.
    pub demux_period_ps: u64,
    /// Extra path length of the delayed arm, ps.
    pub arm_delay_ps: u64,
    /// Transmission of the interference splitter.
    pub splitter_ratio: f64,
    /// Probability that the demultiplexer sends a photon to the wrong arm.
    pub demux_leakage: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Hbt,
            polarization: PolarizationSetting::Parallel,
            demux_period_ps: 25_000,
            arm_delay_ps: 12_500,
            splitter_ratio: 0.5,
            demux_leakage: 0.0,
        }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Invalid { key: format!("optics.{key}"), msg: msg.to_string() })
        };
        if self.demux_period_ps == 0 {
            return bad("demux_period_ps", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return bad("splitter_ratio", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.demux_leakage) {
            return bad("demux_leakage", "must lie in [0, 1]");
        }
        Ok(())
    }

    /// Consistency warnings against the pulse clock. Mismatched delays are
    /// allowed (they model a misaligned interferometer) but reported.
    pub fn check_against(&self, emitter: &EmitterConfig) -> Vec<String> {
        let period = emitter.period_ps();
        let mut warnings = Vec::new();
        if self.demux_period_ps != 2 * period {
            warnings.push(format!(
                "optics.demux_period_ps = {} but two pulse periods are {} ps",
                self.demux_period_ps,
                2 * period
            ));
        }
        if 2 * self.arm_delay_ps != self.demux_period_ps {
            warnings.push(format!(
                "optics.arm_delay_ps = {} is not half the demultiplexer period ({} ps)",
                self.arm_delay_ps, self.demux_period_ps
            ));
        }
        warnings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Gaussian timing jitter standard deviation, ps.
    pub jitter_ps: f64,
    pub dead_time_ps: u64,
    pub dark_rate_hz: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { efficiency: 1.0, jitter_ps: 0.0, dead_time_ps: 0, dark_rate_hz: 0.0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self, section: &str) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Invalid { key: format!("{section}.{key}"), msg: msg.to_string() })
        };
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad("efficiency", "must lie in [0, 1]");
        }
        if !(self.jitter_ps >= 0.0 && self.jitter_ps.is_finite()) {
            return bad("jitter_ps", "must be >= 0");
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return bad("dark_rate_hz", "must be >= 0");
        }
        Ok(())
    }
}

/// A reference value with its quoted uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    pub sigma: f64,
}

/// Expected figures of merit for a configured run, used for comparisons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub g2: Option<Target>,
    pub v_tpi: Option<Target>,
    pub m_s: Option<Target>,
}

/// Everything needed to reproduce one simulated experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub emitter: EmitterConfig,
    pub optics: OpticsConfig,
    /// One detector per splitter output; index = channel.
    pub detectors: [DetectorConfig; 2],
    pub targets: Targets,
    /// Name of the preset the config was built from, if any.
    pub profile: Option<String>,
    pub pulses: Option<u64>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.emitter.validate()?;
        self.optics.validate()?;
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate(&format!("detector.ch{i}"))?;
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        self.optics.check_against(&self.emitter)
    }
}

/// Internal simulation record for one emitted photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonRecord {
    /// Emission (or, after routing, splitter arrival) time, ps.
    pub emit_t: u64,
    /// Start of the photon's wavepacket: the time its excited state was
    /// populated, shifted by the same path delays as `emit_t`.
    pub onset_t: u64,
    /// Decay rate, 1/ps.
    pub gamma: f64,
    /// Angular-frequency detuning, rad/ps.
    pub detuning: f64,
    pub pol: Polarization,
    pub pulse_index: u64,
    /// 0 for the first photon of a pulse, 1 for a re-excitation photon.
    pub slot: u8,
}

/// Fixed-bin-width histogram over integer picosecond delays.
///
/// Bin `j` covers `[origin + j*bin_width, origin + (j+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    bin_width: u64,
    origin: i64,
    counts: Vec<u64>,
    total_entries: u64,
}

impl Histogram {
    pub fn new(bin_width: u64, origin: i64, n_bins: usize) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::InvalidParameter("bin width must be >= 1 ps".into()));
        }
        Ok(Self { bin_width, origin, counts: vec![0; n_bins], total_entries: 0 })
    }

    pub fn from_counts(bin_width: u64, origin: i64, counts: Vec<u64>) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::InvalidParameter("bin width must be >= 1 ps".into()));
        }
        let total_entries = counts.iter().sum();
        Ok(Self { bin_width, origin, counts, total_entries })
    }

    pub fn bin_width(&self) -> u64 {
        self.bin_width
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total_entries
    }

    /// Exclusive right edge of the last bin.
    pub fn end(&self) -> i64 {
        self.origin + (self.counts.len() as u64 * self.bin_width) as i64
    }

    pub fn bin_left(&self, j: usize) -> i64 {
        self.origin + (j as u64 * self.bin_width) as i64
    }

    pub fn bin_center(&self, j: usize) -> f64 {
        self.bin_left(j) as f64 + self.bin_width as f64 / 2.0
    }

    /// Bin index containing `t`, if in range.
    pub fn bin_of(&self, t: i64) -> Option<usize> {
        if t < self.origin {
            return None;
        }
        let j = ((t - self.origin) as u64 / self.bin_width) as usize;
        (j < self.counts.len()).then_some(j)
    }

    pub fn increment(&mut self, j: usize) {
        self.counts[j] += 1;
        self.total_entries += 1;
    }

    pub fn add_to_bin(&mut self, j: usize, n: u64) {
        self.counts[j] += n;
        self.total_entries += n;
    }

    fn same_shape(&self, other: &Histogram) -> Result<()> {
        if self.bin_width != other.bin_width
            || self.origin != other.origin
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "(bin_width {}, origin {}, {} bins) vs (bin_width {}, origin {}, {} bins)",
                self.bin_width,
                self.origin,
                self.counts.len(),
                other.bin_width,
                other.origin,
                other.counts.len()
            )));
        }
        Ok(())
    }

    /// Element-wise sum of two histograms of identical shape.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Histogram) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_entries += other.total_entries;
        Ok(())
    }
}

/// Integrated correlation-peak areas with Poisson errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAreas {
    /// Nominal peak delays, ps.
    pub centers: Vec<i64>,
    pub areas: Vec<u64>,
    pub errors: Vec<f64>,
    /// Integration window, ps.
    pub window: u64,
    /// Nominal spacing between peaks, ps.
    pub spacing: u64,
}

impl PeakAreas {
    pub fn new(centers: Vec<i64>, areas: Vec<u64>, window: u64, spacing: u64) -> Self {
        assert_eq!(centers.len(), areas.len(), "one area per peak center");
        assert!(window > 0, "peak window must be positive");
        let errors = areas.iter().map(|&a| (a as f64).sqrt()).collect();
        Self { centers, areas, errors, window, spacing }
    }

    pub fn area_at(&self, center: i64) -> Option<u64> {
        self.centers.iter().position(|&c| c == center).map(|i| self.areas[i])
    }

    pub fn central(&self) -> Option<u64> {
        self.area_at(0)
    }

    /// (center, area) pairs for every peak at nonzero delay.
    pub fn side_peaks(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.centers.iter().copied().zip(self.areas.iter().copied()).filter(|&(c, _)| c != 0)
    }
}

/// Scalar figure of merit with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub value: f64,
    pub sigma: f64,
}

impl MetricResult {
    pub fn new(value: f64, sigma: f64) -> Self {
        debug_assert!(sigma >= 0.0 || sigma.is_nan());
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

/// Setup transmission budget plus the measured detector click rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub components: Vec<(String, f64)>,
    pub measured_click_rate_hz: f64,
    pub rep_rate_hz: f64,
}
