//! Preset excitation-scheme profiles and the helpers that map target
//! figures of merit onto simulator knobs.
//!
//! The presets reproduce the measured g²(0), visibility and corrected
//! indistinguishability of four excitation schemes of a telecom quantum dot.
//! Lifetimes are not taken from measurements: they only respect the ordering
//! LA-phonon < resonance #2 < resonance #1 < above-band.

use std::fmt;
use std::str::FromStr;

use crate::model::{
    DetectorConfig, EmitterConfig, OpticsConfig, RunConfig, Target, Targets, Topology,
};
use crate::special::erfcx;

/// Re-excitation probability that yields a given g²(0) for a deterministic
/// source, inverting `g2 = 2ε/(1+ε)²` on its lower branch.
pub fn epsilon_for_g2(g2: f64) -> Result<f64, String> {
    if !(0.0..=0.5).contains(&g2) {
        return Err(format!("g2 target {g2} outside [0, 0.5]"));
    }
    if g2 == 0.0 {
        return Ok(0.0);
    }
    Ok(((1.0 - g2) - (1.0 - 2.0 * g2).sqrt()) / g2)
}

/// g²(0) of a deterministic source with re-excitation probability `epsilon`.
pub fn g2_for_epsilon(epsilon: f64) -> f64 {
    2.0 * epsilon / (1.0 + epsilon).powi(2)
}

/// Mean pair overlap `E[γ²/(γ²+Δω²)]` when each photon's detuning is drawn
/// from `N(0, sigma²)`, so that `Δω ~ N(0, 2 sigma²)`.
pub fn mean_overlap(gamma: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let x = gamma / (2.0 * sigma);
    std::f64::consts::PI.sqrt() * x * erfcx(x)
}

/// Inverts [`mean_overlap`] for the detuning spread.
pub fn detuning_for_mean_overlap(m: f64, gamma: f64) -> Result<f64, String> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(format!("mean overlap {m} outside (0, 1]"));
    }
    if m == 1.0 {
        return Ok(0.0);
    }
    // mean_overlap is increasing in x = gamma/(2 sigma); bracket x in log space.
    let f = |x: f64| std::f64::consts::PI.sqrt() * x * erfcx(x) - m;
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(format!("mean overlap {m} too close to 1"));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(gamma / (2.0 * x))
}

/// Mean overlap of the first photons of two pulses needed to observe a raw
/// visibility `v` when extra photons (probability `epsilon` per pulse) are
/// fully distinguishable: `v = m / (1 + 4ε + ε²)`.
pub fn overlap_for_visibility(v: f64, epsilon: f64) -> f64 {
    v * (1.0 + 4.0 * epsilon + epsilon * epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    AboveBand,
    LaPhonon,
    Resonance1,
    Resonance2,
    Ideal,
    LaserReference,
    LaPhononBlinking,
}

// Above-band photons reach the emitter through a slow refilling channel; a
// share of the re-excitation photons lands outside the 3 ns peak window, so
// epsilon and the overlap target are scaled to keep the windowed metrics on
// target. Found by closed-loop calibration of the simulator.
const ABOVE_BAND_REFILL_PS: f64 = 1500.0;
const ABOVE_BAND_EPSILON_SCALE: f64 = 1.54;
const ABOVE_BAND_OVERLAP_SCALE: f64 = 0.847;

impl Profile {
    pub const ALL: [Profile; 7] = [
        Profile::AboveBand,
        Profile::LaPhonon,
        Profile::Resonance1,
        Profile::Resonance2,
        Profile::Ideal,
        Profile::LaserReference,
        Profile::LaPhononBlinking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::AboveBand => "above_band",
            Profile::LaPhonon => "la_phonon",
            Profile::Resonance1 => "resonance1",
            Profile::Resonance2 => "resonance2",
            Profile::Ideal => "ideal",
            Profile::LaserReference => "laser_reference",
            Profile::LaPhononBlinking => "la_phonon_blinking",
        }
    }

    /// Reference (g², V_TPI, M_s) values with their quoted uncertainties.
    pub fn targets(self) -> Targets {
        let t = |value, sigma| Some(Target { value, sigma });
        match self {
            Profile::AboveBand => Targets {
                g2: t(0.194, 0.003),
                v_tpi: t(0.206, 0.006),
                m_s: t(0.496, 0.013),
            },
            Profile::LaPhonon => Targets {
                g2: t(0.017, 0.001),
                v_tpi: t(0.917, 0.002),
                m_s: t(0.950, 0.004),
            },
            Profile::Resonance1 => Targets {
                g2: t(0.029, 0.001),
                v_tpi: t(0.581, 0.003),
                m_s: t(0.628, 0.005),
            },
            Profile::Resonance2 => Targets {
                g2: t(0.008, 0.001),
                v_tpi: t(0.845, 0.005),
                m_s: t(0.860, 0.006),
            },
            Profile::Ideal => {
                Targets { g2: t(0.0, 0.0), v_tpi: t(1.0, 0.0), m_s: t(1.0, 0.0) }
            }
            Profile::LaserReference => Targets::default(),
            Profile::LaPhononBlinking => Targets { g2: None, ..Profile::LaPhonon.targets() },
        }
    }

    pub fn emitter(self) -> EmitterConfig {
        let base = EmitterConfig::default();
        let tuned = |t1_ps: f64| {
            let targets = self.targets();
            let g2 = targets.g2.map_or(0.0, |t| t.value);
            let v = targets.v_tpi.map_or(1.0, |t| t.value);
            let epsilon = epsilon_for_g2(g2).expect("preset g2 within range");
            let m = overlap_for_visibility(v, epsilon);
            let sigma = detuning_for_mean_overlap(m, 1.0 / t1_ps).expect("preset overlap in range");
            EmitterConfig { t1_ps, epsilon, sigma_detuning: sigma, ..base.clone() }
        };
        match self {
            Profile::AboveBand => {
                let t1_ps = 900.0;
                let epsilon = ABOVE_BAND_EPSILON_SCALE * epsilon_for_g2(0.194).unwrap();
                let m = ABOVE_BAND_OVERLAP_SCALE * overlap_for_visibility(0.206, epsilon);
                EmitterConfig {
                    t1_ps,
                    epsilon,
                    sigma_detuning: detuning_for_mean_overlap(m, 1.0 / t1_ps).unwrap(),
                    refill_tau_ps: Some(ABOVE_BAND_REFILL_PS),
                    ..base
                }
            }
            Profile::LaPhonon => tuned(300.0),
            Profile::Resonance1 => tuned(700.0),
            Profile::Resonance2 => tuned(500.0),
            Profile::Ideal => EmitterConfig { t1_ps: 300.0, ..base },
            Profile::LaserReference => EmitterConfig { t1_ps: 1.0, ..base },
            Profile::LaPhononBlinking => EmitterConfig {
                blink_strength: 2.71,
                blink_tau_ps: 294_000.0,
                ..Profile::LaPhonon.emitter()
            },
        }
    }

    pub fn detector(self) -> DetectorConfig {
        match self {
            Profile::Ideal => DetectorConfig::default(),
            _ => DetectorConfig {
                efficiency: 0.94,
                jitter_ps: 40.0,
                dead_time_ps: 0,
                dark_rate_hz: 100.0,
            },
        }
    }

    pub fn run_config(self) -> RunConfig {
        let det = self.detector();
        RunConfig {
            emitter: self.emitter(),
            optics: OpticsConfig { topology: Topology::Hbt, ..Default::default() },
            detectors: [det.clone(), det],
            targets: self.targets(),
            profile: Some(self.name().to_string()),
            pulses: None,
            seed: None,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '#', ' '], "_");
        Profile::ALL.into_iter().find(|p| p.name() == norm).ok_or_else(|| {
            let names: Vec<_> = Profile::ALL.iter().map(|p| p.name()).collect();
            format!("unknown profile `{s}` (expected one of {})", names.join(", "))
        })
    }
}
