//! Pulsed emission with re-excitation and spectral diffusion.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::blinking::{blinking_trajectory, BlinkTrajectory};
use crate::model::{EmitterConfig, PhotonRecord, Polarization};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

struct Samplers {
    decay: Exp<f64>,
    refill: Option<Exp<f64>>,
    detuning: Option<Normal<f64>>,
}

impl Samplers {
    fn new(cfg: &EmitterConfig) -> Self {
        Self {
            decay: Exp::new(1.0 / cfg.t1_ps).expect("validated lifetime"),
            refill: cfg.refill_tau_ps.map(|tau| Exp::new(1.0 / tau).expect("validated refill")),
            detuning: (cfg.sigma_detuning > 0.0)
                .then(|| Normal::new(0.0, cfg.sigma_detuning).expect("validated detuning")),
        }
    }
}

/// The emitter's bright/dark history covering `n_pulses` pulses.
pub fn trajectory_for(cfg: &EmitterConfig, n_pulses: u64, seed: u64) -> Result<BlinkTrajectory> {
    let duration = (n_pulses * cfg.period_ps()) as f64;
    if cfg.blink_strength == 0.0 {
        return Ok(BlinkTrajectory::always_on(duration));
    }
    blinking_trajectory(cfg.blink_strength, cfg.blink_tau_ps, duration, seed)
}

fn emit_pulse(
    cfg: &EmitterConfig,
    s: &Samplers,
    trajectory: &BlinkTrajectory,
    k: u64,
    seed: u64,
    out: &mut Vec<PhotonRecord>,
) {
    let pulse_t = k * cfg.period_ps();
    if !trajectory.is_on(pulse_t as f64) {
        return;
    }
    let mut rng = substream(seed, Domain::Emission, k, 0);
    if rng.random::<f64>() >= cfg.p_exc {
        return;
    }
    let gamma = cfg.gamma();
    let detuning = |rng: &mut rand_chacha::ChaCha8Rng| s.detuning.map_or(0.0, |n| n.sample(rng));

    let d1 = s.decay.sample(&mut rng);
    out.push(PhotonRecord {
        emit_t: pulse_t + d1.round() as u64,
        onset_t: pulse_t,
        gamma,
        detuning: detuning(&mut rng),
        pol: Polarization::H,
        pulse_index: k,
        slot: 0,
    });

    if rng.random::<f64>() < cfg.epsilon {
        let (onset, emit) = match &s.refill {
            Some(refill) => {
                let onset = refill.sample(&mut rng);
                (onset, onset + s.decay.sample(&mut rng))
            }
            None => (d1, d1 + s.decay.sample(&mut rng)),
        };
        out.push(PhotonRecord {
            emit_t: pulse_t + emit.round() as u64,
            onset_t: pulse_t + onset.round() as u64,
            gamma,
            detuning: detuning(&mut rng),
            pol: Polarization::H,
            pulse_index: k,
            slot: 1,
        });
    }
}

/// Photons emitted in pulses `range`, sorted by emission time.
pub(crate) fn emissions_for_range(
    cfg: &EmitterConfig,
    trajectory: &BlinkTrajectory,
    range: Range<u64>,
    seed: u64,
) -> Vec<PhotonRecord> {
    let s = Samplers::new(cfg);
    let mut out = Vec::with_capacity((range.end - range.start) as usize);
    for k in range {
        emit_pulse(cfg, &s, trajectory, k, seed, &mut out);
    }
    out.sort_by_key(|p| (p.emit_t, p.pulse_index, p.slot));
    out
}

/// Emission records for pulses `0..n_pulses`, sorted by emission time.
///
/// Pulse `k` fires at `k / rep_rate`. While the emitter is bright it is
/// excited with probability `p_exc` and emits after an exponential delay
/// with mean `t1`; with probability `epsilon` a second photon follows, either
/// one more exponential delay after the first or, with slow refilling
/// enabled, after an additional `Exp(refill_tau)` delay from the pulse.
pub fn generate_emissions(cfg: &EmitterConfig, n_pulses: u64, seed: u64) -> Result<Vec<PhotonRecord>> {
    cfg.validate()?;
    if n_pulses == 0 {
        return Err(Error::InvalidParameter("n_pulses must be >= 1".into()));
    }
    let trajectory = trajectory_for(cfg, n_pulses, seed)?;
    Ok(emissions_for_range(cfg, &trajectory, 0..n_pulses, seed))
}
