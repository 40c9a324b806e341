//! Demultiplexer, wavepacket overlap and the interference beam splitter.

use rand::Rng;

use crate::model::{OpticsConfig, PhotonRecord, Polarization, PolarizationSetting, Topology};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// A photon leaving the splitter towards detector `channel` at time `t` (ps).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub channel: u8,
    pub t: u64,
    pub pulse_index: u64,
    pub slot: u8,
}

/// Splits a time-ordered photon list into the two demultiplexer outputs.
///
/// Even pulses go to `arm1`, which carries the extra `arm_delay`; odd pulses
/// go to `arm2`. With the delay equal to one pulse period, photons of pulses
/// `2j` and `2j+1` reach the splitter together. In the orthogonal setting the
/// half-wave plate in `arm2` turns its photons to V. A photon switches to the
/// wrong arm with probability `demux_leakage`.
pub fn route_demux(
    photons: &[PhotonRecord],
    optics: &OpticsConfig,
    seed: u64,
) -> (Vec<PhotonRecord>, Vec<PhotonRecord>) {
    let mut arm1 = Vec::with_capacity(photons.len() / 2 + 1);
    let mut arm2 = Vec::with_capacity(photons.len() / 2 + 1);
    for p in photons {
        let mut to_arm1 = p.pulse_index % 2 == 0;
        if optics.demux_leakage > 0.0 {
            let mut rng = substream(seed, Domain::Demux, p.pulse_index, p.slot as u64);
            if rng.random::<f64>() < optics.demux_leakage {
                to_arm1 = !to_arm1;
            }
        }
        if to_arm1 {
            arm1.push(PhotonRecord {
                emit_t: p.emit_t + optics.arm_delay_ps,
                onset_t: p.onset_t + optics.arm_delay_ps,
                ..*p
            });
        } else {
            let pol = match optics.polarization {
                PolarizationSetting::Parallel => p.pol,
                PolarizationSetting::Orthogonal => Polarization::V,
            };
            arm2.push(PhotonRecord { pol, ..*p });
        }
    }
    (arm1, arm2)
}

/// Squared overlap of two single-sided exponential wavepackets:
/// `pol · exp(-γ|Δt|) · γ² / (γ² + Δω²)`, with `Δt` the difference of the
/// wavepacket onsets at the splitter and `Δω` the detuning difference.
pub fn pair_overlap(a: &PhotonRecord, b: &PhotonRecord) -> f64 {
    if a.pol != b.pol {
        return 0.0;
    }
    debug_assert!((a.gamma - b.gamma).abs() <= 1e-12 * a.gamma, "photons from one emitter");
    let gamma = a.gamma;
    let dt = a.onset_t.abs_diff(b.onset_t) as f64;
    let dw = a.detuning - b.detuning;
    (-gamma * dt).exp() * gamma * gamma / (gamma * gamma + dw * dw)
}

/// Assigns every photon to a splitter output (channel 0 or 1).
///
/// A photon from `arm1` (`arm2`) leaves through output 0 (1) with
/// probability `splitter_ratio`. When a pulse pair `(2j, 2j+1)` delivers
/// exactly one first-emission photon per arm, those two interfere: with
/// overlap `m` they exit through different outputs with probability
/// `t² + r² - 2tr·m` (`(1-m)/2` for a balanced splitter) and bunch otherwise.
/// All remaining photons route independently.
pub fn beamsplitter(
    arm1: &[PhotonRecord],
    arm2: &[PhotonRecord],
    optics: &OpticsConfig,
    seed: u64,
) -> Result<Vec<Arrival>> {
    if optics.topology == Topology::Hbt && !arm2.is_empty() {
        return Err(Error::InvalidTopology(format!(
            "HBT measurement has its second splitter input blocked, but {} photons reached it",
            arm2.len()
        )));
    }
    let t = optics.splitter_ratio;
    let r = 1.0 - t;

    let mut order: Vec<(u64, u8, &PhotonRecord)> = arm1
        .iter()
        .map(|p| (p.pulse_index / 2, 0u8, p))
        .chain(arm2.iter().map(|p| (p.pulse_index / 2, 1u8, p)))
        .collect();
    order.sort_unstable_by_key(|&(pair, arm, p)| (pair, arm, p.pulse_index, p.slot));

    let arrival = |p: &PhotonRecord, channel: u8| Arrival {
        channel,
        t: p.emit_t,
        pulse_index: p.pulse_index,
        slot: p.slot,
    };

    let mut out = Vec::with_capacity(order.len());
    for group in order.chunk_by(|a, b| a.0 == b.0) {
        let mut rng = substream(seed, Domain::Splitter, group[0].0, 0);
        let first_in = |arm: u8| -> Vec<usize> {
            (0..group.len()).filter(|&i| group[i].1 == arm && group[i].2.slot == 0).collect()
        };
        let (f1, f2) = (first_in(0), first_in(1));
        let interfering = (optics.topology == Topology::Hom && f1.len() == 1 && f2.len() == 1)
            .then(|| (f1[0], f2[0]));

        if let Some((i, j)) = interfering {
            let (a, b) = (group[i].2, group[j].2);
            let m = pair_overlap(a, b);
            let p_coinc = t * t + r * r - 2.0 * t * r * m;
            let u: f64 = rng.random();
            let (ca, cb) = if u < p_coinc {
                // Both transmitted or both reflected.
                if rng.random::<f64>() * (t * t + r * r) < t * t {
                    (0, 1)
                } else {
                    (1, 0)
                }
            } else if rng.random::<f64>() < 0.5 {
                (0, 0)
            } else {
                (1, 1)
            };
            out.push(arrival(a, ca));
            out.push(arrival(b, cb));
        }
        for (k, &(_, arm, p)) in group.iter().enumerate() {
            if interfering.is_some_and(|(i, j)| k == i || k == j) {
                continue;
            }
            let transmitted = rng.random::<f64>() < t;
            let channel = if transmitted { arm } else { 1 - arm };
            out.push(arrival(p, channel));
        }
    }
    Ok(out)
}
