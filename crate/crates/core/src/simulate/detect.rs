//! Detector model: efficiency, Gaussian jitter, dark counts and dead time.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;

use super::optics::Arrival;
use crate::model::{DetectorConfig, TimeTag};
use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// Dark counts are drawn per fixed block of time so that any partition of a
/// run into time windows yields the same events.
const DARK_BLOCK_PS: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectReport {
    /// Photons absorbed without a click.
    pub missed: u64,
    /// Jittered timestamps that fell before 0 and were clamped.
    pub clamped: u64,
    pub dark_counts: u64,
    pub dead_time_dropped: u64,
}

impl DetectReport {
    pub fn add(&mut self, other: &DetectReport) {
        self.missed += other.missed;
        self.clamped += other.clamped;
        self.dark_counts += other.dark_counts;
        self.dead_time_dropped += other.dead_time_dropped;
    }
}

fn check_channels(arrivals: &[Arrival], detectors: &[DetectorConfig]) -> Result<()> {
    if let Some(a) = arrivals.iter().find(|a| a.channel as usize >= detectors.len()) {
        return Err(Error::InvalidParameter(format!(
            "arrival on channel {} but only {} detectors configured",
            a.channel,
            detectors.len()
        )));
    }
    Ok(())
}

/// Efficiency and jitter for each arrival; no sorting, no dead time.
pub(crate) fn detect_photons(
    arrivals: &[Arrival],
    detectors: &[DetectorConfig],
    seed: u64,
    report: &mut DetectReport,
) -> Vec<TimeTag> {
    let jitter: Vec<_> = detectors
        .iter()
        .map(|d| (d.jitter_ps > 0.0).then(|| Normal::new(0.0, d.jitter_ps).expect("validated")))
        .collect();
    let mut out = Vec::with_capacity(arrivals.len());
    for a in arrivals {
        let det = &detectors[a.channel as usize];
        let mut rng = substream(seed, Domain::Detection, a.pulse_index, a.slot as u64);
        if rng.random::<f64>() >= det.efficiency {
            report.missed += 1;
            continue;
        }
        let mut t = a.t as i64;
        if let Some(n) = &jitter[a.channel as usize] {
            t += n.sample(&mut rng).round() as i64;
        }
        if t < 0 {
            report.clamped += 1;
            t = 0;
        }
        out.push(TimeTag::new(a.channel, t as u64));
    }
    out
}

/// Homogeneous Poisson dark counts on `channel` within `window`.
pub(crate) fn dark_counts(
    det: &DetectorConfig,
    channel: u8,
    window: Range<u64>,
    seed: u64,
) -> Vec<TimeTag> {
    let mut out = Vec::new();
    if det.dark_rate_hz <= 0.0 || window.is_empty() {
        return out;
    }
    let mean = det.dark_rate_hz * DARK_BLOCK_PS as f64 * 1e-12;
    let poisson = Poisson::new(mean).expect("positive mean");
    let first = window.start / DARK_BLOCK_PS;
    let last = (window.end - 1) / DARK_BLOCK_PS;
    for block in first..=last {
        let mut rng = substream(seed, Domain::DarkCounts, block, channel as u64);
        let n = poisson.sample(&mut rng) as u64;
        let base = block * DARK_BLOCK_PS;
        for _ in 0..n {
            let t = base + rng.random_range(0..DARK_BLOCK_PS);
            if window.contains(&t) {
                out.push(TimeTag::new(channel, t));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Drops every event that falls within `dead_time` of the previous accepted
/// event on the same channel. `stream` must be sorted.
pub fn apply_dead_time(stream: &mut Vec<TimeTag>, detectors: &[DetectorConfig]) -> u64 {
    if detectors.iter().all(|d| d.dead_time_ps == 0) {
        return 0;
    }
    let mut last: Vec<Option<u64>> = vec![None; 256];
    let before = stream.len();
    stream.retain(|tag| {
        let ch = tag.channel as usize;
        let dead = detectors.get(ch).map_or(0, |d| d.dead_time_ps);
        match last[ch] {
            Some(prev) if tag.t - prev < dead => false,
            _ => {
                last[ch] = Some(tag.t);
                true
            }
        }
    });
    (before - stream.len()) as u64
}

/// Converts splitter outputs into a sorted detection stream over `[0, duration)`.
///
/// Each photon clicks with the detector's efficiency and is displaced by
/// Gaussian jitter rounded to whole picoseconds; dark counts are added at
/// `dark_rate` per channel; finally events closer than the dead time to the
/// previous accepted event on their channel are removed.
pub fn detect(
    arrivals: &[Arrival],
    detectors: &[DetectorConfig],
    duration_ps: u64,
    seed: u64,
) -> Result<(Vec<TimeTag>, DetectReport)> {
    check_channels(arrivals, detectors)?;
    let mut report = DetectReport::default();
    let mut tags = detect_photons(arrivals, detectors, seed, &mut report);
    for (ch, det) in detectors.iter().enumerate() {
        let dark = dark_counts(det, ch as u8, 0..duration_ps, seed);
        report.dark_counts += dark.len() as u64;
        tags.extend(dark);
    }
    tags.sort_unstable();
    report.dead_time_dropped = apply_dead_time(&mut tags, detectors);
    Ok((tags, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrivals(times: &[(u8, u64)]) -> Vec<Arrival> {
        times
            .iter()
            .enumerate()
            .map(|(i, &(channel, t))| Arrival { channel, t, pulse_index: i as u64, slot: 0 })
            .collect()
    }

    #[test]
    fn ideal_detector_is_transparent() {
        let a = arrivals(&[(0, 500), (1, 100), (1, 100_000), (0, 7)]);
        let dets = [DetectorConfig::default(), DetectorConfig::default()];
        let (tags, report) = detect(&a, &dets, 1_000_000, 1).unwrap();
        assert_eq!(
            tags,
            vec![TimeTag::new(0, 7), TimeTag::new(1, 100), TimeTag::new(0, 500), TimeTag::new(1, 100_000)]
        );
        assert_eq!(report, DetectReport::default());
    }

    #[test]
    fn pure_dark_counts_are_poissonian() {
        let det = DetectorConfig { dark_rate_hz: 100.0, ..Default::default() };
        let dets = [det.clone(), det];
        let mut per_channel = Vec::new();
        for seed in 0..40 {
            let (tags, report) = detect(&[], &dets, 1_000_000_000_000, seed).unwrap();
            assert_eq!(report.dark_counts as usize, tags.len());
            for ch in 0..2u8 {
                per_channel.push(tags.iter().filter(|t| t.channel == ch).count() as f64);
            }
        }
        let n = per_channel.len() as f64;
        let mean = per_channel.iter().sum::<f64>() / n;
        let var = per_channel.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // 80 samples of Poisson(100): mean within ~4 SE, dispersion near 1.
        assert!((mean - 100.0).abs() < 4.0 * (100.0f64 / n).sqrt(), "{mean}");
        assert!((var / mean - 1.0).abs() < 0.5, "{var}");
    }

    #[test]
    fn dark_counts_do_not_depend_on_window_split() {
        let det = DetectorConfig { dark_rate_hz: 5e5, ..Default::default() };
        let whole = dark_counts(&det, 1, 0..100_000_000, 9);
        let mut parts = dark_counts(&det, 1, 0..31_234_567, 9);
        parts.extend(dark_counts(&det, 1, 31_234_567..100_000_000, 9));
        assert_eq!(whole, parts);
        assert!(!whole.is_empty());
    }

    #[test]
    fn dead_time_enforces_minimum_spacing() {
        let det = DetectorConfig { dead_time_ps: 50_000, dark_rate_hz: 2e7, ..Default::default() };
        let dets = [det.clone(), det];
        let (tags, report) = detect(&[], &dets, 100_000_000_000, 4).unwrap();
        assert!(report.dead_time_dropped > 0);
        for ch in 0..2 {
            let times: Vec<_> = tags.iter().filter(|t| t.channel == ch).map(|t| t.t).collect();
            assert!(times.windows(2).all(|w| w[1] - w[0] >= 50_000));
        }
    }

    #[test]
    fn negative_jitter_is_clamped_and_counted() {
        let det = DetectorConfig { jitter_ps: 1000.0, ..Default::default() };
        let a: Vec<_> = (0..2000).map(|i| Arrival { channel: 0, t: 0, pulse_index: i, slot: 0 }).collect();
        let (tags, report) = detect(&a, &[det], 10, 2).unwrap();
        assert!(report.clamped > 800 && report.clamped < 1200, "{}", report.clamped);
        assert!(tags.iter().filter(|t| t.t == 0).count() as u64 >= report.clamped);
    }

    #[test]
    fn efficiency_thins_binomially() {
        let det = DetectorConfig { efficiency: 0.25, ..Default::default() };
        let a: Vec<_> = (0..40_000).map(|i| Arrival { channel: 0, t: i * 10, pulse_index: i, slot: 0 }).collect();
        let (tags, report) = detect(&a, &[det], 1, 0).unwrap();
        assert_eq!(tags.len() as u64 + report.missed, 40_000);
        assert!((tags.len() as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn unknown_channel_is_rejected() {
        let a = arrivals(&[(3, 10)]);
        assert!(detect(&a, &[DetectorConfig::default()], 100, 0).is_err());
    }
}
