//! Monte Carlo generation of detection streams for the HBT and HOM setups.
//!
//! The pipeline per pulse range is emission → demultiplexer → splitter →
//! detectors. Ranges are processed in parallel; because every random draw is
//! keyed by pulse index, the output does not depend on the worker count.

mod blinking;
mod detect;
mod emission;
mod optics;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

pub use blinking::{blinking_trajectory, BlinkTrajectory};
pub use detect::{apply_dead_time, detect, DetectReport};
pub use emission::{generate_emissions, trajectory_for};
pub use optics::{beamsplitter, pair_overlap, route_demux, Arrival};

use crate::model::{RunConfig, TimeTag, Topology};
use crate::{Error, Result};

/// Pulses per parallel work item. Even, so pulse pairs never straddle items.
const CHUNK_PULSES: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub pulses: u64,
    pub photons_emitted: u64,
    /// Photons lost at the blocked splitter input (HBT only).
    pub photons_blocked: u64,
    pub detection: DetectReport,
    pub tags: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub tags: Vec<TimeTag>,
    pub report: SimReport,
}

/// Simulates pulses `0..n_pulses`.
pub fn simulate_run(cfg: &RunConfig, n_pulses: u64, seed: u64) -> Result<SimOutput> {
    simulate_range(cfg, 0..n_pulses, seed)
}

/// Simulates the pulses in `range`, as they would appear within a longer run
/// with the same seed. Dark counts cover `[start, end)` pulse periods.
/// `range.start` must be even so that pulse pairs stay together.
pub fn simulate_range(cfg: &RunConfig, range: Range<u64>, seed: u64) -> Result<SimOutput> {
    cfg.validate()?;
    if range.is_empty() {
        return Err(Error::InvalidParameter("pulse range must be non-empty".into()));
    }
    if range.start % 2 == 1 {
        return Err(Error::InvalidParameter("pulse range must start at an even pulse".into()));
    }
    let period = cfg.emitter.period_ps();
    let trajectory = trajectory_for(&cfg.emitter, range.end, seed)?;

    let starts: Vec<u64> = (range.start..range.end).step_by(CHUNK_PULSES as usize).collect();
    let chunks: Vec<(Vec<TimeTag>, SimReport)> = starts
        .par_iter()
        .map(|&c0| {
            let c1 = (c0 + CHUNK_PULSES).min(range.end);
            simulate_chunk(cfg, &trajectory, c0..c1, period, seed)
        })
        .collect::<Result<_>>()?;

    let mut report = SimReport { pulses: range.end - range.start, ..Default::default() };
    let mut streams = Vec::with_capacity(chunks.len());
    for (tags, r) in chunks {
        report.photons_emitted += r.photons_emitted;
        report.photons_blocked += r.photons_blocked;
        report.detection.add(&r.detection);
        streams.push(tags);
    }
    let mut tags = merge_sorted(streams);
    report.detection.dead_time_dropped = apply_dead_time(&mut tags, &cfg.detectors);
    report.tags = tags.len() as u64;
    Ok(SimOutput { tags, report })
}

fn simulate_chunk(
    cfg: &RunConfig,
    trajectory: &BlinkTrajectory,
    pulses: Range<u64>,
    period: u64,
    seed: u64,
) -> Result<(Vec<TimeTag>, SimReport)> {
    let mut report = SimReport::default();
    let photons = emission::emissions_for_range(&cfg.emitter, trajectory, pulses.clone(), seed);
    report.photons_emitted = photons.len() as u64;

    let (arm1, mut arm2) = route_demux(&photons, &cfg.optics, seed);
    if cfg.optics.topology == Topology::Hbt {
        report.photons_blocked = arm2.len() as u64;
        arm2.clear();
    }
    let arrivals = beamsplitter(&arm1, &arm2, &cfg.optics, seed)?;

    let mut tags = detect::detect_photons(&arrivals, &cfg.detectors, seed, &mut report.detection);
    let window = pulses.start * period..pulses.end * period;
    for (ch, det) in cfg.detectors.iter().enumerate() {
        let dark = detect::dark_counts(det, ch as u8, window.clone(), seed);
        report.detection.dark_counts += dark.len() as u64;
        tags.extend(dark);
    }
    tags.sort_unstable();
    Ok((tags, report))
}

/// k-way merge of individually sorted streams.
pub fn merge_sorted(streams: Vec<Vec<TimeTag>>) -> Vec<TimeTag> {
    let total = streams.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(total);
    let mut heap: BinaryHeap<Reverse<(TimeTag, usize, usize)>> = streams
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| Reverse((s[0], i, 0)))
        .collect();
    while let Some(Reverse((tag, i, j))) = heap.pop() {
        out.push(tag);
        if let Some(&next) = streams[i].get(j + 1) {
            heap.push(Reverse((next, i, j + 1)));
        }
    }
    out
}
