//! Correlation and decay histograms from time-tag streams.
//!
//! Delay convention: `d = t_b - t_a` for a tag `a` on `ch_a` and a tag `b` on
//! `ch_b`; a correlation histogram covers `[-max_delay, +max_delay)`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{first_unsorted, Histogram, PeakAreas, TimeTag};
use crate::{Error, Result};

/// Streaming cross-correlator.
///
/// Tags are fed in time order, possibly over several calls; only tags within
/// `max_delay` of the newest one are retained, so memory is bounded by the
/// window occupancy and the cost is linear in tags plus counted pairs.
#[derive(Debug, Clone)]
pub struct Correlator {
    ch_a: u8,
    ch_b: u8,
    bin_width: u64,
    max_delay: i64,
    recent: VecDeque<TimeTag>,
    last_t: Option<u64>,
    seen: usize,
    hist: Histogram,
}

impl Correlator {
    pub fn new(ch_a: u8, ch_b: u8, bin_width: u64, max_delay: u64) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::InvalidParameter("bin width must be >= 1 ps".into()));
        }
        if max_delay == 0 || !max_delay.is_multiple_of(bin_width) {
            return Err(Error::InvalidParameter(format!(
                "max delay {max_delay} ps must be a positive multiple of the bin width {bin_width} ps"
            )));
        }
        let n_bins = (2 * max_delay / bin_width) as usize;
        Ok(Self {
            ch_a,
            ch_b,
            bin_width,
            max_delay: max_delay as i64,
            recent: VecDeque::new(),
            last_t: None,
            seen: 0,
            hist: Histogram::new(bin_width, -(max_delay as i64), n_bins)?,
        })
    }

    /// Adds context tags that precede the data to be counted: they are
    /// remembered as partners but their own pairs are not counted. Used when a
    /// stream is split into chunks.
    pub fn prime(&mut self, context: &[TimeTag]) -> Result<()> {
        for (i, &tag) in context.iter().enumerate() {
            self.check_order(tag, i)?;
            self.evict(tag.t);
            if tag.channel == self.ch_a || tag.channel == self.ch_b {
                self.recent.push_back(tag);
            }
        }
        Ok(())
    }

    fn check_order(&mut self, tag: TimeTag, i: usize) -> Result<()> {
        if self.last_t.is_some_and(|last| tag.t < last) {
            return Err(Error::Unsorted { index: self.seen + i });
        }
        self.last_t = Some(tag.t);
        Ok(())
    }

    fn evict(&mut self, now: u64) {
        while let Some(front) = self.recent.front() {
            if (now - front.t) as i64 > self.max_delay {
                self.recent.pop_front();
            } else {
                break;
            }
        }
    }

    #[inline]
    fn record(&mut self, d: i64) {
        let j = ((d + self.max_delay) as u64 / self.bin_width) as usize;
        self.hist.increment(j);
    }

    pub fn push(&mut self, tags: &[TimeTag]) -> Result<()> {
        for (i, &tag) in tags.iter().enumerate() {
            self.check_order(tag, i)?;
            let is_a = tag.channel == self.ch_a;
            let is_b = tag.channel == self.ch_b;
            if !is_a && !is_b {
                continue;
            }
            self.evict(tag.t);
            for k in 0..self.recent.len() {
                let prev = self.recent[k];
                let gap = (tag.t - prev.t) as i64;
                // Earlier a, new b: d = +gap, must stay below +max_delay.
                if is_b && prev.channel == self.ch_a && gap < self.max_delay {
                    self.record(gap);
                }
                // Earlier b, new a: d = -gap >= -max_delay (guaranteed by eviction).
                if is_a && prev.channel == self.ch_b {
                    self.record(-gap);
                }
            }
            self.recent.push_back(tag);
        }
        self.seen += tags.len();
        Ok(())
    }

    pub fn finish(self) -> Histogram {
        self.hist
    }

    pub fn histogram(&self) -> &Histogram {
        &self.hist
    }
}

/// Histogram of delays `t_b - t_a` over all ordered pairs of distinct tags
/// with `a` on `ch_a` and `b` on `ch_b`, for delays in `[-max_delay, max_delay)`.
///
/// With `ch_a == ch_b` this is the autocorrelation: every pair of distinct
/// tags appears once with each sign, and a tag is never paired with itself.
pub fn cross_correlate(
    stream: &[TimeTag],
    ch_a: u8,
    ch_b: u8,
    bin_width: u64,
    max_delay: u64,
) -> Result<Histogram> {
    let mut c = Correlator::new(ch_a, ch_b, bin_width, max_delay)?;
    c.push(stream)?;
    Ok(c.finish())
}

/// Same result as [`cross_correlate`], computed over `chunks` pieces in
/// parallel. Each piece is primed with the preceding tags inside the window
/// so that pairs across chunk boundaries are counted exactly once.
pub fn cross_correlate_par(
    stream: &[TimeTag],
    ch_a: u8,
    ch_b: u8,
    bin_width: u64,
    max_delay: u64,
    chunks: usize,
) -> Result<Histogram> {
    if let Some(index) = first_unsorted(stream) {
        return Err(Error::Unsorted { index });
    }
    let chunks = chunks.max(1);
    let size = stream.len().div_ceil(chunks).max(1);
    let template = Correlator::new(ch_a, ch_b, bin_width, max_delay)?;
    let parts: Vec<Histogram> = (0..stream.len().div_ceil(size))
        .into_par_iter()
        .map(|i| {
            let lo = i * size;
            let hi = (lo + size).min(stream.len());
            let mut c = template.clone();
            if lo > 0 {
                let horizon = stream[lo].t.saturating_sub(max_delay);
                let from = stream[..lo].partition_point(|t| t.t < horizon);
                c.prime(&stream[from..lo])?;
            }
            c.push(&stream[lo..hi])?;
            Ok(c.finish())
        })
        .collect::<Result<_>>()?;
    let mut total = template.finish();
    for h in &parts {
        total.merge_from(h)?;
    }
    Ok(total)
}

/// Arrival-time histogram of channel `ch` folded on the excitation clock:
/// counts of `(t - offset) mod sync_period`, origin 0.
pub fn sync_histogram(
    stream: &[TimeTag],
    ch: u8,
    sync_period: u64,
    bin_width: u64,
    offset: i64,
) -> Result<Histogram> {
    if sync_period == 0 {
        return Err(Error::InvalidParameter("sync period must be > 0".into()));
    }
    if bin_width == 0 {
        return Err(Error::InvalidParameter("bin width must be >= 1 ps".into()));
    }
    let n_bins = sync_period.div_ceil(bin_width) as usize;
    let mut h = Histogram::new(bin_width, 0, n_bins)?;
    let period = sync_period as i128;
    for tag in stream.iter().filter(|t| t.channel == ch) {
        let phase = (tag.t as i128 - offset as i128).rem_euclid(period) as u64;
        h.increment((phase / bin_width) as usize);
    }
    Ok(h)
}

/// Where to integrate correlation peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    /// Nominal distance between peaks, ps.
    pub spacing: u64,
    /// Integration window centered on each peak, ps.
    pub window: u64,
    /// Number of peaks on each side of zero delay.
    pub n_side: usize,
    /// Re-center each window on the local centroid instead of the nominal delay.
    pub recenter: bool,
}

impl Default for PeakSpec {
    fn default() -> Self {
        Self { spacing: 25_000, window: 3_000, n_side: 2, recenter: false }
    }
}

/// Sums the counts of bins whose centers lie in `[lo, hi)`.
fn window_sum(h: &Histogram, lo: f64, hi: f64) -> u64 {
    (0..h.len())
        .filter(|&j| {
            let c = h.bin_center(j);
            c >= lo && c < hi
        })
        .map(|j| h.counts()[j])
        .sum()
}

fn centroid(h: &Histogram, lo: f64, hi: f64) -> Option<f64> {
    let (mut w, mut s) = (0.0, 0.0);
    for j in 0..h.len() {
        let c = h.bin_center(j);
        if c >= lo && c < hi {
            let n = h.counts()[j] as f64;
            w += n;
            s += n * c;
        }
    }
    (w > 0.0).then(|| s / w)
}

/// Integrates the peaks at `k·spacing` for `k = -n_side..=n_side`.
///
/// Each area is the sum of counts in `[c - window/2, c + window/2)`, bins
/// assigned by their center. Fails if any window reaches outside `h`.
pub fn integrate_peaks(h: &Histogram, spec: &PeakSpec) -> Result<PeakAreas> {
    if spec.window == 0 || spec.spacing == 0 {
        return Err(Error::InvalidParameter("peak window and spacing must be positive".into()));
    }
    if spec.window > spec.spacing {
        return Err(Error::InvalidParameter(format!(
            "peak window {} ps exceeds spacing {} ps",
            spec.window, spec.spacing
        )));
    }
    let n = spec.n_side as i64;
    let half = spec.window as f64 / 2.0;
    let mut centers = Vec::with_capacity(2 * spec.n_side + 1);
    let mut areas = Vec::with_capacity(2 * spec.n_side + 1);
    for k in -n..=n {
        let c = k * spec.spacing as i64;
        let lo = c - (spec.window / 2) as i64;
        let hi = c + spec.window.div_ceil(2) as i64;
        if lo < h.origin() || hi > h.end() {
            return Err(Error::RangeTooSmall { center_ps: c, lo_ps: lo, hi_ps: hi });
        }
        let mut center = c as f64;
        if spec.recenter {
            let s = spec.spacing as f64 / 2.0;
            if let Some(m) = centroid(h, center - s, center + s) {
                center = m.clamp(h.origin() as f64 + half, h.end() as f64 - half);
            }
        }
        centers.push(c);
        areas.push(window_sum(h, center - half, center + half));
    }
    Ok(PeakAreas::new(centers, areas, spec.window, spec.spacing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n²) oracle over all ordered pairs.
    fn brute_force(stream: &[TimeTag], a: u8, b: u8, bw: u64, max: u64) -> Vec<u64> {
        let m = max as i64;
        let mut counts = vec![0u64; (2 * max / bw) as usize];
        for (i, x) in stream.iter().enumerate() {
            for (j, y) in stream.iter().enumerate() {
                if i == j || x.channel != a || y.channel != b {
                    continue;
                }
                let d = y.t as i64 - x.t as i64;
                if d >= -m && d < m {
                    counts[((d + m) as u64 / bw) as usize] += 1;
                }
            }
        }
        counts
    }

    #[test]
    fn single_pair_lands_in_its_bin() {
        let s = [TimeTag::new(0, 0), TimeTag::new(1, 10_000)];
        let h = cross_correlate(&s, 0, 1, 1000, 50_000).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts()[h.bin_of(10_000).unwrap()], 1);
        assert_eq!(h.bin_of(10_000), Some(60));
    }

    #[test]
    fn empty_channel_gives_zero_histogram() {
        let s = [TimeTag::new(0, 0), TimeTag::new(0, 10)];
        let h = cross_correlate(&s, 0, 1, 100, 1000).unwrap();
        assert_eq!(h.len(), 20);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn unsorted_stream_reports_index() {
        let s = [TimeTag::new(0, 5), TimeTag::new(1, 9), TimeTag::new(0, 3)];
        match cross_correlate(&s, 0, 1, 1, 10) {
            Err(Error::Unsorted { index }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(cross_correlate_par(&s, 0, 1, 1, 10, 2), Err(Error::Unsorted { index: 2 })));
    }

    #[test]
    fn rejects_misaligned_max_delay() {
        assert!(cross_correlate(&[], 0, 1, 300, 1000).is_err());
        assert!(cross_correlate(&[], 0, 1, 0, 1000).is_err());
    }

    #[test]
    fn edges_are_half_open() {
        let s = [TimeTag::new(0, 1000), TimeTag::new(1, 2000), TimeTag::new(1, 0)];
        let mut sorted = s.to_vec();
        sorted.sort();
        // +1000 is excluded, -1000 is included.
        let h = cross_correlate(&sorted, 0, 1, 100, 1000).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts()[0], 1);
    }

    #[test]
    fn autocorrelation_excludes_self_pairs() {
        let s = [TimeTag::new(0, 10), TimeTag::new(0, 10), TimeTag::new(0, 15)];
        let h = cross_correlate(&s, 0, 0, 1, 100).unwrap();
        assert_eq!(h.counts(), brute_force(&s, 0, 0, 1, 100).as_slice());
        // two d=0 pairs from the duplicate, plus ±5 for each of the two
        assert_eq!(h.total(), 6);
    }

    #[test]
    fn sync_histogram_folds_on_period() {
        let s: Vec<_> = (0..10).map(|k| TimeTag::new(0, k * 12_500)).collect();
        let h = sync_histogram(&s, 0, 12_500, 100, 0).unwrap();
        assert_eq!(h.counts()[0], 10);
        assert_eq!(h.total(), 10);
        let h = sync_histogram(&s, 0, 12_500, 100, -250).unwrap();
        assert_eq!(h.counts()[2], 10);
        assert_eq!(sync_histogram(&[], 0, 12_500, 100, 0).unwrap().total(), 0);
        assert!(sync_histogram(&s, 0, 0, 100, 0).is_err());
    }

    fn delta_peaks() -> Histogram {
        let mut h = Histogram::new(100, -60_000, 1200).unwrap();
        for c in [-50_000i64, -25_000, 0, 25_000, 50_000] {
            h.add_to_bin(h.bin_of(c).unwrap(), 100);
        }
        h
    }

    #[test]
    fn delta_peaks_integrate_exactly() {
        let p = integrate_peaks(&delta_peaks(), &PeakSpec::default()).unwrap();
        assert_eq!(p.centers, vec![-50_000, -25_000, 0, 25_000, 50_000]);
        assert_eq!(p.areas, vec![100; 5]);
        assert!(p.errors.iter().all(|&e| e == 10.0));
    }

    #[test]
    fn flat_histogram_gives_equal_areas() {
        let h = Histogram::from_counts(100, -60_000, vec![7; 1200]).unwrap();
        let p = integrate_peaks(&h, &PeakSpec::default()).unwrap();
        assert!(p.areas.iter().all(|&a| a == 7 * 30));
    }

    #[test]
    fn counts_outside_windows_do_not_matter() {
        let mut h = delta_peaks();
        for t in [-58_000i64, -12_000, 1_500, 10_000, 23_499, 40_000] {
            h.add_to_bin(h.bin_of(t).unwrap(), 1000);
        }
        let p = integrate_peaks(&h, &PeakSpec::default()).unwrap();
        assert_eq!(p.areas, vec![100; 5]);
    }

    #[test]
    fn missing_peak_is_named() {
        let h = Histogram::new(100, -30_000, 600).unwrap();
        match integrate_peaks(&h, &PeakSpec::default()) {
            Err(Error::RangeTooSmall { center_ps, .. }) => assert_eq!(center_ps, -50_000),
            other => panic!("{other:?}"),
        }
        let spec = PeakSpec { window: 30_000, ..Default::default() };
        assert!(integrate_peaks(&delta_peaks(), &spec).is_err());
    }

    #[test]
    fn recentering_follows_shifted_peaks() {
        let mut h = Histogram::new(100, -60_000, 1200).unwrap();
        for c in [-50_000i64, -25_000, 0, 25_000, 50_000] {
            h.add_to_bin(h.bin_of(c + 1_400).unwrap(), 100);
            h.add_to_bin(h.bin_of(c + 1_600).unwrap(), 100);
        }
        let fixed = integrate_peaks(&h, &PeakSpec::default()).unwrap();
        assert!(fixed.areas.iter().all(|&a| a == 100));
        let spec = PeakSpec { recenter: true, ..Default::default() };
        let moved = integrate_peaks(&h, &spec).unwrap();
        assert!(moved.areas.iter().all(|&a| a == 200), "{:?}", moved.areas);
    }

    fn stream_strategy() -> impl Strategy<Value = Vec<TimeTag>> {
        proptest::collection::vec((0u8..3, 0u64..20_000), 0..300).prop_map(|v| {
            let mut s: Vec<_> = v.into_iter().map(|(c, t)| TimeTag::new(c, t)).collect();
            s.sort();
            s
        })
    }

    proptest! {
        #[test]
        fn streaming_matches_brute_force(s in stream_strategy(), a in 0u8..3, b in 0u8..3) {
            let h = cross_correlate(&s, a, b, 50, 2_000).unwrap();
            let oracle = brute_force(&s, a, b, 50, 2_000);
            prop_assert_eq!(h.counts(), oracle.as_slice());
            prop_assert_eq!(h.total(), h.counts().iter().sum::<u64>());
        }

        #[test]
        fn chunked_matches_single_pass(s in stream_strategy(), chunks in 1usize..9) {
            let whole = cross_correlate(&s, 0, 1, 100, 3_000).unwrap();
            let par = cross_correlate_par(&s, 0, 1, 100, 3_000, chunks).unwrap();
            prop_assert_eq!(&whole, &par);
            let auto = cross_correlate(&s, 2, 2, 100, 3_000).unwrap();
            prop_assert_eq!(auto, cross_correlate_par(&s, 2, 2, 100, 3_000, chunks).unwrap());
        }

        #[test]
        fn split_push_matches_single_push(s in stream_strategy(), cut in 0usize..300) {
            let cut = cut.min(s.len());
            let mut c = Correlator::new(0, 1, 100, 3_000).unwrap();
            c.push(&s[..cut]).unwrap();
            c.push(&s[cut..]).unwrap();
            prop_assert_eq!(c.finish(), cross_correlate(&s, 0, 1, 100, 3_000).unwrap());
        }

        #[test]
        fn merge_commutes_and_associates(
            x in proptest::collection::vec(0u64..1000, 16),
            y in proptest::collection::vec(0u64..1000, 16),
            z in proptest::collection::vec(0u64..1000, 16),
        ) {
            let h = |v: Vec<u64>| Histogram::from_counts(10, -80, v).unwrap();
            let (a, b, c) = (h(x), h(y), h(z));
            prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
            prop_assert_eq!(
                a.merge(&b).unwrap().merge(&c).unwrap(),
                a.merge(&b.merge(&c).unwrap()).unwrap()
            );
        }
    }
}
