//! Simulation and analysis toolkit for pulsed single-photon sources.
//!
//! The crate has two halves that meet at the time-tag stream:
//!
//! * [`simulate`] produces detection streams from a Monte Carlo model of a
//!   blinking quantum emitter feeding a demultiplexed Hanbury Brown–Twiss (HBT)
//!   or Hong–Ou–Mandel (HOM) setup with imperfect detectors.
//! * [`correlate`] and [`metrics`] turn any such stream (simulated or read from
//!   a time tagger) into correlation histograms, peak areas and figures of
//!   merit: g²(0), two-photon interference visibility, corrected
//!   indistinguishability, blinking parameters, lifetime and efficiency.
//!
//! All stream and histogram times are integer picoseconds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod correlate;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod profile;
pub mod rng;
pub mod simulate;
mod special;

pub use error::{Error, Result};
pub use model::{
    DetectorConfig, EmitterConfig, Histogram, LossBudget, MetricResult, OpticsConfig, PeakAreas,
    PhotonRecord, Polarization, RunConfig, Topology, TimeTag,
};
