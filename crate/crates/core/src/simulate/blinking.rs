//! Two-state telegraph model of emitter blinking.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::rng::{substream, Domain};
use crate::{Error, Result};

/// Piecewise-constant bright/dark history of the emitter over `[0, duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlinkTrajectory {
    initial_on: bool,
    /// Times (ps) at which the state flips, strictly increasing.
    switches: Vec<f64>,
    duration: f64,
}

impl BlinkTrajectory {
    pub fn always_on(duration: f64) -> Self {
        Self { initial_on: true, switches: Vec::new(), duration }
    }

    pub fn is_on(&self, t: f64) -> bool {
        let flips = self.switches.partition_point(|&s| s <= t);
        self.initial_on ^ (flips % 2 == 1)
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switches
    }

    pub fn initially_on(&self) -> bool {
        self.initial_on
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Fraction of `[0, duration)` spent in the bright state.
    pub fn on_fraction(&self) -> f64 {
        if self.duration <= 0.0 {
            return if self.initial_on { 1.0 } else { 0.0 };
        }
        let mut on_time = 0.0;
        let mut state = self.initial_on;
        let mut last = 0.0;
        for &s in &self.switches {
            if state {
                on_time += s - last;
            }
            state = !state;
            last = s;
        }
        if state {
            on_time += self.duration - last;
        }
        on_time / self.duration
    }

    /// Bright-state indicator sampled every `dt` ps starting at 0.
    pub fn sample(&self, dt: f64) -> Vec<bool> {
        let n = (self.duration / dt).floor() as usize;
        let mut out = Vec::with_capacity(n);
        let mut state = self.initial_on;
        let mut next = 0;
        for i in 0..n {
            let t = i as f64 * dt;
            while next < self.switches.len() && self.switches[next] <= t {
                state = !state;
                next += 1;
            }
            out.push(state);
        }
        out
    }
}

/// Draws a telegraph trajectory with bright-state probability `1/(1+a)` and
/// total switching rate `1/tau_b`, starting from the stationary distribution.
///
/// Its bright-state indicator has normalized autocorrelation
/// `1 + a·exp(-|t|/tau_b)`.
pub fn blinking_trajectory(a: f64, tau_b: f64, duration: f64, seed: u64) -> Result<BlinkTrajectory> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("blinking strength {a} must be >= 0")));
    }
    if !(tau_b > 0.0 && tau_b.is_finite()) {
        return Err(Error::InvalidParameter(format!("blinking time {tau_b} must be > 0")));
    }
    if a == 0.0 {
        return Ok(BlinkTrajectory::always_on(duration));
    }
    let p_on = 1.0 / (1.0 + a);
    let leave_on = Exp::new((1.0 - p_on) / tau_b).expect("positive rate");
    let leave_off = Exp::new(p_on / tau_b).expect("positive rate");

    let mut rng = substream(seed, Domain::Blinking, 0, 0);
    let initial_on = rng.random::<f64>() < p_on;
    let mut switches = Vec::new();
    let mut state = initial_on;
    let mut t = 0.0;
    loop {
        let dwell = if state { leave_on.sample(&mut rng) } else { leave_off.sample(&mut rng) };
        t += dwell;
        if t >= duration {
            break;
        }
        switches.push(t);
        state = !state;
    }
    Ok(BlinkTrajectory { initial_on, switches, duration })
}
