//! Plain-text run configuration.
//!
//! One `section.key = value` assignment per line, `#` starts a comment.
//! Sections: `run`, `emitter`, `optics`, `detector` (both channels),
//! `detector.ch0` / `detector.ch1` (one channel) and `target`. Unknown keys
//! are rejected so that typos do not silently fall back to defaults.
//!
//! `run.profile` loads a preset first; every other key overrides it,
//! regardless of line order. `emitter.target_g2` and `emitter.target_overlap`
//! derive `epsilon` and `sigma_detuning_rad_per_ps` from a desired g²(0) and
//! mean pair overlap.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{PolarizationSetting, RunConfig, Target, Topology};
use crate::profile::{self, Profile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    BadValue { key: String, line: usize, msg: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

const DETECTOR_KEYS: [&str; 4] = ["efficiency", "jitter_ps", "dead_time_ps", "dark_rate_hz"];

const KEYS: &[&str] = &[
    "run.profile",
    "run.pulses",
    "run.seed",
    "emitter.rep_rate_hz",
    "emitter.p_exc",
    "emitter.t1_ps",
    "emitter.epsilon",
    "emitter.target_g2",
    "emitter.blink_strength",
    "emitter.blink_tau_ps",
    "emitter.sigma_detuning_rad_per_ps",
    "emitter.target_overlap",
    "emitter.refill_tau_ps",
    "optics.mode",
    "optics.polarization",
    "optics.demux_period_ps",
    "optics.arm_delay_ps",
    "optics.splitter_ratio",
    "optics.demux_leakage",
    "target.g2",
    "target.g2_sigma",
    "target.v_tpi",
    "target.v_tpi_sigma",
    "target.m_s",
    "target.m_s_sigma",
];

fn is_known(key: &str) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    let field = key
        .strip_prefix("detector.ch0.")
        .or_else(|| key.strip_prefix("detector.ch1."))
        .or_else(|| key.strip_prefix("detector."));
    field.is_some_and(|f| DETECTOR_KEYS.contains(&f))
}

struct Entry {
    value: String,
    line: usize,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| ConfigError::BadValue {
                key: key.to_string(),
                line: e.line,
                msg: err.to_string(),
            }),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.parse::<f64>(key)?;
        if let (Some(x), Some(e)) = (v, self.get(key)) {
            if !x.is_finite() {
                return Err(ConfigError::BadValue {
                    key: key.into(),
                    line: e.line,
                    msg: "must be finite".into(),
                });
            }
        }
        Ok(v)
    }

    /// Integers may be written in float notation (`1e8`) as long as they are whole.
    fn u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        let Some(e) = self.get(key) else { return Ok(None) };
        parse_count(&e.value)
            .map(Some)
            .map_err(|msg| ConfigError::BadValue { key: key.into(), line: e.line, msg })
    }

    fn optional_f64(&self, key: &str) -> Result<Option<Option<f64>>, ConfigError> {
        match self.get(key) {
            Some(e) if e.value.eq_ignore_ascii_case("none") => Ok(Some(None)),
            Some(_) => Ok(Some(self.f64(key)?)),
            None => Ok(None),
        }
    }
}

/// Parses a non-negative whole number, accepting `1e8` style notation.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative whole number"));
    }
    Ok(x as u64)
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !is_known(&key) {
            return Err(ConfigError::UnknownKey { key, line });
        }
        if map.contains_key(&key) {
            return Err(ConfigError::Duplicate { key, line });
        }
        map.insert(key, Entry { value, line });
    }
    Ok(Entries(map))
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = tokenize(text)?;

    let mut cfg = match entries.get("run.profile") {
        Some(e) => {
            let p: Profile = e.value.parse().map_err(|msg| ConfigError::BadValue {
                key: "run.profile".into(),
                line: e.line,
                msg,
            })?;
            p.run_config()
        }
        None => RunConfig::default(),
    };
    if let Some(n) = entries.u64("run.pulses")? {
        cfg.pulses = Some(n);
    }
    if let Some(s) = entries.u64("run.seed")? {
        cfg.seed = Some(s);
    }

    let em = &mut cfg.emitter;
    macro_rules! set_f64 {
        ($field:expr, $key:literal) => {
            if let Some(v) = entries.f64($key)? {
                $field = v;
            }
        };
    }
    set_f64!(em.rep_rate_hz, "emitter.rep_rate_hz");
    set_f64!(em.p_exc, "emitter.p_exc");
    set_f64!(em.t1_ps, "emitter.t1_ps");
    set_f64!(em.epsilon, "emitter.epsilon");
    set_f64!(em.blink_strength, "emitter.blink_strength");
    set_f64!(em.blink_tau_ps, "emitter.blink_tau_ps");
    set_f64!(em.sigma_detuning, "emitter.sigma_detuning_rad_per_ps");
    if let Some(v) = entries.optional_f64("emitter.refill_tau_ps")? {
        em.refill_tau_ps = v;
    }

    if let Some(g2) = entries.f64("emitter.target_g2")? {
        let e = entries.get("emitter.target_g2").unwrap();
        if entries.get("emitter.epsilon").is_some() {
            return Err(ConfigError::BadValue {
                key: "emitter.target_g2".into(),
                line: e.line,
                msg: "conflicts with emitter.epsilon".into(),
            });
        }
        em.epsilon = profile::epsilon_for_g2(g2).map_err(|msg| ConfigError::BadValue {
            key: "emitter.target_g2".into(),
            line: e.line,
            msg,
        })?;
    }
    if let Some(m) = entries.f64("emitter.target_overlap")? {
        let e = entries.get("emitter.target_overlap").unwrap();
        if entries.get("emitter.sigma_detuning_rad_per_ps").is_some() {
            return Err(ConfigError::BadValue {
                key: "emitter.target_overlap".into(),
                line: e.line,
                msg: "conflicts with emitter.sigma_detuning_rad_per_ps".into(),
            });
        }
        em.sigma_detuning = profile::detuning_for_mean_overlap(m, 1.0 / em.t1_ps).map_err(
            |msg| ConfigError::BadValue { key: "emitter.target_overlap".into(), line: e.line, msg },
        )?;
    }

    let op = &mut cfg.optics;
    if let Some(e) = entries.get("optics.mode") {
        op.topology = match e.value.to_ascii_lowercase().as_str() {
            "hbt" => Topology::Hbt,
            "hom" => Topology::Hom,
            _ => {
                return Err(ConfigError::BadValue {
                    key: "optics.mode".into(),
                    line: e.line,
                    msg: "expected `hbt` or `hom`".into(),
                })
            }
        };
    }
    if let Some(e) = entries.get("optics.polarization") {
        op.polarization = parse_polarization(&e.value).ok_or_else(|| ConfigError::BadValue {
            key: "optics.polarization".into(),
            line: e.line,
            msg: "expected `parallel` or `orthogonal`".into(),
        })?;
    }
    if let Some(v) = entries.u64("optics.demux_period_ps")? {
        op.demux_period_ps = v;
    }
    if let Some(v) = entries.u64("optics.arm_delay_ps")? {
        op.arm_delay_ps = v;
    }
    set_f64!(op.splitter_ratio, "optics.splitter_ratio");
    set_f64!(op.demux_leakage, "optics.demux_leakage");

    for prefix in ["detector", "detector.ch0", "detector.ch1"] {
        let channels: &[usize] = match prefix {
            "detector" => &[0, 1],
            "detector.ch0" => &[0],
            _ => &[1],
        };
        for &ch in channels {
            let d = &mut cfg.detectors[ch];
            if let Some(v) = entries.f64(&format!("{prefix}.efficiency"))? {
                d.efficiency = v;
            }
            if let Some(v) = entries.f64(&format!("{prefix}.jitter_ps"))? {
                d.jitter_ps = v;
            }
            if let Some(v) = entries.u64(&format!("{prefix}.dead_time_ps"))? {
                d.dead_time_ps = v;
            }
            if let Some(v) = entries.f64(&format!("{prefix}.dark_rate_hz"))? {
                d.dark_rate_hz = v;
            }
        }
    }

    let targets = &mut cfg.targets;
    for (slot, name) in
        [(&mut targets.g2, "g2"), (&mut targets.v_tpi, "v_tpi"), (&mut targets.m_s, "m_s")]
    {
        let key = format!("target.{name}");
        let sigma_key = format!("target.{name}_sigma");
        match entries.optional_f64(&key)? {
            Some(None) => *slot = None,
            Some(Some(value)) => {
                let sigma = entries.f64(&sigma_key)?.unwrap_or(0.0);
                *slot = Some(Target { value, sigma });
            }
            None => {
                if let Some(sigma) = entries.f64(&sigma_key)? {
                    let t = slot.as_mut().ok_or_else(|| ConfigError::Invalid {
                        key: sigma_key.clone(),
                        msg: format!("given without {key}"),
                    })?;
                    t.sigma = sigma;
                }
            }
        }
    }

    cfg.validate()?;
    Ok(cfg)
}

fn parse_polarization(s: &str) -> Option<PolarizationSetting> {
    match s.to_ascii_lowercase().as_str() {
        "parallel" | "par" => Some(PolarizationSetting::Parallel),
        "orthogonal" | "orth" | "perpendicular" => Some(PolarizationSetting::Orthogonal),
        _ => None,
    }
}

/// Writes every field explicitly so that parsing the output reproduces `cfg`.
pub fn to_string(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    if let Some(p) = &cfg.profile {
        let _ = writeln!(w, "run.profile = {p}");
    }
    if let Some(n) = cfg.pulses {
        let _ = writeln!(w, "run.pulses = {n}");
    }
    if let Some(n) = cfg.seed {
        let _ = writeln!(w, "run.seed = {n}");
    }
    let e = &cfg.emitter;
    let _ = writeln!(w, "emitter.rep_rate_hz = {:?}", e.rep_rate_hz);
    let _ = writeln!(w, "emitter.p_exc = {:?}", e.p_exc);
    let _ = writeln!(w, "emitter.t1_ps = {:?}", e.t1_ps);
    let _ = writeln!(w, "emitter.epsilon = {:?}", e.epsilon);
    let _ = writeln!(w, "emitter.blink_strength = {:?}", e.blink_strength);
    let _ = writeln!(w, "emitter.blink_tau_ps = {:?}", e.blink_tau_ps);
    let _ = writeln!(w, "emitter.sigma_detuning_rad_per_ps = {:?}", e.sigma_detuning);
    match e.refill_tau_ps {
        Some(t) => writeln!(w, "emitter.refill_tau_ps = {t:?}"),
        None => writeln!(w, "emitter.refill_tau_ps = none"),
    }
    .ok();
    let o = &cfg.optics;
    let mode = match o.topology {
        Topology::Hbt => "hbt",
        Topology::Hom => "hom",
    };
    let pol = match o.polarization {
        PolarizationSetting::Parallel => "parallel",
        PolarizationSetting::Orthogonal => "orthogonal",
    };
    let _ = writeln!(w, "optics.mode = {mode}");
    let _ = writeln!(w, "optics.polarization = {pol}");
    let _ = writeln!(w, "optics.demux_period_ps = {}", o.demux_period_ps);
    let _ = writeln!(w, "optics.arm_delay_ps = {}", o.arm_delay_ps);
    let _ = writeln!(w, "optics.splitter_ratio = {:?}", o.splitter_ratio);
    let _ = writeln!(w, "optics.demux_leakage = {:?}", o.demux_leakage);
    for (i, d) in cfg.detectors.iter().enumerate() {
        let _ = writeln!(w, "detector.ch{i}.efficiency = {:?}", d.efficiency);
        let _ = writeln!(w, "detector.ch{i}.jitter_ps = {:?}", d.jitter_ps);
        let _ = writeln!(w, "detector.ch{i}.dead_time_ps = {}", d.dead_time_ps);
        let _ = writeln!(w, "detector.ch{i}.dark_rate_hz = {:?}", d.dark_rate_hz);
    }
    let t = &cfg.targets;
    for (name, target) in [("g2", t.g2), ("v_tpi", t.v_tpi), ("m_s", t.m_s)] {
        match target {
            Some(t) => {
                let _ = writeln!(w, "target.{name} = {:?}", t.value);
                let _ = writeln!(w, "target.{name}_sigma = {:?}", t.sigma);
            }
            None => {
                let _ = writeln!(w, "target.{name} = none");
            }
        }
    }
    s
}
