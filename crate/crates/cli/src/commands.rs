use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use photonmetrics::correlate::{cross_correlate_par, integrate_peaks, sync_histogram, PeakSpec};
use photonmetrics::metrics::{self, Irf};
use photonmetrics::model::{PeakAreas, PolarizationSetting, Topology};
use photonmetrics::profile::Profile;
use photonmetrics::rng::derive_seed;
use photonmetrics::simulate::simulate_run;
use photonmetrics::{config, io, Error, Histogram, MetricResult, RunConfig, TimeTag};

use crate::report::*;
use crate::PeakArgs;

const DEFAULT_PULSES: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidTopology(_) => {
                CliError::Config(e.to_string())
            }
            Error::Fit(_) => CliError::Fit(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<metrics::FitError> for CliError {
    fn from(e: metrics::FitError) -> Self {
        CliError::Fit(e.to_string())
    }
}

impl From<metrics::MetricError> for CliError {
    fn from(e: metrics::MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::FormatError> for CliError {
    fn from(e: io::FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| data_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_hist(path: &Path, h: &Histogram) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| data_err(path, e))?;
    io::write_histogram_csv(f, h).map_err(|e| data_err(path, e))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(|e| data_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| data_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Reads a tag file, checks ordering, and collects provenance.
fn load(path: &Path) -> Result<(Vec<TimeTag>, InputInfo), CliError> {
    let tags = io::read_tags(path).map_err(|e| data_err(path, e))?;
    io::check_sorted(&tags).map_err(|e| data_err(path, e))?;
    let seed = std::fs::read_to_string(manifest_path(path))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("seed").and_then(|s| s.as_u64()));
    let info = InputInfo {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
        tags: tags.len(),
        seed,
    };
    Ok((tags, info))
}

fn require_channels(tags: &[TimeTag], channels: &[u8], path: &str) -> Result<(), CliError> {
    for &ch in channels {
        if !tags.iter().any(|t| t.channel == ch) {
            return Err(CliError::Data(format!("{path}: no tags on channel {ch}")));
        }
    }
    Ok(())
}

fn settings(args: &PeakArgs, default_n_side: usize) -> Result<CorrelationSettings, CliError> {
    let n_side = args.n_side.unwrap_or(default_n_side);
    if args.bin_width == 0 {
        return Err(CliError::Config("--bin must be at least 1 ps".into()));
    }
    if args.window == 0 || args.window > args.spacing {
        return Err(CliError::Config(format!(
            "--window {} ps must be positive and at most --spacing {} ps",
            args.window, args.spacing
        )));
    }
    // Cover the outermost peak plus half a spacing, in whole bins.
    let reach = n_side as u64 * args.spacing + args.spacing / 2;
    let max_delay = reach.div_ceil(args.bin_width) * args.bin_width;
    Ok(CorrelationSettings {
        ch_a: args.ch_a,
        ch_b: args.ch_b,
        bin_width_ps: args.bin_width,
        max_delay_ps: max_delay,
        window_ps: args.window,
        spacing_ps: args.spacing,
        n_side,
        recenter: args.recenter,
    })
}

fn correlate_and_integrate(tags: &[TimeTag], s: &CorrelationSettings) -> Result<(Histogram, PeakAreas), CliError> {
    let chunks = rayon::current_num_threads() * 4;
    let h = cross_correlate_par(tags, s.ch_a, s.ch_b, s.bin_width_ps, s.max_delay_ps, chunks)?;
    let spec = PeakSpec { spacing: s.spacing_ps, window: s.window_ps, n_side: s.n_side, recenter: s.recenter };
    let p = integrate_peaks(&h, &spec)?;
    Ok((h, p))
}

fn side_areas(p: &PeakAreas) -> Vec<u64> {
    p.side_peaks().map(|(_, a)| a).collect()
}

/// Builds the run config from an optional preset name and an optional file;
/// file keys override the preset.
fn load_config(path: Option<&Path>, profile: Option<&str>) -> Result<RunConfig, CliError> {
    let mut text = String::new();
    if let Some(name) = profile {
        let p: Profile = name.parse().map_err(CliError::Config)?;
        text.push_str(&format!("run.profile = {p}\n"));
    }
    if let Some(path) = path {
        let file = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        text.push_str(&file);
    }
    config::parse(&text).map_err(|e| {
        let origin = path.map_or_else(|| "config".to_string(), |p| p.display().to_string());
        CliError::Config(format!("{origin}: {e}"))
    })
}

fn pulses_and_seed(cfg: &RunConfig, pulses: Option<&str>, seed: Option<u64>) -> Result<(u64, u64), CliError> {
    let pulses = match pulses {
        Some(s) => config::parse_count(s).map_err(|e| CliError::Config(format!("--pulses: {e}")))?,
        None => cfg.pulses.unwrap_or(DEFAULT_PULSES),
    };
    if pulses == 0 {
        return Err(CliError::Config("--pulses must be positive".into()));
    }
    Ok((pulses, seed.or(cfg.seed).unwrap_or(0)))
}

pub fn simulate(
    config_path: Option<&Path>,
    profile: Option<&str>,
    output: &Path,
    seed: Option<u64>,
    pulses: Option<&str>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path, profile)?;
    let (pulses, seed) = pulses_and_seed(&cfg, pulses, seed)?;
    cfg.pulses = Some(pulses);
    cfg.seed = Some(seed);
    let warnings = cfg.warnings();
    for w in &warnings {
        warn!("{w}");
    }
    info!("simulating {pulses} pulses with seed {seed}");
    let out = simulate_run(&cfg, pulses, seed)?;
    io::write_tags(output, &out.tags).map_err(|e| data_err(output, e))?;
    if let Some(path) = csv {
        let f = BufWriter::new(File::create(path).map_err(|e| data_err(path, e))?);
        io::write_tags_csv(f, &out.tags).map_err(|e| data_err(path, e))?;
    }
    let manifest = RunManifest {
        tool: "photonmetrics",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        pulses,
        output: output.display().to_string(),
        sha256: sha256_file(output)?,
        simulation: out.report,
        warnings,
        config_text: config::to_string(&cfg),
        config: cfg,
    };
    write_json(Some(&manifest_path(output)), &manifest)?;
    eprintln!("wrote {} tags to {}", out.tags.len(), output.display());
    Ok(())
}

pub fn g2(input: &Path, args: &PeakArgs, output: Option<&Path>, hist: Option<&Path>) -> Result<(), CliError> {
    let s = settings(args, 2)?;
    let (tags, info) = load(input)?;
    require_channels(&tags, &[s.ch_a, s.ch_b], &info.path)?;
    let (h, peaks) = correlate_and_integrate(&tags, &s)?;
    if let Some(path) = hist {
        write_hist(path, &h)?;
    }
    let g = metrics::g2_zero(&peaks)?;
    let report = G2Report {
        metric: "g2",
        value: g.value,
        sigma: g.sigma,
        a0: peaks.central().unwrap_or(0),
        side_areas: side_areas(&peaks),
        peaks,
        input: info,
        settings: s,
    };
    write_json(output, &report)
}

fn hist_with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("_{suffix}.csv"));
    PathBuf::from(s)
}

pub fn hom(
    parallel: &Path,
    orthogonal: &Path,
    args: &PeakArgs,
    g2: Option<(f64, f64)>,
    output: Option<&Path>,
    hist: Option<&Path>,
) -> Result<(), CliError> {
    let s = settings(args, 2)?;
    let (tags_par, info_par) = load(parallel)?;
    let (tags_orth, info_orth) = load(orthogonal)?;
    require_channels(&tags_par, &[s.ch_a, s.ch_b], &info_par.path)?;
    require_channels(&tags_orth, &[s.ch_a, s.ch_b], &info_orth.path)?;
    let (h_par, p_par) = correlate_and_integrate(&tags_par, &s)?;
    let (h_orth, p_orth) = correlate_and_integrate(&tags_orth, &s)?;
    if let Some(prefix) = hist {
        write_hist(&hist_with_suffix(prefix, "parallel"), &h_par)?;
        write_hist(&hist_with_suffix(prefix, "orthogonal"), &h_orth)?;
    }
    let v = metrics::tpi_visibility(&p_par, &p_orth)?;
    let g2 = g2.map(|(value, sigma)| MetricResult::new(value, sigma));
    let m_s = g2.map(|g| metrics::corrected_indistinguishability(v, g)).transpose()?;
    let report = HomReport {
        metric: "v_tpi",
        value: v.value,
        sigma: v.sigma,
        a_parallel: p_par.central().unwrap_or(0),
        a_orthogonal: p_orth.central().unwrap_or(0),
        side_areas_parallel: side_areas(&p_par),
        side_areas_orthogonal: side_areas(&p_orth),
        parallel: info_par,
        orthogonal: info_orth,
        corrected_indistinguishability: m_s,
        g2,
        settings: s,
    };
    write_json(output, &report)
}

pub fn blinking(input: &Path, args: &PeakArgs, output: Option<&Path>, hist: Option<&Path>) -> Result<(), CliError> {
    let s = settings(args, 120)?;
    let (tags, info) = load(input)?;
    require_channels(&tags, &[s.ch_a, s.ch_b], &info.path)?;
    let (h, peaks) = correlate_and_integrate(&tags, &s)?;
    if let Some(path) = hist {
        write_hist(path, &h)?;
    }
    let fit = metrics::fit_blinking(&peaks)?;
    let message = fit.no_blinking.then(|| "no blinking detected".to_string());
    if let Some(m) = &message {
        warn!("{m}");
    }
    write_json(output, &BlinkingReport { metric: "blinking", fit, message, peaks, input: info, settings: s })
}

pub fn lifetime(input: &Path, s: LifetimeSettings, output: Option<&Path>, hist: Option<&Path>) -> Result<(), CliError> {
    if s.sync_period_ps == 0 || s.bin_width_ps == 0 {
        return Err(CliError::Config("--sync-period and --bin must be positive".into()));
    }
    let (tags, info) = load(input)?;
    require_channels(&tags, &[s.channel], &info.path)?;
    let decay = sync_histogram(&tags, s.channel, s.sync_period_ps, s.bin_width_ps, s.offset_ps)?;
    if let Some(path) = hist {
        write_hist(path, &decay)?;
    }
    let irf = match (&s.irf_file, s.irf_sigma_ps) {
        (Some(path), _) => {
            let path = Path::new(path);
            let (irf_tags, irf_info) = load(path)?;
            require_channels(&irf_tags, &[s.channel], &irf_info.path)?;
            let h = sync_histogram(&irf_tags, s.channel, s.sync_period_ps, s.bin_width_ps, s.offset_ps)?;
            Irf::measured(&h)?
        }
        (None, Some(sigma)) => Irf::Gaussian { sigma_ps: sigma },
        (None, None) => Irf::Gaussian { sigma_ps: 0.0 },
    };
    let fit = metrics::fit_lifetime(&decay, irf)?;
    let message = fit
        .unresolved
        .then(|| "lifetime not resolved: the decay is consistent with the instrument response alone".to_string());
    if let Some(m) = &message {
        warn!("{m}");
    }
    write_json(output, &LifetimeReport { metric: "lifetime", fit, message, input: info, settings: s })
}

pub fn characterize(
    config_path: Option<&Path>,
    profile: Option<&str>,
    seed: Option<u64>,
    pulses: Option<&str>,
    args: &PeakArgs,
    output: Option<&Path>,
    hist_dir: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = load_config(config_path, profile)?;
    let (pulses, seed) = pulses_and_seed(&cfg, pulses, seed)?;
    let s = settings(args, 2)?;
    if let Some(dir) = hist_dir {
        std::fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }

    let stage = |name: &str, topology: Topology, pol: PolarizationSetting, k: u64| {
        let mut c = cfg.clone();
        c.optics.topology = topology;
        c.optics.polarization = pol;
        let stage_seed = derive_seed(seed, k);
        info!("{name}: {pulses} pulses, seed {stage_seed}");
        let out = simulate_run(&c, pulses, stage_seed)?;
        let (h, peaks) = correlate_and_integrate(&out.tags, &s)?;
        if let Some(dir) = hist_dir {
            write_hist(&dir.join(format!("{name}.csv")), &h)?;
        }
        Ok::<_, CliError>(StageReport { seed: stage_seed, simulation: out.report, peaks })
    };
    let hbt = stage("hbt", Topology::Hbt, cfg.optics.polarization, 0)?;
    let par = stage("hom_parallel", Topology::Hom, PolarizationSetting::Parallel, 1)?;
    let orth = stage("hom_orthogonal", Topology::Hom, PolarizationSetting::Orthogonal, 2)?;

    let g = metrics::g2_zero(&hbt.peaks)?;
    let v = metrics::tpi_visibility(&par.peaks, &orth.peaks)?;
    let m = metrics::corrected_indistinguishability(v, g)?;
    let t = cfg.targets;
    let report = CharacterizeReport {
        metric: "characterize",
        profile: cfg.profile.clone(),
        seed,
        pulses,
        g2: Comparison::new(g, t.g2),
        v_tpi: Comparison::new(v, t.v_tpi),
        m_s: Comparison::new(m, t.m_s),
        targets: t,
        hbt,
        hom_parallel: par,
        hom_orthogonal: orth,
        settings: s,
        config: cfg,
    };
    write_json(output, &report)
}

pub fn budget(path: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let f = File::open(path).map_err(|e| data_err(path, e))?;
    let b = io::read_budget_csv(f).map_err(|e| data_err(path, e))?;
    let result = metrics::efficiency_budget(&b)?;
    write_json(output, &BudgetReport { metric: "efficiency_budget", result, budget: b })?;
    std::io::stdout().flush().ok();
    Ok(())
}
