//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use photonmetrics::config;
use photonmetrics::correlate::{cross_correlate, cross_correlate_par, integrate_peaks, PeakSpec};
use photonmetrics::metrics::lm::{self, numeric_jacobian, Model, Options, Param};
use photonmetrics::metrics::{
    blinking_efficiency, corrected_indistinguishability, efficiency_budget, fit_blinking, fit_lifetime,
    g2_zero, reference_budget, tpi_visibility, BlinkingModel, Irf, LifetimeModel,
};
use photonmetrics::model::{PolarizationSetting, Topology};
use photonmetrics::profile::Profile;
use photonmetrics::simulate::{apply_dead_time, blinking_trajectory, simulate_run};
use photonmetrics::{Histogram, MetricResult, PeakAreas, RunConfig, TimeTag};

// Tolerances.
const M_S_DECIMALS: f64 = 1e-3;
const BUDGET_TOTAL: (f64, f64) = (0.24, 0.005);
const BUDGET_OVERALL: f64 = 0.005;
const BUDGET_CORRECTED: (f64, f64) = (0.021, 0.001);
const N_SIGMA: f64 = 3.0;
const G2_PULSES: u64 = 10_000_000;
const HOM_PULSES: u64 = 4_000_000;
const BLINK_PULSES: u64 = 16_000_000; // 200 ms at 80 MHz
const BLINK_REL: f64 = 0.05;
const BLINK_EFF: (f64, f64) = (0.269, 0.005);
const ORACLE_STREAMS: usize = 200;
const ORACLE_MAX_TAGS: usize = 10_000;
const TELEGRAPH_REL: f64 = 0.05;
const JACOBIAN_POINTS: usize = 100;
const JACOBIAN_REL: f64 = 1e-6;
const RECOVERY_REL: f64 = 1e-6;
const MIN_TAGS_PER_SEC: f64 = 1e6;
const MAX_GROWTH: f64 = 2.0;
const PERF_MAX_DELAY: u64 = 100_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// |value − target| within `N_SIGMA` of the simulation and reference errors combined.
fn within(m: MetricResult, target: f64, target_sigma: f64) -> (bool, f64) {
    let s = (m.sigma.powi(2) + target_sigma.powi(2)).sqrt();
    let d = (m.value - target).abs();
    (d <= N_SIGMA * s, d / s)
}

fn peaks_of(tags: &[TimeTag], spec: &PeakSpec) -> PeakAreas {
    let max_delay = spec.n_side as u64 * spec.spacing + spec.spacing / 2;
    let h = cross_correlate_par(tags, 0, 1, 100, max_delay, 64).unwrap();
    integrate_peaks(&h, spec).unwrap()
}

fn reference_arithmetic() -> Outcome {
    let rows = [(0.206, 0.194, 0.496), (0.917, 0.017, 0.950), (0.581, 0.029, 0.628), (0.845, 0.008, 0.860)];
    let mut pass = true;
    let mut parts = vec![];
    for (v, g, m) in rows {
        let r = corrected_indistinguishability(MetricResult::exact(v), MetricResult::exact(g)).unwrap();
        let rounded = (r.value * 1000.0).round() / 1000.0;
        pass &= (rounded - m).abs() < M_S_DECIMALS / 2.0;
        parts.push(format!("({v},{g})->{:.4}", r.value));
    }
    outcome(pass, parts.join(" "))
}

fn budget() -> Outcome {
    let r = efficiency_budget(&reference_budget()).unwrap();
    let pass = (r.total_transmission - BUDGET_TOTAL.0).abs() <= BUDGET_TOTAL.1
        && (r.overall_efficiency - BUDGET_OVERALL).abs() < 1e-12
        && (r.corrected_efficiency - BUDGET_CORRECTED.0).abs() <= BUDGET_CORRECTED.1;
    outcome(
        pass,
        format!(
            "total {:.6}, overall {:.4}%, corrected {:.3}%",
            r.total_transmission,
            100.0 * r.overall_efficiency,
            100.0 * r.corrected_efficiency
        ),
    )
}

fn closed_loop_g2() -> Outcome {
    let cfg = config::parse("run.profile = la_phonon\nemitter.target_g2 = 0.017\n").unwrap();
    let out = simulate_run(&cfg, G2_PULSES, 101).unwrap();
    let g = g2_zero(&peaks_of(&out.tags, &PeakSpec::default())).unwrap();
    // The configured g² is exact, so only the Poisson error applies.
    let (pass, dev) = within(g, 0.017, 0.0);
    outcome(pass, format!("g2 = {:.5} ± {:.5} ({dev:.2} sigma, {} pulses)", g.value, g.sigma, G2_PULSES))
}

fn hom_metrics(profile: Profile, seed: u64) -> (MetricResult, MetricResult, MetricResult) {
    let base: RunConfig = profile.run_config();
    let spec = PeakSpec::default();
    let run = |topology, pol, k| {
        let mut c = base.clone();
        c.optics.topology = topology;
        c.optics.polarization = pol;
        peaks_of(&simulate_run(&c, HOM_PULSES, seed + k).unwrap().tags, &spec)
    };
    let g = g2_zero(&run(Topology::Hbt, PolarizationSetting::Parallel, 0)).unwrap();
    let par = run(Topology::Hom, PolarizationSetting::Parallel, 1);
    let orth = run(Topology::Hom, PolarizationSetting::Orthogonal, 2);
    let v = tpi_visibility(&par, &orth).unwrap();
    let m = corrected_indistinguishability(v, g).unwrap();
    (g, v, m)
}

fn closed_loop_hom() -> Outcome {
    let t = Profile::LaPhonon.targets();
    let (tv, tm) = (t.v_tpi.unwrap(), t.m_s.unwrap());
    let (_, v, m) = hom_metrics(Profile::LaPhonon, 202);
    let (pv, dv) = within(v, tv.value, tv.sigma);
    let (pm, dm) = within(m, tm.value, tm.sigma);
    let (_, vi, _) = hom_metrics(Profile::Ideal, 303);
    let pi = (vi.value - 1.0).abs() <= N_SIGMA * vi.sigma;
    outcome(
        pv && pm && pi,
        format!(
            "LA-phonon V = {:.4} ± {:.4} ({dv:.2} sigma), M_s = {:.4} ± {:.4} ({dm:.2} sigma); ideal V = {:.5} ± {:.5}",
            v.value, v.sigma, m.value, m.sigma, vi.value, vi.sigma
        ),
    )
}

fn closed_loop_blinking() -> Outcome {
    let cfg = Profile::LaPhononBlinking.run_config();
    let (a, tau) = (cfg.emitter.blink_strength, cfg.emitter.blink_tau_ps);
    let out = simulate_run(&cfg, BLINK_PULSES, 404).unwrap();
    let spec = PeakSpec { n_side: 120, ..Default::default() };
    let fit = fit_blinking(&peaks_of(&out.tags, &spec)).unwrap();
    let ra = (fit.a.value / a - 1.0).abs();
    let rt = (fit.tau_b_ps.value / tau - 1.0).abs();
    let eff = blinking_efficiency(fit.a.value);
    let pass = ra <= BLINK_REL && rt <= BLINK_REL && (eff - BLINK_EFF.0).abs() <= BLINK_EFF.1;
    outcome(
        pass,
        format!(
            "A = {:.4} ({:+.2}%), tau_B = {:.1} ns ({:+.2}%), efficiency {:.2}% over {} ms",
            fit.a.value,
            100.0 * (fit.a.value / a - 1.0),
            fit.tau_b_ps.value / 1e3,
            100.0 * (fit.tau_b_ps.value / tau - 1.0),
            100.0 * eff,
            BLINK_PULSES * cfg.emitter.period_ps() / 1_000_000_000
        ),
    )
}

/// All ordered pairs, no windowing tricks.
fn brute_force(stream: &[TimeTag], a: u8, b: u8, bin: u64, max: u64) -> Vec<u64> {
    let m = max as i64;
    let mut counts = vec![0u64; (2 * max / bin) as usize];
    for (i, x) in stream.iter().enumerate() {
        if x.channel != a {
            continue;
        }
        for (j, y) in stream.iter().enumerate() {
            if i == j || y.channel != b {
                continue;
            }
            let d = y.t as i64 - x.t as i64;
            if d >= -m && d < m {
                counts[((d + m) as u64 / bin) as usize] += 1;
            }
        }
    }
    counts
}

fn oracle_stream(k: usize) -> Vec<TimeTag> {
    let mut rng = ChaCha8Rng::seed_from_u64(5000 + k as u64);
    let n = rng.random_range(1..=ORACLE_MAX_TAGS);
    match k % 4 {
        // Uniform random with many exact ties.
        0 => {
            let span = (n as u64 * rng.random_range(1..200)).max(1);
            let mut s: Vec<_> = (0..n).map(|_| TimeTag::new(rng.random_range(0..3), rng.random_range(0..span))).collect();
            s.sort();
            s
        }
        // Simulated stream with heavy dark counts.
        1 => {
            let mut cfg = Profile::Resonance1.run_config();
            for d in &mut cfg.detectors {
                d.dark_rate_hz = 2e6;
            }
            let mut s = simulate_run(&cfg, 40_000, k as u64).unwrap().tags;
            s.truncate(n);
            s
        }
        // Simulated HOM stream after dead-time filtering.
        2 => {
            let mut cfg = Profile::LaPhonon.run_config();
            cfg.optics.topology = Topology::Hom;
            for d in &mut cfg.detectors {
                d.dead_time_ps = 20_000;
                d.dark_rate_hz = 1e5;
            }
            let mut s = simulate_run(&cfg, 40_000, k as u64).unwrap().tags;
            s.truncate(n);
            s
        }
        // Bursts of identical timestamps, then dead time applied by hand.
        _ => {
            let mut s = Vec::with_capacity(n);
            let mut t = 0u64;
            while s.len() < n {
                t += rng.random_range(0..5_000);
                for _ in 0..rng.random_range(1..4) {
                    s.push(TimeTag::new(rng.random_range(0..2), t));
                }
            }
            s.truncate(n);
            s.sort();
            let mut det = Profile::Ideal.detector();
            det.dead_time_ps = 1_000;
            apply_dead_time(&mut s, &[det.clone(), det]);
            s
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let results: Vec<(usize, Option<String>)> = (0..ORACLE_STREAMS)
        .into_par_iter()
        .map(|k| {
            let s = oracle_stream(k);
            let (a, b) = if k % 5 == 0 { (0, 0) } else { (0, 1) };
            let (bin, max) = (100, 30_000);
            let oracle = brute_force(&s, a, b, bin, max);
            let single = cross_correlate(&s, a, b, bin, max).unwrap();
            let chunked = cross_correlate_par(&s, a, b, bin, max, 1 + k % 7).unwrap();
            let ok = single.counts() == oracle.as_slice()
                && chunked == single
                && single.total() == oracle.iter().sum::<u64>();
            (s.len(), (!ok).then(|| format!("stream {k} ({} tags)", s.len())))
        })
        .collect();
    let tags: usize = results.iter().map(|r| r.0).sum();
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.1).collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{ORACLE_STREAMS} streams, {tags} tags, all bins exact")
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    )
}

/// Normalized autocorrelation of the bright-state indicator, fitted with
/// `g0·(1 + A·e^(−t/τ))`.
fn telegraph() -> Outcome {
    let (a, tau) = (2.71, 294_000.0);
    let dt = 10_000.0;
    let duration = 3e10; // ~1e5 blinking times
    let traj = blinking_trajectory(a, tau, duration, 77).unwrap();
    let x: Vec<f64> = traj.sample(dt).into_iter().map(|b| b as u8 as f64).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let lags: Vec<usize> = (1..=200).collect();
    let g: Vec<f64> = lags
        .par_iter()
        .map(|&k| {
            let n = x.len() - k;
            let s: f64 = x[..n].iter().zip(&x[k..]).map(|(p, q)| p * q).sum();
            s / n as f64 / (mean * mean)
        })
        .collect();
    let model = BlinkingModel { delays: lags.iter().map(|&k| k as f64 * dt).collect() };
    let params = [
        Param::log("g0", 1.0, 1e-3, 1e3),
        Param::log("a", 1.0, 1e-9, 1e3),
        Param::log("tau", 1e5, 1e3, 1e8),
    ];
    let fit = lm::fit(&model, &g, &vec![1.0; g.len()], &params, &Options::default()).unwrap();
    let (fa, ft) = (fit.params[1], fit.params[2]);
    let pass = (fa / a - 1.0).abs() <= TELEGRAPH_REL && (ft / tau - 1.0).abs() <= TELEGRAPH_REL;
    outcome(
        pass,
        format!(
            "A = {fa:.4} ({:+.2}%), tau = {:.1} ns ({:+.2}%), on-fraction {:.4} (expected {:.4})",
            100.0 * (fa / a - 1.0),
            ft / 1e3,
            100.0 * (ft / tau - 1.0),
            traj.on_fraction(),
            blinking_efficiency(a)
        ),
    )
}

/// Largest column-wise relative difference between two Jacobians.
fn jacobian_error(an: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    (0..an.ncols())
        .map(|k| {
            let scale = an.column(k).amax().max(f64::MIN_POSITIVE);
            (an.column(k) - fd.column(k)).amax() / scale
        })
        .fold(0.0, f64::max)
}

/// Central differences with a relative step, widened where a column's
/// parameter is small next to the model values and roundoff would dominate.
fn scaled_differences(model: &dyn Model, p: &[f64], an: &DMatrix<f64>) -> DMatrix<f64> {
    let peak = model.values(p).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut j = DMatrix::zeros(model.n_points(), p.len());
    for k in 0..p.len() {
        let slope = an.column(k).amax().max(f64::MIN_POSITIVE);
        let h = (1e-6 * p[k].abs().max(1.0)).max(1e-7 * peak / slope);
        let (mut hi, mut lo) = (p.to_vec(), p.to_vec());
        hi[k] += h;
        lo[k] -= h;
        let (fh, fl) = (model.values(&hi), model.values(&lo));
        for i in 0..fh.len() {
            j[(i, k)] = (fh[i] - fl[i]) / (2.0 * h);
        }
    }
    j
}

fn lifetime_edges() -> Vec<f64> {
    (0..=600).map(|j| -2000.0 + 20.0 * j as f64).collect()
}

fn measured_irf(width: f64) -> Irf {
    let mut h = Histogram::new(2, -400, 400).unwrap();
    for j in 0..h.len() {
        let c = h.bin_center(j) / width;
        h.add_to_bin(j, (1e9 * (-0.5 * c * c).exp()).round() as u64);
    }
    Irf::measured(&h).unwrap()
}

fn fit_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();

    let mut worst_blink: f64 = 0.0;
    let delays: Vec<f64> = (1..=120).flat_map(|k| [-25_000.0 * k as f64, 25_000.0 * k as f64]).collect();
    let blink = BlinkingModel { delays };
    for _ in 0..JACOBIAN_POINTS {
        let p = [
            log_uniform(&mut rng, 10.0, 1e6),
            log_uniform(&mut rng, 0.01, 10.0),
            log_uniform(&mut rng, 1e4, 1e6),
        ];
        worst_blink = worst_blink.max(jacobian_error(&blink.jacobian(&p), &numeric_jacobian(&blink, &p, 1e-6)));
    }

    let mut worst_life: f64 = 0.0;
    for i in 0..JACOBIAN_POINTS {
        let irf = match i % 3 {
            0 => Irf::Gaussian { sigma_ps: 0.0 },
            1 => Irf::Gaussian { sigma_ps: rng.random_range(5.0..100.0) },
            _ => measured_irf(rng.random_range(10.0..60.0)),
        };
        let model = LifetimeModel { edges: lifetime_edges(), irf };
        let p = [
            log_uniform(&mut rng, 50.0, 2000.0),
            rng.random_range(-200.0..500.0),
            log_uniform(&mut rng, 1e3, 1e8),
            log_uniform(&mut rng, 0.1, 100.0),
        ];
        let an = model.jacobian(&p);
        worst_life = worst_life.max(jacobian_error(&an, &scaled_differences(&model, &p, &an)));
    }

    // Exact-model data; counts large enough that integer rounding sits far below tolerance.
    let mut worst_recovery: f64 = 0.0;
    for _ in 0..10 {
        let (a0, a, tau) = (log_uniform(&mut rng, 1e11, 1e13), log_uniform(&mut rng, 0.3, 5.0), log_uniform(&mut rng, 1e5, 6e5));
        let centers: Vec<i64> = (-120..=120).map(|k| k * 25_000).collect();
        let areas = centers.iter().map(|&c| BlinkingModel::eval(a0, a, tau, c as f64).round() as u64).collect();
        let fit = fit_blinking(&PeakAreas::new(centers, areas, 3000, 25_000)).unwrap();
        for (got, want) in [(fit.a0.value, a0), (fit.a.value, a), (fit.tau_b_ps.value, tau)] {
            worst_recovery = worst_recovery.max((got / want - 1.0).abs());
        }

        let sigma = rng.random_range(0.0..80.0);
        let truth = [log_uniform(&mut rng, 100.0, 1500.0), rng.random_range(0.0..400.0), 1e13, 1e5];
        let model = LifetimeModel { edges: lifetime_edges(), irf: Irf::Gaussian { sigma_ps: sigma } };
        let counts = model.values(&truth).iter().map(|v| v.round() as u64).collect();
        let h = Histogram::from_counts(20, -2000, counts).unwrap();
        let fit = fit_lifetime(&h, Irf::Gaussian { sigma_ps: sigma }).unwrap();
        for (got, want) in [(fit.t1_ps.value, truth[0]), (fit.amplitude.value, truth[2]), (fit.background.value, truth[3])] {
            worst_recovery = worst_recovery.max((got / want - 1.0).abs());
        }
        worst_recovery = worst_recovery.max((fit.t0_ps.value - truth[1]).abs() / truth[0]);
    }

    let pass = worst_blink <= JACOBIAN_REL && worst_life <= JACOBIAN_REL && worst_recovery <= RECOVERY_REL;
    outcome(
        pass,
        format!(
            "jacobian rel err blinking {worst_blink:.1e}, lifetime {worst_life:.1e}; exact-model recovery {worst_recovery:.1e}"
        ),
    )
}

fn uniform_stream(n: usize, mean_gap: u64, seed: u64) -> Vec<TimeTag> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0u64;
    (0..n)
        .map(|_| {
            t += rng.random_range(0..2 * mean_gap);
            TimeTag::new(rng.random_range(0..2), t)
        })
        .collect()
}

fn timed(f: impl Fn() -> Histogram) -> Duration {
    let start = Instant::now();
    std::hint::black_box(f());
    start.elapsed()
}

fn performance() -> Outcome {
    // 10 MHz combined tag rate: about two partners per tag inside ±100 ns.
    let n = 2_000_000;
    let large = uniform_stream(2 * n, 100_000, 1);
    let small = &large[..n];
    let corr = |s: &[TimeTag]| cross_correlate(s, 0, 1, 100, PERF_MAX_DELAY).unwrap();
    corr(&large);
    // Interleaved so that drift in machine load hits both sizes alike.
    let (mut t1, mut t2) = (Duration::MAX, Duration::MAX);
    for _ in 0..9 {
        t1 = t1.min(timed(|| corr(small)));
        t2 = t2.min(timed(|| corr(&large)));
    }
    let rate = n as f64 / t1.as_secs_f64();
    let ratio = t2.as_secs_f64() / t1.as_secs_f64();
    outcome(
        rate >= MIN_TAGS_PER_SEC && ratio <= MAX_GROWTH,
        format!("{:.2e} tags/s single-threaded, time ratio for 2x tags {ratio:.3}", rate),
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects nothing here.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        ("reference M_s arithmetic", reference_arithmetic),
        ("efficiency budget", budget),
        ("closed-loop g2", closed_loop_g2),
        ("closed-loop HOM", closed_loop_hom),
        ("closed-loop blinking", closed_loop_blinking),
        ("oracle equivalence", oracle_equivalence),
        ("telegraph autocorrelation", telegraph),
        ("fit correctness", fit_correctness),
        ("correlator performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !args.is_empty() && !args.iter().any(|a| name.contains(a.as_str())) {
            continue;
        }
        let start = Instant::now();
        let r = check();
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("{status} {}. {name}: {} [{:.1?}]", i + 1, r.detail, start.elapsed());
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
