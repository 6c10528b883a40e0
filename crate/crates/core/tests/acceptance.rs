//! Acceptance criteria 1-11. Runs as a plain binary (`harness = false`) and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//!     cargo test --release --test acceptance

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as RefNormal};

use apd_pnr::analysis::{
    discrimination_errors, excess_noise, excess_noise_of_peak, place_thresholds, ClickTally,
    CountingSummary, MixtureModel, Peak, WidthMode,
};
use apd_pnr::detector::{simulate_run, Detector, DetectorConfig};
use apd_pnr::photonstat::PhotonFlux;
use apd_pnr::pipeline::{self, SimulationOutcome};
use apd_pnr::rng;
use apd_pnr::runspec::{self, RunSpec, RUN_PRESETS, SWEEP_PRESETS};
use apd_pnr::waveform::{
    extract_amplitudes, self_difference, synthesize_trace, Feedthrough, WaveformTrace,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn efficiency_run(trap_fill: Option<f64>) -> SimulationOutcome {
    let mut spec = runspec::run_preset("efficiency").unwrap();
    if let Some(f) = trap_fill {
        spec.detector.trap_fill = f;
    }
    pipeline::simulate(&spec).unwrap()
}

fn c1_c2_efficiency(s: &CountingSummary, secs: f64) -> (Outcome, Outcome) {
    let c1 = check(
        (s.eta_est - 0.738).abs() <= 0.010,
        format!(
            "eta = {:.4} +- {:.4} (target 0.738 +- 0.010), {secs:.1} s",
            s.eta_est, s.eta_stderr
        ),
    );
    let ratio = s.eta_est / 0.81;
    let c2 = check(
        (ratio - 0.911).abs() <= 0.013,
        format!("eta / 0.81 = {ratio:.4} (target 0.911 +- 0.013)"),
    );
    (c1, c2)
}

fn c3_dark() -> Outcome {
    let cfg = DetectorConfig {
        trap_fill: 0.0,
        ..runspec::run_preset("efficiency").unwrap().detector
    };
    let n = 100_000_000u64;
    let det = Detector::new(cfg.clone()).unwrap();
    let tally: ClickTally = det
        .stream(PhotonFlux::vacuum(), n, rng::stream(303, 0))
        .collect();
    let expected = cfg.dark_prob * n as f64;
    let clicks = tally.clicks() as f64;
    let p = tally.click_probability();
    check(
        (clicks - expected).abs() <= 3.0 * expected.sqrt(),
        format!(
            "p_dark = {p:.3e} ({clicks} clicks, expected {expected:.0} +- {:.1})",
            3.0 * expected.sqrt()
        ),
    )
}

fn c4_afterpulse(s: &CountingSummary) -> Outcome {
    let calibrated = (s.p_afterpulse - 0.075).abs() <= 0.005;

    let quiet = efficiency_run(Some(0.0));
    let q = quiet.counting.unwrap();
    let t = quiet.tally;
    // Excess dark clicks over the companion rate, Poisson counting error of
    // both runs.
    let n_dark_run = t.gates() as f64;
    let var = t.dark_gates as f64 * q.p_click_dark * (1.0 + t.dark_gates as f64 / n_dark_run);
    let se = var.sqrt() / t.illuminated_clicks as f64;
    let negligible = q.p_afterpulse <= 3.0 * se;
    check(
        calibrated && negligible,
        format!(
            "calibrated traps: {:.2}% (target 7.5 +- 0.5); trap_fill = 0: {:.3}% (3 SE = {:.3}%)",
            100.0 * s.p_afterpulse,
            100.0 * q.p_afterpulse,
            300.0 * se
        ),
    )
}

fn c5_fig4a() -> Outcome {
    let spec = runspec::run_preset("fig4a").unwrap();
    let out = pipeline::simulate(&spec).unwrap();
    let a = out.analysis.unwrap();
    let grid = [22.4, 43.1, 63.8, 85.5];
    let worst = grid
        .iter()
        .enumerate()
        .map(|(i, &m)| (a.fit.model.peaks[i + 1].mean_mv / m - 1.0).abs())
        .fold(0.0, f64::max);
    let mu = a.consistency.mu_det.mu();
    check(
        a.fit.is_valid() && worst <= 0.02 && (mu / 3.7 - 1.0).abs() <= 0.05,
        format!(
            "worst mean deviation {:.2}%, mu_det = {mu:.3} (target 3.7 +- 5%)",
            100.0 * worst
        ),
    )
}

fn c6_flux_sweep() -> Outcome {
    let spec = runspec::sweep_preset("fig4-sweep").unwrap();
    let out = pipeline::sweep(&spec, 3).unwrap();
    let w: Vec<f64> = out.flux.iter().map(|p| p.weight_multi).collect();
    let increasing = w.windows(2).all(|p| p[1] > p[0]);
    let converged = out.flux.iter().all(|p| p.converged);
    check(
        increasing && converged && w.len() == 3,
        format!("weight(N >= 2) = {w:.4?} at mu = 0.21, 1.82, 4.00; fits valid: {converged}"),
    )
}

/// Misclassification rate of each state under `thresholds` from `draws`
/// samples of its Gaussian.
fn mc_errors(model: &MixtureModel, thresholds: &[f64], draws: u64, seed: u64) -> Vec<f64> {
    model
        .peaks
        .iter()
        .map(|p| {
            let mut r = rng::stream(seed, p.n as u64);
            let d = Normal::new(p.mean_mv, p.sigma_mv).unwrap();
            let lo =
                p.n.checked_sub(1)
                    .map_or(f64::NEG_INFINITY, |i| thresholds[i]);
            let hi = thresholds.get(p.n).copied().unwrap_or(f64::INFINITY);
            let wrong = (0..draws)
                .filter(|_| {
                    let v = d.sample(&mut r);
                    !(v > lo && v <= hi)
                })
                .count();
            wrong as f64 / draws as f64
        })
        .collect()
}

fn peaks(list: &[(f64, f64)]) -> MixtureModel {
    let w = 1.0 / list.len() as f64;
    MixtureModel::new(
        list.iter()
            .enumerate()
            .map(|(n, &(mean_mv, sigma_mv))| Peak {
                n,
                mean_mv,
                sigma_mv,
                weight: w,
            })
            .collect(),
        WidthMode::Free,
    )
    .unwrap()
}

fn c7_oracle(fig5: &MixtureModel, fig4a: &MixtureModel) -> Outcome {
    let draws = 10_000_000u64;
    let s1 = 9.37;
    let scenarios = [
        ("fig5 fit", fig5.clone()),
        ("fig4a fit", fig4a.clone()),
        (
            "equal widths",
            peaks(&[(0.0, 6.0), (22.4, 6.0), (44.8, 6.0)]),
        ),
        (
            "sqrt(N) widths",
            peaks(&[
                (0.0, 4.0),
                (22.4, s1),
                (43.1, s1 * 2f64.sqrt()),
                (63.8, s1 * 3f64.sqrt()),
            ]),
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (i, (_, m)) in scenarios.iter().enumerate() {
        let t = place_thresholds(m).unwrap();
        let exact = discrimination_errors(m, &t).unwrap().errors;
        let mc = mc_errors(m, &t, draws, 700 + i as u64);
        for (e, o) in exact.iter().zip(&mc) {
            let se = (e * (1.0 - e) / draws as f64).sqrt();
            let z = if se > 0.0 { (o - e).abs() / se } else { 0.0 };
            ok &= (o - e).abs() <= 3.0 * se;
            worst = worst.max(z);
        }
    }

    // Equal widths against closed-form tails.
    let m = &scenarios[2].1;
    let e = discrimination_errors(m, &place_thresholds(m).unwrap())
        .unwrap()
        .errors;
    let q = RefNormal::new(0.0, 1.0).unwrap().sf(22.4 / 2.0 / 6.0);
    let tail_dev = (e[0] - q)
        .abs()
        .max((e[1] - 2.0 * q).abs())
        .max((e[2] - q).abs());
    ok &= tail_dev <= 1e-6;
    check(
        ok,
        format!(
            "{} scenarios, worst |MC - exact| = {worst:.2} SE; equal-width tail deviation {tail_dev:.1e}",
            scenarios.len()
        ),
    )
}

fn c8_fig5(out: &SimulationOutcome) -> Outcome {
    let a = out.analysis.as_ref().unwrap();
    let d = a.discrimination.as_ref().unwrap();
    let e = &d.result.errors;
    let target = [0.002, 0.122, 0.0695];
    let dev: Vec<f64> = e.iter().zip(target).map(|(x, t)| 100.0 * (x - t)).collect();
    let p = &a.fit.model.peaks;
    check(
        a.fit.is_valid() && dev.iter().all(|d| d.abs() <= 3.0),
        format!(
            "eps = {:.2}% / {:.2}% / {:.2}%, deviations {:+.2} / {:+.2} / {:+.2} pp; fitted sigma0 = {:.2} mV, sigma1 = {:.2} mV",
            100.0 * e[0],
            100.0 * e[1],
            100.0 * e[2],
            dev[0],
            dev[1],
            dev[2],
            p[0].sigma_mv,
            p[1].sigma_mv
        ),
    )
}

fn c9_excess_noise() -> Outcome {
    let closed = excess_noise_of_peak(22.4, 9.37).unwrap();
    let mut r = rng::stream(909, 0);
    let d = Normal::new(22.4, 9.37).unwrap();
    let sample: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut r)).collect();
    let est = excess_noise(&sample).unwrap();
    check(
        (closed - 1.175).abs() <= 0.001 && (est - closed).abs() <= 0.005,
        format!("closed form {closed:.5}, 10^6-draw estimate {est:.5}"),
    )
}

fn c10_self_differencing() -> Outcome {
    let p = 64;
    let mut r = rng::stream(1010, 0);
    let mut failures = Vec::new();

    // Period-exact input.
    let period: Vec<f64> = (0..p).map(|_| r.random_range(-500.0..500.0)).collect();
    let periodic = WaveformTrace::new(
        64e9,
        0.0,
        period.iter().cycle().take(p * 200).copied().collect(),
    )
    .unwrap();
    if self_difference(&periodic, p)
        .unwrap()
        .samples
        .iter()
        .any(|&v| v != 0.0)
    {
        failures.push("periodic input not annihilated");
    }

    // Linearity.
    let n = p * 50;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
    let (a, b) = (1.7, -0.3);
    let sd = |s: Vec<f64>| {
        self_difference(&WaveformTrace::new(64e9, 0.0, s).unwrap(), p)
            .unwrap()
            .samples
    };
    let lhs = sd(x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect());
    let (sx, sy) = (sd(x), sd(y));
    let lin = lhs
        .iter()
        .zip(sx.iter().zip(&sy))
        .map(|(l, (u, v))| (l - (a * u + b * v)).abs())
        .fold(0.0, f64::max);
    if lin > 1e-12 {
        failures.push("linearity");
    }

    // Single pulse gives a positive copy and a negative echo one period on.
    let mut s = vec![0.0; p * 4];
    let i0 = p + 17;
    s[i0] = 22.4;
    let out = sd(s);
    let expect = |k: usize| {
        if k + p == i0 {
            22.4
        } else if k == i0 {
            -22.4
        } else {
            0.0
        }
    };
    if out.iter().enumerate().any(|(k, &v)| v != expect(k)) {
        failures.push("pulse echo pair");
    }

    // End to end against the gate records.
    let cfg = DetectorConfig {
        peak_means_mv: vec![22.4, 43.1, 63.8, 85.5],
        sigma_elec_mv: 1.5,
        trap_fill: 0.0,
        illumination_divisor: 2,
        ..DetectorConfig::default()
    };
    let records = simulate_run(&cfg, PhotonFlux::new(2.0).unwrap(), 100_000, 1011).unwrap();
    let trace = synthesize_trace(
        &records,
        &cfg,
        64.0 * cfg.gate_frequency,
        &Feedthrough::default(),
        &mut r,
    )
    .unwrap();
    let amps = extract_amplitudes(&self_difference(&trace, p).unwrap(), &cfg).unwrap();
    let within = amps
        .iter()
        .filter(|&&(g, v)| (v - records[g as usize].amplitude_mv).abs() <= 3.0 * cfg.sigma_elec_mv)
        .count();
    let frac = within as f64 / amps.len() as f64;
    if frac < 0.99 {
        failures.push("end-to-end amplitudes");
    }

    check(
        failures.is_empty(),
        format!(
            "linearity error {lin:.1e}; end-to-end {:.3}% of {} gates within 3 sigma_elec{}",
            100.0 * frac,
            amps.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failures.join(", "))
            }
        ),
    )
}

fn c11_determinism() -> Outcome {
    let mut differing = Vec::new();
    for (name, _) in RUN_PRESETS {
        let spec: RunSpec = runspec::run_preset(name).unwrap();
        let a = pipeline::simulate(&spec).unwrap().artifacts;
        let b = pipeline::simulate(&spec).unwrap().artifacts;
        if a != b {
            differing.push(*name);
        }
    }
    for (name, _) in SWEEP_PRESETS {
        let spec = runspec::sweep_preset(name).unwrap();
        let a = pipeline::sweep(&spec, 4).unwrap().artifacts;
        let b = pipeline::sweep(&spec, 1).unwrap().artifacts;
        if a != b {
            differing.push(*name);
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{} presets run twice{}",
            RUN_PRESETS.len() + SWEEP_PRESETS.len(),
            if differing.is_empty() {
                ", all artifacts identical".to_string()
            } else {
                format!(", differing: {differing:?}")
            }
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        match &o {
            Ok(d) => println!("criterion {n:>2}: PASS  {d}"),
            Err(d) => println!("criterion {n:>2}: FAIL  {d}"),
        }
        results.push((n, o));
    };

    let t = Instant::now();
    let eff = efficiency_run(None).counting.unwrap();
    let (c1, c2) = c1_c2_efficiency(&eff, t.elapsed().as_secs_f64());
    report(1, c1);
    report(2, c2);
    report(3, c3_dark());
    report(4, c4_afterpulse(&eff));
    report(5, c5_fig4a());
    report(6, c6_flux_sweep());

    let fig5 = pipeline::simulate(&runspec::run_preset("fig5").unwrap()).unwrap();
    let fig5_model = fig5
        .analysis
        .as_ref()
        .unwrap()
        .discrimination
        .as_ref()
        .unwrap()
        .model
        .clone();
    let fig4a = pipeline::simulate(&runspec::run_preset("fig4a").unwrap()).unwrap();
    let fig4a_model = fig4a.analysis.unwrap().fit.model.truncated(5);
    report(7, c7_oracle(&fig5_model, &fig4a_model));
    report(8, c8_fig5(&fig5));
    report(9, c9_excess_noise());
    report(10, c10_self_differencing());
    report(11, c11_determinism());

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, o)| o.is_err())
        .map(|(n, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
