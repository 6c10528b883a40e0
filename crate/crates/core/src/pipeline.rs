//! Batch commands: simulate a run spec, analyze a histogram, run a sweep.
//!
//! Each command computes every artifact in memory first and writes them only
//! once all of them exist, so a failed command leaves no files behind.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    discrimination_errors, estimate_efficiency, excess_noise_of_peak, fit_mixture,
    place_thresholds, poisson_consistency, ClickTally, CountingSummary, DiscriminationResult,
    FitReport, FitWarning, MixtureModel, PoissonConsistency,
};
use crate::detector::{bias_sweep, BiasPoint, Detector, DetectorConfig, GateRecord};
use crate::error::{Error, Result};
use crate::export::{self, header, Artifact, VERSION};
use crate::photonstat::PhotonFlux;
use crate::rng::{self, SimRng};
use crate::runspec::{AnalysisOptions, Output, ReadoutMode, ReadoutOptions, RunSpec, SweepSpec};
use crate::waveform::{
    extract_amplitudes, self_difference, synthesize_trace, AmplitudeHistogram, WaveformTrace,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InsufficientCounts { .. }
        | Error::NoCrossing { .. }
        | Error::TraceTooShort { .. } => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Substreams used by one simulation; a flux sweep gives point `i` the block
/// starting at `4 i`.
const STREAMS_PER_RUN: u64 = 4;
const STREAM_GATES: u64 = 0;
const STREAM_DARK_RUN: u64 = 1;
const STREAM_READOUT: u64 = 2;
const STREAM_TRACE: u64 = 3;

/// Gates synthesized per waveform chunk.
const WAVEFORM_CHUNK_GATES: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrimination {
    /// Model the thresholds were placed on.
    pub model: MixtureModel,
    pub result: DiscriminationResult,
    pub closed_top_bin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub fit: FitReport,
    pub consistency: PoissonConsistency,
    pub discrimination: Option<Discrimination>,
    /// `1 + (sigma / mean)^2` of each fitted photon peak, `N >= 1`.
    pub excess_noise: Vec<f64>,
}

impl AnalysisReport {
    /// Fitted weight in `N >= n`.
    pub fn weight_from(&self, n: usize) -> f64 {
        self.fit
            .model
            .peaks
            .iter()
            .filter(|p| p.n >= n)
            .map(|p| p.weight)
            .sum()
    }
}

/// Fit, Poisson consistency, optionally thresholds and discrimination
/// errors, and excess noise.
pub fn analyze_histogram(
    hist: &AmplitudeHistogram,
    opts: &AnalysisOptions,
    discriminate: bool,
) -> Result<AnalysisReport> {
    opts.validate()?;
    let fit = fit_mixture(hist, &opts.fit)?;
    let consistency = poisson_consistency(&fit.model);
    let discrimination = discriminate
        .then(|| discriminate_model(&fit.model, opts))
        .transpose()?;
    let excess_noise = fit.model.peaks[1..]
        .iter()
        .map(|p| excess_noise_of_peak(p.mean_mv, p.sigma_mv))
        .collect::<Result<_>>()?;
    Ok(AnalysisReport {
        fit,
        consistency,
        discrimination,
        excess_noise,
    })
}

/// Thresholds and per-state errors for `model` as configured in `opts`.
pub fn discriminate_model(model: &MixtureModel, opts: &AnalysisOptions) -> Result<Discrimination> {
    let (model, result) = match opts.discrimination_n_max {
        Some(n) if opts.closed_top_bin => {
            let m = model.truncated(n + 1);
            let mut d = discrimination_errors(&m, &place_thresholds(&m)?)?;
            d.errors.truncate(n + 1);
            (m, d)
        }
        n => {
            let m = n.map_or_else(|| model.clone(), |n| model.truncated(n));
            let d = discrimination_errors(&m, &place_thresholds(&m)?)?;
            (m, d)
        }
    };
    Ok(Discrimination {
        model,
        result,
        closed_top_bin: opts.closed_top_bin,
    })
}

/// Everything a simulation produced.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub spec_hash: String,
    pub tally: ClickTally,
    pub histogram: Option<AmplitudeHistogram>,
    pub analysis: Option<AnalysisReport>,
    pub counting: Option<CountingSummary>,
    pub artifacts: Vec<Artifact>,
}

impl SimulationOutcome {
    /// The fit failed to converge or produced disordered means.
    pub fn numeric_failure(&self) -> bool {
        self.analysis.as_ref().is_some_and(|a| !a.fit.is_valid())
    }
}

pub fn simulate(spec: &RunSpec) -> Result<SimulationOutcome> {
    simulate_block(spec, 0, &spec.hash())
}

fn simulate_block(spec: &RunSpec, block: u64, spec_hash: &str) -> Result<SimulationOutcome> {
    spec.validate()?;
    let cfg = &spec.detector;
    let detector = Detector::new(cfg.clone())?;
    let stream = |k: u64| rng::stream(spec.seed, block * STREAMS_PER_RUN + k);

    let want_analysis = spec.wants(Output::Fit) || spec.wants(Output::Discrimination);
    let want_hist = want_analysis || spec.wants(Output::Histogram);
    let mut hist = AmplitudeHistogram::new(spec.readout.bin_width_mv, spec.readout.range_mv)?;
    let mut tally = ClickTally::default();
    let mut records = Vec::new();
    let trace_gates = spec.readout.trace_gates.min(spec.n_gates) as usize;
    let mut head = Vec::new();
    let mut waveform = (spec.readout.mode == ReadoutMode::Waveform
        && (want_hist || spec.wants(Output::Trace)))
    .then(|| WaveformChain::new(cfg, &spec.readout, stream(STREAM_READOUT), trace_gates))
    .transpose()?;
    let mut readout_rng = stream(STREAM_READOUT);
    let noise =
        (cfg.sigma_elec_mv > 0.0).then(|| Normal::new(0.0, cfg.sigma_elec_mv).expect("validated"));

    for rec in detector.stream(spec.flux, spec.n_gates, stream(STREAM_GATES)) {
        tally.push(&rec);
        if spec.wants(Output::Records) {
            records.push(rec);
        }
        match &mut waveform {
            Some(w) => w.push(rec, |g, v| {
                if g || !spec.readout.illuminated_only {
                    hist.fill(v)
                }
            })?,
            None => {
                if spec.wants(Output::Trace) && head.len() < trace_gates {
                    head.push(rec);
                }
                if want_hist && (rec.illuminated || !spec.readout.illuminated_only) {
                    let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut readout_rng));
                    hist.fill(rec.amplitude_mv + n);
                }
            }
        }
    }

    let mut artifacts = vec![Artifact::new(
        "spec.toml",
        format!("{}{}", header(spec_hash), spec.to_toml()),
    )];
    let (raw, diffed) = match waveform {
        Some(mut w) => {
            w.finish(|g, v| {
                if g || !spec.readout.illuminated_only {
                    hist.fill(v)
                }
            })?;
            (w.trace_raw, w.trace_sd)
        }
        None if spec.wants(Output::Trace) => {
            let raw = synthesize_trace(
                &head,
                cfg,
                spec.readout.sample_rate(cfg),
                &spec.readout.feedthrough,
                &mut stream(STREAM_TRACE),
            )?;
            let sd = self_difference(&raw, spec.readout.samples_per_gate)?;
            (Some(raw), Some(sd))
        }
        None => (None, None),
    };
    if spec.wants(Output::Trace) {
        if let (Some(raw), Some(sd)) = (raw, diffed) {
            artifacts.push(Artifact::new(
                "trace.txt",
                export::trace_to_string(&raw, spec_hash),
            ));
            artifacts.push(Artifact::new(
                "trace_sd.txt",
                export::trace_to_string(&sd, spec_hash),
            ));
        }
    }
    if spec.wants(Output::Records) {
        artifacts.push(Artifact::new(
            "records.txt",
            export::records_to_string(&records, spec_hash),
        ));
    }
    if spec.wants(Output::Histogram) {
        artifacts.push(Artifact::new(
            "histogram.txt",
            export::histogram_to_string(&hist, spec_hash),
        ));
    }

    let analysis = want_analysis
        .then(|| analyze_histogram(&hist, &spec.analysis, spec.wants(Output::Discrimination)))
        .transpose()?;
    if let Some(a) = &analysis {
        if spec.wants(Output::Fit) {
            artifacts.push(Artifact::new("fit.txt", fit_to_string(a, spec_hash)));
        }
        if let Some(d) = &a.discrimination {
            artifacts.push(Artifact::new(
                "discrimination.txt",
                discrimination_to_string(d, spec_hash),
            ));
        }
    }

    let counting = spec.wants(Output::Counting).then(|| {
        let n_dark = spec.counting.dark_run_gates.unwrap_or(spec.n_gates);
        let dark: ClickTally = detector
            .stream(PhotonFlux::vacuum(), n_dark, stream(STREAM_DARK_RUN))
            .collect();
        estimate_efficiency(&tally, &dark, spec.flux)
    });
    if let Some(c) = &counting {
        artifacts.push(Artifact::new(
            "counting.txt",
            counting_to_string(c, &tally, spec_hash),
        ));
    }

    let summary = RunSummary {
        version: VERSION,
        spec_hash,
        n_gates: spec.n_gates,
        flux: spec.flux.mu(),
        detected_flux: spec.detected_flux(),
        tally: &tally,
        histogram_total: want_hist.then_some(hist.total),
        analysis: analysis.as_ref(),
        counting: counting.as_ref(),
    };
    artifacts.push(Artifact::new("summary.json", to_json(&summary)));

    Ok(SimulationOutcome {
        spec_hash: spec_hash.to_string(),
        tally,
        histogram: want_hist.then_some(hist),
        analysis,
        counting,
        artifacts,
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    version: &'a str,
    spec_hash: &'a str,
    n_gates: u64,
    flux: f64,
    detected_flux: f64,
    tally: &'a ClickTally,
    histogram_total: Option<u64>,
    analysis: Option<&'a AnalysisReport>,
    counting: Option<&'a CountingSummary>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    s
}

/// Streaming waveform readout: synthesizes the raw trace chunk by chunk,
/// carrying the last period of each chunk into the next so the
/// self-difference sees a continuous trace.
struct WaveformChain<'a> {
    cfg: &'a DetectorConfig,
    readout: &'a ReadoutOptions,
    sample_rate: f64,
    rng: SimRng,
    pending: Vec<GateRecord>,
    tail: Option<Vec<f64>>,
    trace_gates: usize,
    trace_raw: Option<WaveformTrace>,
    trace_sd: Option<WaveformTrace>,
}

impl<'a> WaveformChain<'a> {
    fn new(
        cfg: &'a DetectorConfig,
        readout: &'a ReadoutOptions,
        rng: SimRng,
        trace_gates: usize,
    ) -> Result<Self> {
        let sample_rate = readout.sample_rate(cfg);
        // Fails early on an unusable sampling grid.
        crate::waveform::GateGeometry::new(cfg, sample_rate)?;
        Ok(Self {
            cfg,
            readout,
            sample_rate,
            rng,
            pending: Vec::with_capacity(WAVEFORM_CHUNK_GATES),
            tail: None,
            trace_gates,
            trace_raw: None,
            trace_sd: None,
        })
    }

    fn push(&mut self, rec: GateRecord, sink: impl FnMut(bool, f64)) -> Result<()> {
        self.pending.push(rec);
        if self.pending.len() == WAVEFORM_CHUNK_GATES {
            self.flush(sink)?;
        }
        Ok(())
    }

    fn finish(&mut self, sink: impl FnMut(bool, f64)) -> Result<()> {
        if !self.pending.is_empty() {
            self.flush(sink)?;
        }
        Ok(())
    }

    /// Amplitudes of the pending gates go to `sink(illuminated, amplitude)`.
    /// The very first gate of the run has no predecessor and yields none.
    fn flush(&mut self, mut sink: impl FnMut(bool, f64)) -> Result<()> {
        let p = self.readout.samples_per_gate;
        let raw = synthesize_trace(
            &self.pending,
            self.cfg,
            self.sample_rate,
            &self.readout.feedthrough,
            &mut self.rng,
        )?;
        let first = self.pending[0].gate_index;
        let joined = match self.tail.take() {
            Some(mut t) => {
                t.extend_from_slice(&raw.samples);
                WaveformTrace::new(
                    self.sample_rate,
                    raw.start_time - p as f64 / self.sample_rate,
                    t,
                )?
            }
            None => raw.clone(),
        };
        let sd = self_difference(&joined, p)?;
        for (gate, amp) in extract_amplitudes(&sd, self.cfg)? {
            sink(self.pending[(gate - first) as usize].illuminated, amp);
        }
        if self.trace_raw.is_none() {
            let raw_len = (self.trace_gates * p).min(raw.samples.len());
            let sd_len = (self.trace_gates.saturating_sub(1) * p).min(sd.samples.len());
            self.trace_raw = Some(WaveformTrace::new(
                self.sample_rate,
                raw.start_time,
                raw.samples[..raw_len].to_vec(),
            )?);
            self.trace_sd = Some(WaveformTrace::new(
                self.sample_rate,
                sd.start_time,
                sd.samples[..sd_len].to_vec(),
            )?);
        }
        self.tail = Some(raw.samples[raw.samples.len() - p..].to_vec());
        self.pending.clear();
        Ok(())
    }
}

fn fit_to_string(a: &AnalysisReport, spec_hash: &str) -> String {
    let f = &a.fit;
    let mut s = header(spec_hash);
    let mode = match f.model.mode {
        crate::analysis::WidthMode::Constrained => "constrained",
        crate::analysis::WidthMode::Free => "free",
    };
    let _ = writeln!(s, "# mode = {mode}");
    let _ = writeln!(s, "# n_max = {}", f.model.n_max());
    let _ = writeln!(s, "# converged = {}", f.converged);
    let _ = writeln!(s, "# iterations = {}", f.iterations);
    let _ = writeln!(s, "# chi_square = {}", f.chi_square);
    let _ = writeln!(s, "# dof = {}", f.dof);
    let _ = writeln!(s, "# fitted_counts = {}", f.fitted_counts);
    let _ = writeln!(s, "# mu_det = {}", a.consistency.mu_det.mu());
    let _ = writeln!(s, "# poisson_residual = {}", a.consistency.residual);
    for w in &f.warnings {
        let text = match w {
            FitWarning::PeakNotVisible {
                n,
                height_ratio,
                counts,
            } => {
                format!("peak {n} not visible (height ratio {height_ratio}, {counts} counts)")
            }
            FitWarning::NotConverged { iterations } => {
                format!("not converged after {iterations} iterations")
            }
            FitWarning::MeansOutOfOrder => "fitted means out of order".to_string(),
        };
        let _ = writeln!(s, "# warning = {text}");
    }
    s.push_str("n mean_mv sigma_mv weight excess_noise\n");
    for p in &f.model.peaks {
        let e = if p.n == 0 {
            f64::NAN
        } else {
            a.excess_noise[p.n - 1]
        };
        let _ = writeln!(s, "{} {} {} {} {e}", p.n, p.mean_mv, p.sigma_mv, p.weight);
    }
    s
}

fn discrimination_to_string(disc: &Discrimination, spec_hash: &str) -> String {
    let d = &disc.result;
    let mut s = header(spec_hash);
    let _ = writeln!(
        s,
        "# top_bin = {}",
        if disc.closed_top_bin {
            "closed"
        } else {
            "open"
        }
    );
    s.push_str("n lower_mv upper_mv error\n");
    for (n, e) in d.errors.iter().enumerate() {
        let lo = n
            .checked_sub(1)
            .map_or(f64::NEG_INFINITY, |i| d.thresholds_mv[i]);
        let hi = d.thresholds_mv.get(n).copied().unwrap_or(f64::INFINITY);
        let _ = writeln!(s, "{n} {lo} {hi} {e}");
    }
    s
}

fn counting_to_string(c: &CountingSummary, t: &ClickTally, spec_hash: &str) -> String {
    let mut s = header(spec_hash);
    s.push_str("quantity value\n");
    let rows: [(&str, f64); 11] = [
        ("mu_in", c.mu_in.mu()),
        ("illuminated_gates", t.illuminated_gates as f64),
        ("illuminated_clicks", t.illuminated_clicks as f64),
        ("dark_gates", t.dark_gates as f64),
        ("dark_clicks", t.dark_clicks as f64),
        ("p_click_illuminated", c.p_click_illuminated),
        ("p_click_dark", c.p_click_dark),
        ("p_afterpulse", c.p_afterpulse),
        ("eta_est", c.eta_est),
        ("eta_stderr", c.eta_stderr),
        ("degenerate", f64::from(u8::from(c.degenerate))),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k} {v}");
    }
    s
}

/// Result of `analyze` on a histogram file.
#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub report: AnalysisReport,
    pub artifacts: Vec<Artifact>,
}

/// Analyze a histogram file. The artifact hash covers the file contents and
/// the options.
pub fn analyze_file(path: &Path, opts: &AnalysisOptions) -> Result<AnalyzeOutcome> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "file is not UTF-8 text".into(),
    })?;
    let hist = export::parse_histogram(&text, path)?;
    let options = toml::to_string(opts).expect("options serialize");
    let hash = crate::runspec::spec_hash(format!("{text}\n{options}").as_bytes());
    let report = analyze_histogram(&hist, opts, true)?;
    let disc = report.discrimination.as_ref().expect("requested");
    let artifacts = vec![
        Artifact::new("analysis.toml", format!("{}{options}", header(&hash))),
        Artifact::new("fit.txt", fit_to_string(&report, &hash)),
        Artifact::new("discrimination.txt", discrimination_to_string(disc, &hash)),
        Artifact::new(
            "summary.json",
            to_json(&AnalyzeSummary {
                version: VERSION,
                spec_hash: &hash,
                histogram_total: hist.total,
                analysis: &report,
            }),
        ),
    ];
    Ok(AnalyzeOutcome { report, artifacts })
}

#[derive(Serialize)]
struct AnalyzeSummary<'a> {
    version: &'a str,
    spec_hash: &'a str,
    histogram_total: u64,
    analysis: &'a AnalysisReport,
}

/// One flux-sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxPoint {
    pub flux: f64,
    pub detected_flux: f64,
    pub mu_det: f64,
    /// Fitted weight in `N >= 2`.
    pub weight_multi: f64,
    pub converged: bool,
    pub warnings: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub bias: Vec<BiasPoint>,
    pub flux: Vec<FluxPoint>,
    /// Per-point histograms of a flux sweep.
    pub histograms: Vec<AmplitudeHistogram>,
    pub artifacts: Vec<Artifact>,
}

impl SweepOutcome {
    pub fn numeric_failure(&self) -> bool {
        self.flux.iter().any(|p| !p.converged)
    }
}

/// Run every sweep point, at most `jobs` at a time. Results do not depend on
/// `jobs`.
pub fn sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepOutcome> {
    spec.validate()?;
    let hash = spec.hash();
    let mut artifacts = vec![Artifact::new(
        "sweep.toml",
        format!("{}{}", header(&hash), spec.to_toml()),
    )];
    let mut out = SweepOutcome {
        bias: Vec::new(),
        flux: Vec::new(),
        histograms: Vec::new(),
        artifacts: Vec::new(),
    };

    if let Some(b) = &spec.bias {
        out.bias = bias_sweep(
            &b.response,
            &spec.detector,
            &b.v_dc,
            b.flux,
            spec.n_gates,
            spec.seed,
            jobs,
        )?;
        let mut s = header(&hash);
        s.push_str("v_dc p_eta eta_est eta_stderr dark_est afterpulse_est\n");
        for p in &out.bias {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                p.v_dc, p.p_eta, p.eta_est, p.eta_stderr, p.dark_est, p.afterpulse_est
            );
        }
        artifacts.push(Artifact::new("sweep_bias.txt", s));
    }

    if let Some(f) = &spec.flux {
        let outputs: BTreeSet<Output> = [Output::Histogram, Output::Fit].into();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let runs: Vec<(PhotonFlux, RunSpec)> = f
            .values
            .iter()
            .map(|&mu| (mu, spec.run_at(mu, spec.seed, outputs.clone())))
            .collect();
        let results = pool.install(|| {
            runs.par_iter()
                .enumerate()
                .map(|(i, (_, run))| simulate_block(run, i as u64, &hash))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut table = header(&hash);
        table.push_str("flux detected_flux mu_det weight_multi converged warnings\n");
        for (i, ((mu, run), res)) in runs.iter().zip(results).enumerate() {
            let a = res.analysis.as_ref().expect("fit requested");
            let point = FluxPoint {
                flux: mu.mu(),
                detected_flux: run.detected_flux(),
                mu_det: a.consistency.mu_det.mu(),
                weight_multi: a.weight_from(2),
                converged: a.fit.is_valid(),
                warnings: a.fit.warnings.len(),
            };
            let _ = writeln!(
                table,
                "{} {} {} {} {} {}",
                point.flux,
                point.detected_flux,
                point.mu_det,
                point.weight_multi,
                u8::from(point.converged),
                point.warnings
            );
            for art in res.artifacts {
                if art.name == "histogram.txt" || art.name == "fit.txt" {
                    let stem = art.name.trim_end_matches(".txt");
                    artifacts.push(Artifact::new(format!("{stem}_{i}.txt"), art.contents));
                }
            }
            out.flux.push(point);
            out.histograms
                .push(res.histogram.expect("histogram requested"));
        }
        artifacts.push(Artifact::new("sweep_flux.txt", table));
    }

    artifacts.push(Artifact::new(
        "summary.json",
        to_json(&SweepSummary {
            version: VERSION,
            spec_hash: &hash,
            bias: &out.bias,
            flux: &out.flux,
        }),
    ));
    out.artifacts = artifacts;
    Ok(out)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    version: &'a str,
    spec_hash: &'a str,
    bias: &'a [BiasPoint],
    flux: &'a [FluxPoint],
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runspec::run_preset;

    fn small(outputs: &[Output]) -> RunSpec {
        let mut s = run_preset("fig4a").unwrap();
        s.n_gates = 40_000;
        s.outputs = outputs.iter().copied().collect();
        s
    }

    #[test]
    fn single_dark_gate_gives_one_zero_record() {
        let mut s = small(&[Output::Records]);
        s.n_gates = 1;
        s.flux = PhotonFlux::vacuum();
        s.detector.dark_prob = 0.0;
        let out = simulate(&s).unwrap();
        let rec = out
            .artifacts
            .iter()
            .find(|a| a.name == "records.txt")
            .unwrap();
        let rows: Vec<&str> = rec
            .text()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .collect();
        assert_eq!(rows, ["0 1 0 0 0 0 0"]);
    }

    #[test]
    fn waveform_and_amplitude_readouts_agree_on_peaks() {
        let mut a = small(&[Output::Fit]);
        a.n_gates = 80_000;
        a.detector.sigma_elec_mv = 0.5;
        a.detector.illumination_divisor = 2;
        let mut w = a.clone();
        w.readout.mode = ReadoutMode::Waveform;
        let fa = simulate(&a).unwrap().analysis.unwrap();
        let fw = simulate(&w).unwrap().analysis.unwrap();
        for n in 1..4 {
            let (ma, mw) = (fa.fit.model.peaks[n].mean_mv, fw.fit.model.peaks[n].mean_mv);
            // The window maximum lifts waveform amplitudes by a fraction of
            // the smoothed noise.
            assert!((ma - mw).abs() < 0.02 * ma, "N={n}: {ma} vs {mw}");
        }
    }

    #[test]
    fn waveform_trace_artifacts_are_consistent() {
        let mut s = small(&[Output::Trace, Output::Histogram]);
        s.n_gates = 20_000;
        s.detector.illumination_divisor = 2;
        s.readout.illuminated_only = false;
        s.readout.mode = ReadoutMode::Waveform;
        s.readout.trace_gates = 10;
        let out = simulate(&s).unwrap();
        let raw = export::parse_trace(
            out.artifacts
                .iter()
                .find(|a| a.name == "trace.txt")
                .unwrap()
                .text(),
            Path::new("t"),
        )
        .unwrap();
        let sd = export::parse_trace(
            out.artifacts
                .iter()
                .find(|a| a.name == "trace_sd.txt")
                .unwrap()
                .text(),
            Path::new("t"),
        )
        .unwrap();
        assert_eq!(raw.len(), 640);
        assert_eq!(sd, self_difference(&raw, 64).unwrap());
        // Gate 0 has no predecessor.
        let h = out.histogram.unwrap();
        assert_eq!(h.total + h.underflow + h.overflow, 19_999);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::InsufficientCounts {
                total: 0,
                required: 1
            }),
            EXIT_NUMERIC
        );
    }
}
