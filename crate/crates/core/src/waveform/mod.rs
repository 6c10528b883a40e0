//! Sampled detector output: synthesis of the raw gated-APD signal,
//! self-differencing, and per-gate amplitude extraction.
//!
//! Timing inside one gate period of `P` samples:
//!
//! ```text
//!  0          P/4          P/2                     P
//!  |^ rising edge          |v falling edge          |
//!  |     [== avalanche ==] |                        |
//!  |<-- measurement window>|                        |
//! ```
//!
//! The avalanche pulse is centred at `P/4`, halfway through the
//! above-breakdown half of the square wave, and the measurement window is the
//! central half-period around it.

mod histogram;

pub use histogram::{build_histogram, AmplitudeHistogram, DEFAULT_BIN_WIDTH_MV, DEFAULT_RANGE_MV};

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, GateRecord};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Samples per gate period used unless configured otherwise.
pub const DEFAULT_SAMPLES_PER_GATE: usize = 64;
/// Fewest samples per gate period the synthesizer accepts.
pub const MIN_SAMPLES_PER_GATE: usize = 16;

/// Uniformly sampled voltage record in mV.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformTrace {
    pub sample_rate: f64,
    pub start_time: f64,
    pub samples: Vec<f64>,
}

impl WaveformTrace {
    pub fn new(sample_rate: f64, start_time: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        Ok(Self {
            sample_rate,
            start_time,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Capacitive feedthrough of the square-wave gate: a positive lobe at the
/// rising edge and a negative lobe at the falling edge. Each lobe is the
/// derivative of a raised-cosine step, so it is band-limited and has compact
/// support of `edge_width_ps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedthrough {
    pub amplitude_mv: f64,
    pub edge_width_ps: f64,
}

impl Default for Feedthrough {
    fn default() -> Self {
        Self {
            amplitude_mv: 500.0,
            edge_width_ps: 100.0,
        }
    }
}

/// Sample-level geometry of one gate period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateGeometry {
    pub samples_per_gate: usize,
    pub sample_period_ps: f64,
    pub pulse_center_ps: f64,
    pub pulse_duration_ps: f64,
    /// First sample of the measurement window.
    pub window_start: usize,
    /// One past the last sample of the measurement window.
    pub window_end: usize,
}

impl GateGeometry {
    pub fn new(cfg: &DetectorConfig, sample_rate: f64) -> Result<Self> {
        cfg.validate()?;
        let per_gate = sample_rate / cfg.gate_frequency;
        let samples_per_gate = per_gate.round() as usize;
        if (per_gate - samples_per_gate as f64).abs() > 1e-9 * per_gate {
            return Err(Error::invalid(
                "sample_rate",
                format!("{sample_rate} Hz is not an integer multiple of the gate frequency"),
            ));
        }
        if samples_per_gate < MIN_SAMPLES_PER_GATE {
            return Err(Error::invalid(
                "sample_rate",
                format!(
                    "{samples_per_gate} samples per gate, need at least {MIN_SAMPLES_PER_GATE}"
                ),
            ));
        }
        let period_ps = cfg.gate_period_ps();
        let quarter = samples_per_gate / 4;
        Ok(Self {
            samples_per_gate,
            sample_period_ps: period_ps / samples_per_gate as f64,
            pulse_center_ps: period_ps / 4.0,
            pulse_duration_ps: cfg.avalanche_duration_ps,
            window_start: 0,
            window_end: 2 * quarter,
        })
    }

    /// Normalized avalanche pulse: raised-cosine rise and fall, each a sixth
    /// of the duration, with an exactly flat top of height 1 in between.
    pub fn pulse_shape(&self, t_ps: f64) -> f64 {
        let d = self.pulse_duration_ps;
        let edge = d / 6.0;
        let x = t_ps - (self.pulse_center_ps - d / 2.0);
        if x <= 0.0 || x >= d {
            0.0
        } else if x < edge {
            0.5 * (1.0 - (PI * x / edge).cos())
        } else if x > d - edge {
            0.5 * (1.0 - (PI * (d - x) / edge).cos())
        } else {
            1.0
        }
    }

    /// Pulse samples for one gate (index relative to the gate start).
    pub fn pulse_template(&self) -> Vec<f64> {
        (0..self.samples_per_gate)
            .map(|j| self.pulse_shape(j as f64 * self.sample_period_ps))
            .collect()
    }

    /// Number of whole samples on the flat top of the pulse.
    pub fn flat_top_samples(&self) -> usize {
        self.pulse_template().iter().filter(|&&v| v == 1.0).count()
    }

    /// Boxcar length used by [`extract_amplitudes`]: the largest power of two
    /// that fits on the flat top (so the smoothed peak equals the pulse
    /// amplitude exactly) and whose half-width fits between the window start
    /// and the pulse onset (so a pure echo smooths to exactly zero somewhere
    /// in the window).
    pub fn default_boxcar(&self) -> usize {
        let template = self.pulse_template();
        let onset = template.iter().position(|&v| v > 0.0).unwrap_or(0) - self.window_start;
        let limit = self.flat_top_samples().min(2 * onset).max(1);
        1 << (usize::BITS - 1 - limit.leading_zeros())
    }

    /// Feedthrough samples for one period, wrapped so that tiling is seamless.
    pub fn feedthrough_template(&self, ft: &Feedthrough) -> Vec<f64> {
        let period_ps = self.sample_period_ps * self.samples_per_gate as f64;
        let half_width = ft.edge_width_ps / 2.0;
        let lobe = |t: f64, edge: f64| {
            // Signed distance to the edge, wrapped into [-P/2, P/2).
            let mut dt = (t - edge).rem_euclid(period_ps);
            if dt >= period_ps / 2.0 {
                dt -= period_ps;
            }
            if dt.abs() < half_width {
                (PI * (dt + half_width) / ft.edge_width_ps).sin()
            } else {
                0.0
            }
        };
        (0..self.samples_per_gate)
            .map(|j| {
                let t = j as f64 * self.sample_period_ps;
                ft.amplitude_mv * (lobe(t, 0.0) - lobe(t, period_ps / 2.0))
            })
            .collect()
    }
}

/// Raw detector output for `records`, which must be consecutive gates
/// starting at `records[0].gate_index`.
///
/// The trace is the periodic feedthrough, plus one pulse of height
/// `amplitude_mv` for every gate with a nonzero amplitude, plus white noise of
/// standard deviation `sigma_elec_mv`.
pub fn synthesize_trace(
    records: &[GateRecord],
    cfg: &DetectorConfig,
    sample_rate: f64,
    feedthrough: &Feedthrough,
    rng: &mut SimRng,
) -> Result<WaveformTrace> {
    let geom = GateGeometry::new(cfg, sample_rate)?;
    let p = geom.samples_per_gate;
    let background = geom.feedthrough_template(feedthrough);
    let pulse = geom.pulse_template();

    let mut samples = Vec::with_capacity(records.len() * p);
    for rec in records {
        let a = rec.amplitude_mv;
        if a != 0.0 {
            samples.extend(background.iter().zip(&pulse).map(|(b, s)| b + a * s));
        } else {
            samples.extend_from_slice(&background);
        }
    }
    if cfg.sigma_elec_mv > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma_elec_mv).expect("validated sigma");
        samples.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    let start_gate = records.first().map_or(0, |r| r.gate_index);
    WaveformTrace::new(sample_rate, start_gate as f64 / cfg.gate_frequency, samples)
}

/// Subtract from every sample the sample one period earlier. The first period
/// has no predecessor and is dropped.
pub fn self_difference(trace: &WaveformTrace, period_samples: usize) -> Result<WaveformTrace> {
    if period_samples == 0 {
        return Err(Error::invalid("period_samples", "must be >= 1"));
    }
    if trace.len() < period_samples {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            period: period_samples,
        });
    }
    let x = &trace.samples;
    let samples = x[period_samples..]
        .iter()
        .zip(x)
        .map(|(now, before)| now - before)
        .collect();
    WaveformTrace::new(
        trace.sample_rate,
        trace.start_time + period_samples as f64 / trace.sample_rate,
        samples,
    )
}

/// [`self_difference`] computed on chunks of `chunk_periods` periods in
/// parallel. Each chunk reads one leading period of overlap.
pub fn self_difference_chunked(
    trace: &WaveformTrace,
    period_samples: usize,
    chunk_periods: usize,
) -> Result<WaveformTrace> {
    if period_samples == 0 || chunk_periods == 0 {
        return Err(Error::invalid(
            "period_samples",
            "period and chunk size must be >= 1",
        ));
    }
    if trace.len() < period_samples {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            period: period_samples,
        });
    }
    let x = &trace.samples;
    let out_len = x.len() - period_samples;
    let chunk = period_samples * chunk_periods;
    let mut samples = vec![0.0; out_len];
    samples
        .par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, out)| {
            let base = c * chunk;
            let input = &x[base..base + out.len() + period_samples];
            for (j, o) in out.iter_mut().enumerate() {
                *o = input[j + period_samples] - input[j];
            }
        });
    WaveformTrace::new(
        trace.sample_rate,
        trace.start_time + period_samples as f64 / trace.sample_rate,
        samples,
    )
}

/// Per-gate amplitude of a self-differenced trace: the signed maximum, over
/// the measurement window, of the trace smoothed by a centred boxcar of
/// [`GateGeometry::default_boxcar`] samples.
///
/// An avalanche in gate `g` leaves a negative echo in gate `g + 1`; taking
/// the signed (not absolute) maximum keeps it from registering.
pub fn extract_amplitudes(trace: &WaveformTrace, cfg: &DetectorConfig) -> Result<Vec<(u64, f64)>> {
    let geom = GateGeometry::new(cfg, trace.sample_rate)?;
    extract_with_boxcar(trace, cfg, geom.default_boxcar())
}

/// [`extract_amplitudes`] with an explicit boxcar length (`1` is the plain
/// window maximum). `boxcar` must be a power of two.
pub fn extract_with_boxcar(
    trace: &WaveformTrace,
    cfg: &DetectorConfig,
    boxcar: usize,
) -> Result<Vec<(u64, f64)>> {
    let geom = GateGeometry::new(cfg, trace.sample_rate)?;
    if !boxcar.is_power_of_two() {
        return Err(Error::invalid(
            "boxcar",
            format!("{boxcar} is not a power of two"),
        ));
    }
    let p = geom.samples_per_gate;
    let first_gate_f = trace.start_time * cfg.gate_frequency;
    let first_gate = first_gate_f.round();
    if (first_gate_f - first_gate).abs() > 1e-6 {
        return Err(Error::invalid(
            "start_time",
            "trace does not start on a gate boundary",
        ));
    }
    let first_gate = first_gate as u64;
    let x = &trace.samples;
    let n_gates = x.len() / p;
    let half = boxcar / 2;
    let smoothed = |i: usize| -> f64 {
        // Centred window [i - half, i - half + boxcar); samples outside the
        // trace count as zero. Pairwise summation keeps equal values exact.
        let lo = i as isize - half as isize;
        let mut buf: Vec<f64> = (0..boxcar)
            .map(|k| {
                let j = lo + k as isize;
                if j < 0 || j as usize >= x.len() {
                    0.0
                } else {
                    x[j as usize]
                }
            })
            .collect();
        let mut n = boxcar;
        while n > 1 {
            n /= 2;
            for k in 0..n {
                buf[k] += buf[k + n];
            }
        }
        buf[0] / boxcar as f64
    };
    Ok((0..n_gates)
        .into_par_iter()
        .map(|g| {
            let base = g * p;
            let amp = (geom.window_start..geom.window_end)
                .map(|j| smoothed(base + j))
                .fold(f64::NEG_INFINITY, f64::max);
            (first_gate + g as u64, amp)
        })
        .collect())
}

/// Amplitude-level readout: the record amplitude plus Gaussian readout noise
/// of `sigma_elec_mv`, without synthesizing a waveform.
pub fn amplitude_readout<'a>(
    records: impl IntoIterator<Item = &'a GateRecord>,
    sigma_elec_mv: f64,
    illuminated_only: bool,
    rng: &mut SimRng,
) -> Vec<(u64, f64)> {
    let noise = (sigma_elec_mv > 0.0).then(|| Normal::new(0.0, sigma_elec_mv).expect("sigma >= 0"));
    records
        .into_iter()
        .filter(|r| r.illuminated || !illuminated_only)
        .map(|r| {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            (r.gate_index, r.amplitude_mv + n)
        })
        .collect()
}
