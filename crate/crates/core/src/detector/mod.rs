//! Gate-by-gate Monte Carlo of a fast-gated avalanche photodiode.
//!
//! Each gate draws the photo-carriers that survive absorption and avalanche
//! triggering, a possible dark carrier, and carriers re-emitted from traps
//! filled by earlier avalanches. All initiating carriers add to one avalanche
//! whose amplitude grows with the carrier count `k` and spreads as `sqrt(k)`.
//! Electronic readout noise is *not* part of a [`GateRecord`]; it is added by
//! the waveform stage, so an empty gate carries exactly zero amplitude.

mod bias;

pub use bias::{bias_sweep, BiasPoint, BiasResponse};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_probability, Error, Result};
use crate::photonstat::{sample_photon_number, thin_unchecked, EfficiencyChain, PhotonFlux};
use crate::rng::{self, SimRng};

/// Electrical and statistical parameters of the simulated detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Gate (square-wave) repetition rate in Hz.
    pub gate_frequency: f64,
    /// DC bias in volts.
    pub v_dc: f64,
    /// Square-wave amplitude in volts.
    pub v_ac: f64,
    /// Breakdown voltage in volts.
    pub v_br: f64,
    /// External quantum efficiency.
    pub qe: f64,
    /// Probability that an absorbed photon triggers an avalanche.
    pub p_eta: f64,
    /// Mean single-carrier avalanche amplitude in mV.
    pub gain_mv: f64,
    /// Optional mean amplitude for k = 1, 2, ... carriers (mV). Counts past
    /// the end of the table continue with the last spacing. Empty means
    /// linear gain `k * gain_mv`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub peak_means_mv: Vec<f64>,
    /// Single-carrier avalanche amplitude spread in mV.
    pub sigma_av_mv: f64,
    /// Readout noise in mV (width of the zero-photon peak).
    pub sigma_elec_mv: f64,
    /// Dark-carrier probability per gate.
    pub dark_prob: f64,
    /// Mean number of traps filled by each avalanche.
    pub trap_fill: f64,
    /// Per-gate release probability of an occupied trap.
    pub trap_release_prob: f64,
    /// Only every `illumination_divisor`-th gate receives a light pulse.
    pub illumination_divisor: u64,
    /// Avalanche current pulse duration in ps.
    pub avalanche_duration_ps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gate_frequency: 1.0e9,
            v_dc: 49.0,
            v_ac: 10.0,
            v_br: 41.7,
            qe: 0.81,
            p_eta: 0.911,
            gain_mv: 22.4,
            peak_means_mv: Vec::new(),
            sigma_av_mv: 4.0,
            sigma_elec_mv: 1.5,
            dark_prob: 1.1e-6,
            trap_fill: 0.0,
            trap_release_prob: 0.2,
            illumination_divisor: 64,
            avalanche_duration_ps: 400.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_frequency > 0.0 && self.gate_frequency.is_finite()) {
            return Err(Error::invalid("gate_frequency", "must be positive"));
        }
        check_probability("qe", self.qe)?;
        check_probability("p_eta", self.p_eta)?;
        check_probability("dark_prob", self.dark_prob)?;
        check_probability("trap_release_prob", self.trap_release_prob)?;
        if !(self.gain_mv > 0.0 && self.gain_mv.is_finite()) {
            return Err(Error::invalid("gain_mv", "must be positive"));
        }
        check_nonnegative("sigma_av_mv", self.sigma_av_mv)?;
        check_nonnegative("sigma_elec_mv", self.sigma_elec_mv)?;
        check_nonnegative("trap_fill", self.trap_fill)?;
        if self.illumination_divisor < 1 {
            return Err(Error::invalid("illumination_divisor", "must be >= 1"));
        }
        if !(self.avalanche_duration_ps > 0.0 && self.avalanche_duration_ps < self.gate_period_ps())
        {
            return Err(Error::invalid(
                "avalanche_duration_ps",
                format!("must lie in (0, {}) ps", self.gate_period_ps()),
            ));
        }
        let mut prev = 0.0;
        for &m in &self.peak_means_mv {
            if !(m > prev && m.is_finite()) {
                return Err(Error::invalid(
                    "peak_means_mv",
                    "must be positive and strictly increasing",
                ));
            }
            prev = m;
        }
        Ok(())
    }

    pub fn gate_period_ps(&self) -> f64 {
        1.0e12 / self.gate_frequency
    }

    pub fn efficiency(&self) -> EfficiencyChain {
        EfficiencyChain::new(self.qe, self.p_eta).expect("validated config")
    }

    /// Mean avalanche amplitude for `k >= 1` initiating carriers.
    pub fn mean_amplitude(&self, k: u32) -> f64 {
        let table = &self.peak_means_mv;
        let k = k as usize;
        match table.len() {
            0 => k as f64 * self.gain_mv,
            len if k <= len => table[k - 1],
            1 => k as f64 * table[0],
            len => {
                let step = table[len - 1] - table[len - 2];
                table[len - 1] + (k - len) as f64 * step
            }
        }
    }

    pub fn amplitude_sigma(&self, k: u32) -> f64 {
        self.sigma_av_mv * (k as f64).sqrt()
    }
}

/// Outcome of one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub gate_index: u64,
    pub illuminated: bool,
    pub n_incident: u32,
    pub n_detected: u32,
    pub n_dark: u32,
    pub n_afterpulse: u32,
    pub amplitude_mv: f64,
}

impl GateRecord {
    /// Number of avalanche-initiating carriers.
    pub fn carriers(&self) -> u32 {
        self.n_detected + self.n_dark + self.n_afterpulse
    }

    pub fn clicked(&self) -> bool {
        self.carriers() > 0
    }
}

/// Number of occupied carrier traps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapState {
    pub occupied_traps: u64,
}

/// A validated detector ready to simulate.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    trap_fill: Option<Poisson<f64>>,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let trap_fill =
            (cfg.trap_fill > 0.0).then(|| Poisson::new(cfg.trap_fill).expect("positive mean"));
        Ok(Self { cfg, trap_fill })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// One gate. The returned record has `gate_index = 0` and
    /// `illuminated = false`; [`GateStream`] fills those in.
    pub fn simulate_gate(
        &self,
        traps: TrapState,
        n_incident: u32,
        rng: &mut SimRng,
    ) -> (GateRecord, TrapState) {
        let cfg = &self.cfg;
        let mut occupied = traps.occupied_traps;

        let released = thin_unchecked(occupied, cfg.trap_release_prob, rng);
        occupied -= released;
        let n_dark = u32::from(cfg.dark_prob > 0.0 && rng.random::<f64>() < cfg.dark_prob);
        let absorbed = thin_unchecked(n_incident as u64, cfg.qe, rng);
        let n_detected = thin_unchecked(absorbed, cfg.p_eta, rng) as u32;

        let n_afterpulse = released as u32;
        let k = n_detected + n_dark + n_afterpulse;
        let amplitude_mv = if k == 0 {
            0.0
        } else {
            if let Some(fill) = &self.trap_fill {
                occupied += fill.sample(rng) as u64;
            }
            self.draw_amplitude(k, rng)
        };

        let record = GateRecord {
            gate_index: 0,
            illuminated: false,
            n_incident,
            n_detected,
            n_dark,
            n_afterpulse,
            amplitude_mv,
        };
        (
            record,
            TrapState {
                occupied_traps: occupied,
            },
        )
    }

    /// Gaussian amplitude for `k >= 1` carriers, truncated at zero by resampling.
    fn draw_amplitude(&self, k: u32, rng: &mut SimRng) -> f64 {
        let mean = self.cfg.mean_amplitude(k);
        let sd = self.cfg.amplitude_sigma(k);
        if sd == 0.0 {
            return mean;
        }
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let v = mean + sd * z;
            if v >= 0.0 {
                return v;
            }
        }
    }

    /// Lazily simulated run; gate records are produced in order.
    pub fn stream(&self, flux: PhotonFlux, n_gates: u64, rng: SimRng) -> GateStream<'_> {
        GateStream {
            detector: self,
            flux,
            rng,
            traps: TrapState::default(),
            next: 0,
            n_gates,
        }
    }

    pub fn run(&self, flux: PhotonFlux, n_gates: u64, seed: u64) -> Vec<GateRecord> {
        self.stream(flux, n_gates, rng::from_seed(seed)).collect()
    }
}

/// Iterator over the gates of one run. Trap state threads through the gates.
#[derive(Debug)]
pub struct GateStream<'a> {
    detector: &'a Detector,
    flux: PhotonFlux,
    rng: SimRng,
    traps: TrapState,
    next: u64,
    n_gates: u64,
}

impl GateStream<'_> {
    pub fn traps(&self) -> TrapState {
        self.traps
    }
}

impl Iterator for GateStream<'_> {
    type Item = GateRecord;

    fn next(&mut self) -> Option<GateRecord> {
        if self.next >= self.n_gates {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let illuminated = index % self.detector.cfg.illumination_divisor == 0;
        let n_incident = if illuminated {
            sample_photon_number(self.flux, &mut self.rng) as u32
        } else {
            0
        };
        let (mut record, traps) =
            self.detector
                .simulate_gate(self.traps, n_incident, &mut self.rng);
        self.traps = traps;
        record.gate_index = index;
        record.illuminated = illuminated;
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_gates - self.next) as usize;
        (left, Some(left))
    }
}

/// Validate `cfg` and simulate `n_gates` gates deterministically from `seed`.
pub fn simulate_run(
    cfg: &DetectorConfig,
    flux: PhotonFlux,
    n_gates: u64,
    seed: u64,
) -> Result<Vec<GateRecord>> {
    if n_gates == 0 {
        return Err(Error::invalid("n_gates", "must be >= 1"));
    }
    Ok(Detector::new(cfg.clone())?.run(flux, n_gates, seed))
}

/// Validate `cfg` and simulate one gate.
pub fn simulate_gate(
    cfg: &DetectorConfig,
    traps: TrapState,
    n_incident: u32,
    rng: &mut SimRng,
) -> Result<(GateRecord, TrapState)> {
    Ok(Detector::new(cfg.clone())?.simulate_gate(traps, n_incident, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> DetectorConfig {
        DetectorConfig {
            qe: 1.0,
            p_eta: 1.0,
            dark_prob: 0.0,
            trap_fill: 0.0,
            sigma_av_mv: 0.0,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn noiseless_single_photon_is_exact_gain() {
        let det = Detector::new(quiet()).unwrap();
        let mut r = rng::from_seed(1);
        let (rec, traps) = det.simulate_gate(TrapState::default(), 1, &mut r);
        assert_eq!(rec.amplitude_mv, 22.4);
        assert_eq!(rec.n_detected, 1);
        assert_eq!(traps.occupied_traps, 0);
    }

    #[test]
    fn empty_gate_only_releases_traps() {
        let cfg = DetectorConfig {
            trap_release_prob: 0.0,
            trap_fill: 2.0,
            ..quiet()
        };
        let det = Detector::new(cfg).unwrap();
        let mut r = rng::from_seed(2);
        let start = TrapState { occupied_traps: 5 };
        let (rec, traps) = det.simulate_gate(start, 0, &mut r);
        assert_eq!(rec.amplitude_mv, 0.0);
        assert!(!rec.clicked());
        assert_eq!(traps, start);
    }

    #[test]
    fn released_traps_fire_afterpulses() {
        let cfg = DetectorConfig {
            trap_release_prob: 1.0,
            ..quiet()
        };
        let det = Detector::new(cfg).unwrap();
        let mut r = rng::from_seed(3);
        let (rec, traps) = det.simulate_gate(TrapState { occupied_traps: 2 }, 0, &mut r);
        assert_eq!(rec.n_afterpulse, 2);
        assert_eq!(rec.amplitude_mv, 44.8);
        assert_eq!(traps.occupied_traps, 0);
    }

    #[test]
    fn peak_table_and_extrapolation() {
        let cfg = DetectorConfig {
            peak_means_mv: vec![22.4, 43.1, 63.8, 85.5],
            ..quiet()
        };
        assert_eq!(cfg.mean_amplitude(1), 22.4);
        assert_eq!(cfg.mean_amplitude(4), 85.5);
        assert!((cfg.mean_amplitude(6) - (85.5 + 2.0 * 21.7)).abs() < 1e-12);
        assert_eq!(quiet().mean_amplitude(3), 3.0 * 22.4);
    }

    #[test]
    fn config_validation() {
        let bad = [
            DetectorConfig { qe: 1.1, ..quiet() },
            DetectorConfig {
                gain_mv: 0.0,
                ..quiet()
            },
            DetectorConfig {
                sigma_av_mv: -1.0,
                ..quiet()
            },
            DetectorConfig {
                illumination_divisor: 0,
                ..quiet()
            },
            DetectorConfig {
                avalanche_duration_ps: 1000.0,
                ..quiet()
            },
            DetectorConfig {
                peak_means_mv: vec![22.4, 20.0],
                ..quiet()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(simulate_run(&quiet(), PhotonFlux::vacuum(), 0, 1).is_err());
    }

    #[test]
    fn vacuum_quiet_run_is_all_zero() {
        let recs = simulate_run(&quiet(), PhotonFlux::vacuum(), 10_000, 9).unwrap();
        assert!(recs.iter().all(|r| r.amplitude_mv == 0.0 && !r.clicked()));
        let one = simulate_run(&quiet(), PhotonFlux::vacuum(), 1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].amplitude_mv, 0.0);
    }

    #[test]
    fn illumination_pattern_follows_divisor() {
        let cfg = DetectorConfig {
            illumination_divisor: 8,
            ..DetectorConfig::default()
        };
        let recs = simulate_run(&cfg, PhotonFlux::new(2.0).unwrap(), 800, 4).unwrap();
        for r in &recs {
            assert_eq!(r.illuminated, r.gate_index % 8 == 0);
            if !r.illuminated {
                assert_eq!(r.n_incident, 0);
            }
            assert!(r.n_detected <= r.n_incident);
            assert_eq!(r.amplitude_mv == 0.0, !r.clicked());
        }
    }
}
