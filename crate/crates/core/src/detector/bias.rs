//! Parametric bias dependence and DC-bias sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Detector, DetectorConfig};
use crate::analysis::counting::{estimate_efficiency, ClickTally};
use crate::error::{check_probability, Error, Result};
use crate::photonstat::PhotonFlux;
use crate::rng;

/// Monotone maps from DC bias to avalanche probability, dark-count
/// probability and trap filling.
///
/// * `p_eta(V) = 1 - exp(-a (V - v_br))` for `V > v_br`, with `a` set so that
///   `p_eta(v_max) = p_eta_at_max`.
/// * `dark(V) = dark_at_max * exp(dark_slope_per_v * (V - v_max))`.
/// * `trap_fill(V) = 0` up to `trap_onset_v`, then rises as
///   `exp(s (V - onset)) - 1`, scaled to `trap_fill_at_max` at `v_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasResponse {
    pub v_br: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub p_eta_at_max: f64,
    pub dark_at_max: f64,
    pub dark_slope_per_v: f64,
    pub trap_onset_v: f64,
    pub trap_fill_at_max: f64,
    pub trap_steepness_per_v: f64,
}

impl Default for BiasResponse {
    fn default() -> Self {
        Self {
            v_br: 41.7,
            v_min: 44.0,
            v_max: 49.0,
            p_eta_at_max: 0.911,
            dark_at_max: 1.1e-6,
            dark_slope_per_v: 0.46,
            trap_onset_v: 47.6,
            trap_fill_at_max: crate::analysis::trap_fill_for_afterpulse(0.075),
            trap_steepness_per_v: 2.0,
        }
    }
}

impl BiasResponse {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_br < self.v_min && self.v_min < self.v_max) {
            return Err(Error::invalid("v_min", "need v_br < v_min < v_max"));
        }
        check_probability("p_eta_at_max", self.p_eta_at_max)?;
        if self.p_eta_at_max >= 1.0 {
            return Err(Error::invalid(
                "p_eta_at_max",
                "must be below 1 for a saturating form",
            ));
        }
        check_probability("dark_at_max", self.dark_at_max)?;
        if self.dark_slope_per_v < 0.0
            || self.trap_steepness_per_v < 0.0
            || self.trap_fill_at_max < 0.0
        {
            return Err(Error::invalid(
                "dark_slope_per_v",
                "slopes and trap fill must be >= 0",
            ));
        }
        if self.trap_onset_v >= self.v_max {
            return Err(Error::invalid("trap_onset_v", "must lie below v_max"));
        }
        Ok(())
    }

    fn check_range(&self, v: f64) -> Result<()> {
        if v >= self.v_min && v <= self.v_max {
            Ok(())
        } else {
            Err(Error::BiasOutOfRange {
                v_dc: v,
                min: self.v_min,
                max: self.v_max,
            })
        }
    }

    fn p_eta_rate(&self) -> f64 {
        -(1.0 - self.p_eta_at_max).ln() / (self.v_max - self.v_br)
    }

    pub fn p_eta(&self, v: f64) -> Result<f64> {
        self.check_range(v)?;
        Ok(1.0 - (-self.p_eta_rate() * (v - self.v_br)).exp())
    }

    pub fn dark_prob(&self, v: f64) -> Result<f64> {
        self.check_range(v)?;
        Ok(self.dark_at_max * (self.dark_slope_per_v * (v - self.v_max)).exp())
    }

    pub fn trap_fill(&self, v: f64) -> Result<f64> {
        self.check_range(v)?;
        if v <= self.trap_onset_v {
            return Ok(0.0);
        }
        let span = self.v_max - self.trap_onset_v;
        let x = v - self.trap_onset_v;
        let s = self.trap_steepness_per_v;
        let shape = if s == 0.0 {
            x / span
        } else {
            (s * x).exp_m1() / (s * span).exp_m1()
        };
        Ok(self.trap_fill_at_max * shape)
    }

    /// `base` with the bias-dependent parameters replaced by their values at `v`.
    pub fn configure(&self, base: &DetectorConfig, v: f64) -> Result<DetectorConfig> {
        Ok(DetectorConfig {
            v_dc: v,
            v_br: self.v_br,
            p_eta: self.p_eta(v)?,
            dark_prob: self.dark_prob(v)?,
            trap_fill: self.trap_fill(v)?,
            ..base.clone()
        })
    }
}

/// One row of a bias sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub v_dc: f64,
    pub p_eta: f64,
    pub eta_est: f64,
    pub eta_stderr: f64,
    pub dark_est: f64,
    pub afterpulse_est: f64,
}

/// Simulate an illuminated run and a zero-flux companion run at every bias
/// and apply the counting estimators.
///
/// Point `i` draws from substreams `2i` and `2i + 1` of `seed`, so results do
/// not depend on `jobs` or scheduling.
pub fn bias_sweep(
    resp: &BiasResponse,
    cfg: &DetectorConfig,
    v_dc_list: &[f64],
    flux: PhotonFlux,
    n_gates: u64,
    seed: u64,
    jobs: usize,
) -> Result<Vec<BiasPoint>> {
    resp.validate()?;
    if v_dc_list.is_empty() {
        return Err(Error::invalid("v_dc", "bias list is empty"));
    }
    if n_gates == 0 {
        return Err(Error::invalid("n_gates", "must be >= 1"));
    }
    let detectors = v_dc_list
        .iter()
        .map(|&v| resp.configure(cfg, v).and_then(Detector::new))
        .collect::<Result<Vec<_>>>()?;

    let point = |(i, det): (usize, &Detector)| {
        let i = i as u64;
        let lit: ClickTally = det
            .stream(flux, n_gates, rng::stream(seed, 2 * i))
            .collect();
        let dark: ClickTally = det
            .stream(PhotonFlux::vacuum(), n_gates, rng::stream(seed, 2 * i + 1))
            .collect();
        let s = estimate_efficiency(&lit, &dark, flux);
        BiasPoint {
            v_dc: det.config().v_dc,
            p_eta: det.config().p_eta,
            eta_est: s.eta_est,
            eta_stderr: s.eta_stderr,
            dark_est: s.p_click_dark,
            afterpulse_est: s.p_afterpulse,
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| detectors.par_iter().enumerate().map(point).collect()))
}
