//! Statistical analysis of pulse-height data: Gaussian mixture fitting,
//! Poisson consistency, threshold discrimination, excess noise and
//! click-counting estimators.

mod consistency;
pub mod counting;
mod discrimination;
mod fit;

pub use consistency::{poisson_consistency, PoissonConsistency};
pub use counting::{estimate_efficiency, ClickTally, CountingSummary};
pub use discrimination::{classify, discrimination_errors, place_thresholds, DiscriminationResult};
pub use fit::{fit_mixture, FitOptions, FitReport, FitWarning};

use libm::erfc;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonstat::{poisson_pmf, poisson_tail, PhotonFlux};
use crate::rng::SimRng;

/// How peak widths are tied together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthMode {
    /// `sigma(N) = sigma(1) * sqrt(N)` for `N >= 1`; `sigma(0)` is separate.
    #[default]
    Constrained,
    /// Every peak has its own width.
    Free,
}

/// One photon-number component of the amplitude distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub n: usize,
    pub mean_mv: f64,
    pub sigma_mv: f64,
    pub weight: f64,
}

impl Peak {
    pub fn pdf(&self, v: f64) -> f64 {
        let z = (v - self.mean_mv) / self.sigma_mv;
        (-0.5 * z * z).exp() / (self.sigma_mv * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn ln_pdf(&self, v: f64) -> f64 {
        let z = (v - self.mean_mv) / self.sigma_mv;
        -0.5 * z * z - self.sigma_mv.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// P(V <= v) for a unit-mass peak.
    pub fn cdf(&self, v: f64) -> f64 {
        lower_tail((v - self.mean_mv) / self.sigma_mv)
    }

    /// P(V > v) for a unit-mass peak.
    pub fn sf(&self, v: f64) -> f64 {
        upper_tail((v - self.mean_mv) / self.sigma_mv)
    }

    /// `<V^2> / <V>^2 = 1 + (sigma / mean)^2`.
    pub fn excess_noise(&self) -> Result<f64> {
        excess_noise_of_peak(self.mean_mv, self.sigma_mv)
    }
}

/// Standard normal upper tail Q(z), accurate far into either tail.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn lower_tail(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Fitted or configured amplitude distribution: one Gaussian per photon number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub peaks: Vec<Peak>,
    pub mode: WidthMode,
}

impl MixtureModel {
    pub fn new(peaks: Vec<Peak>, mode: WidthMode) -> Result<Self> {
        let m = Self { peaks, mode };
        m.validate()?;
        Ok(m)
    }

    /// Constrained-width model with the given means and weights.
    pub fn constrained(means: &[f64], sigma0: f64, sigma1: f64, weights: &[f64]) -> Result<Self> {
        if means.len() != weights.len() {
            return Err(Error::invalid("weights", "one weight per mean required"));
        }
        let peaks = means
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(n, (&mean_mv, &weight))| Peak {
                n,
                mean_mv,
                sigma_mv: if n == 0 {
                    sigma0
                } else {
                    sigma1 * (n as f64).sqrt()
                },
                weight,
            })
            .collect();
        Self::new(peaks, WidthMode::Constrained)
    }

    /// Poisson(`mu`) weights over `means.len()` peaks; the last peak carries
    /// the whole tail mass.
    pub fn poisson(mu: PhotonFlux, means: &[f64], sigma0: f64, sigma1: f64) -> Result<Self> {
        let weights = poisson_weights(mu, means.len() - 1);
        Self::constrained(means, sigma0, sigma1, &weights)
    }

    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::invalid("peaks", "model has no peaks"));
        }
        let sum: f64 = self.peaks.iter().map(|p| p.weight).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("weights", format!("sum to {sum}, not 1")));
        }
        for (i, p) in self.peaks.iter().enumerate() {
            if p.n != i {
                return Err(Error::invalid(
                    "peaks",
                    "photon numbers must run 0, 1, 2, ...",
                ));
            }
            if !(p.weight >= 0.0) {
                return Err(Error::invalid("weights", "must be >= 0"));
            }
            if !(p.sigma_mv > 0.0 && p.sigma_mv.is_finite()) {
                return Err(Error::invalid("sigma_mv", "must be positive"));
            }
        }
        if self
            .peaks
            .windows(2)
            .any(|w| !(w[1].mean_mv > w[0].mean_mv))
        {
            return Err(Error::invalid(
                "mean_mv",
                "means must increase strictly with N",
            ));
        }
        if self.mode == WidthMode::Constrained && self.peaks.len() > 1 {
            let s1 = self.peaks[1].sigma_mv;
            for p in &self.peaks[1..] {
                let want = s1 * (p.n as f64).sqrt();
                if (p.sigma_mv - want).abs() > 1e-9 * want {
                    return Err(Error::invalid(
                        "sigma_mv",
                        "constrained widths must scale as sqrt(N)",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.peaks.len() - 1
    }

    pub fn weights(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.weight).collect()
    }

    pub fn density(&self, v: f64) -> f64 {
        self.peaks.iter().map(|p| p.weight * p.pdf(v)).sum()
    }

    /// Keep peaks `0..=n_max`, folding the weight of higher peaks into the
    /// top one.
    pub fn truncated(&self, n_max: usize) -> Self {
        if n_max >= self.n_max() {
            return self.clone();
        }
        let mut peaks = self.peaks[..=n_max].to_vec();
        peaks[n_max].weight += self.peaks[n_max + 1..]
            .iter()
            .map(|p| p.weight)
            .sum::<f64>();
        Self {
            peaks,
            mode: self.mode,
        }
    }

    /// Draw `(N, amplitude)`.
    pub fn sample(&self, rng: &mut SimRng) -> (usize, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.n_max();
        for p in &self.peaks {
            acc += p.weight;
            if u < acc {
                pick = p.n;
                break;
            }
        }
        let p = &self.peaks[pick];
        let z: f64 = StandardNormal.sample(rng);
        (pick, p.mean_mv + p.sigma_mv * z)
    }
}

/// Poisson weights for `0..=n_max` with the tail mass folded into `n_max`.
pub fn poisson_weights(mu: PhotonFlux, n_max: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n_max).map(|n| poisson_pmf(n as u64, mu)).collect();
    w.push(poisson_tail(n_max as u64, mu));
    w
}

/// `<V^2> / <V>^2` of a sample of avalanche amplitudes.
pub fn excess_noise(amplitudes: &[f64]) -> Result<f64> {
    if amplitudes.is_empty() {
        return Err(Error::invalid("amplitudes", "empty sample"));
    }
    let n = amplitudes.len() as f64;
    let m1 = amplitudes.iter().sum::<f64>() / n;
    let m2 = amplitudes.iter().map(|v| v * v).sum::<f64>() / n;
    if m1 == 0.0 {
        return Err(Error::invalid("amplitudes", "zero mean"));
    }
    Ok(m2 / (m1 * m1))
}

/// `1 + (sigma / mean)^2`, the excess noise of a Gaussian peak.
pub fn excess_noise_of_peak(mean_mv: f64, sigma_mv: f64) -> Result<f64> {
    if mean_mv == 0.0 || !mean_mv.is_finite() {
        return Err(Error::invalid("mean_mv", "zero or non-finite mean"));
    }
    let r = sigma_mv / mean_mv;
    Ok(1.0 + r * r)
}

/// Mean traps filled per avalanche that yields `target` afterpulses per
/// primary avalanche, counting afterpulse cascades: `F / (1 - F) = target`.
/// Assumes every trap empties within the counting window.
pub fn trap_fill_for_afterpulse(target: f64) -> f64 {
    target / (1.0 + target)
}
