//! Photon-number statistics of a coherent (Poissonian) source and its
//! thinning by the detector efficiency chain.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_nonnegative, check_probability, Error, Result};
use crate::rng::SimRng;

/// Mean photon number per optical pulse.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PhotonFlux(f64);

impl PhotonFlux {
    pub fn new(mu: f64) -> Result<Self> {
        check_nonnegative("mu", mu)?;
        Ok(Self(mu))
    }

    pub const fn vacuum() -> Self {
        Self(0.0)
    }

    pub fn mu(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PhotonFlux {
    type Error = Error;
    fn try_from(mu: f64) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<PhotonFlux> for f64 {
    fn from(f: PhotonFlux) -> f64 {
        f.0
    }
}

/// External quantum efficiency followed by the avalanche trigger probability
/// of an absorbed photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyChain {
    qe: f64,
    p_eta: f64,
}

impl EfficiencyChain {
    pub fn new(qe: f64, p_eta: f64) -> Result<Self> {
        check_probability("qe", qe)?;
        check_probability("p_eta", p_eta)?;
        Ok(Self { qe, p_eta })
    }

    pub fn qe(&self) -> f64 {
        self.qe
    }

    pub fn p_eta(&self) -> f64 {
        self.p_eta
    }

    /// Overall single-photon detection efficiency.
    pub fn eta(&self) -> f64 {
        self.qe * self.p_eta
    }
}

/// Poisson probability of `n` photons at mean `mu`, evaluated in log space.
pub fn poisson_pmf(n: u64, mu: PhotonFlux) -> f64 {
    let mu = mu.mu();
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n = n as f64;
    (n * mu.ln() - mu - ln_gamma(n + 1.0)).exp()
}

/// Checked variant for callers holding raw signed values.
pub fn poisson_pmf_checked(n: i64, mu: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::invalid("n", format!("{n} is negative")));
    }
    Ok(poisson_pmf(n as u64, PhotonFlux::new(mu)?))
}

/// P(N >= n) for a Poisson variable, summed from the complement so that it
/// stays accurate when the tail is large.
pub fn poisson_tail(n: u64, mu: PhotonFlux) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if mu.mu() == 0.0 {
        return 0.0;
    }
    let head: f64 = (0..n).map(|k| poisson_pmf(k, mu)).sum();
    if head < 0.5 {
        return 1.0 - head;
    }
    // Sum the upper tail directly until the terms are negligible.
    let mut tail = 0.0;
    let mut k = n;
    loop {
        let p = poisson_pmf(k, mu);
        tail += p;
        if (k as f64) > mu.mu() && (p == 0.0 || p < tail * 1e-17) {
            break;
        }
        k += 1;
    }
    tail
}

/// Mean detected photons per pulse after Poisson thinning.
pub fn detected_flux(mu: PhotonFlux, chain: &EfficiencyChain) -> PhotonFlux {
    PhotonFlux(mu.mu() * chain.eta())
}

/// Below this mean the sampler uses exact sequential-search inversion.
const INVERSION_LIMIT: f64 = 10.0;

/// Draw a Poisson photon number.
pub fn sample_photon_number(mu: PhotonFlux, rng: &mut SimRng) -> u64 {
    let mu = mu.mu();
    if mu == 0.0 {
        return 0;
    }
    if mu < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-mu).exp();
        let mut cdf = p;
        let mut n = 0u64;
        while u >= cdf {
            n += 1;
            p *= mu / n as f64;
            let next = cdf + p;
            // cdf stopped growing: u fell into the rounding gap above 1 - eps.
            if next == cdf {
                break;
            }
            cdf = next;
        }
        n
    } else {
        Poisson::new(mu)
            .expect("mu is positive and finite")
            .sample(rng) as u64
    }
}

/// Binomial thinning: keep each of `n` items independently with probability `p`.
pub fn thin(n: u64, p: f64, rng: &mut SimRng) -> Result<u64> {
    check_probability("p", p)?;
    Ok(thin_unchecked(n, p, rng))
}

pub(crate) fn thin_unchecked(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    if n == 0 || p == 0.0 {
        0
    } else if p == 1.0 {
        n
    } else if n <= 32 {
        (0..n).filter(|_| rng.random::<f64>() < p).count() as u64
    } else {
        Binomial::new(n, p).expect("p checked").sample(rng)
    }
}
