use serde::{Deserialize, Serialize};

use super::{poisson_weights, MixtureModel};
use crate::photonstat::PhotonFlux;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonConsistency {
    pub mu_det: PhotonFlux,
    /// Sum of squared weight differences at the optimum.
    pub residual: f64,
}

/// Poisson mean that best reproduces the mixture weights in least squares.
/// The top peak is compared against the Poisson tail mass `P(N >= n_max)`.
pub fn poisson_consistency(model: &MixtureModel) -> PoissonConsistency {
    let w = model.weights();
    let n_max = model.n_max();
    let cost = |mu: f64| -> f64 {
        let p = poisson_weights(PhotonFlux::new(mu).expect("mu >= 0"), n_max);
        w.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum()
    };

    let mean: f64 = w.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
    let hi = 3.0 * mean + 5.0;
    let grid = 400;
    let step = hi / grid as f64;
    let (best_i, _) =
        (0..=grid)
            .map(|i| (i, cost(i as f64 * step)))
            .fold(
                (0, f64::INFINITY),
                |acc, (i, c)| if c < acc.1 { (i, c) } else { acc },
            );

    // Golden-section refinement inside the neighbouring grid cells.
    let mut a = (best_i as f64 - 1.0).max(0.0) * step;
    let mut b = (best_i as f64 + 1.0) * step;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-13 * (1.0 + b) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    let mu = 0.5 * (a + b);
    PoissonConsistency {
        mu_det: PhotonFlux::new(mu).expect("mu >= 0"),
        residual: cost(mu),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_model(mu: f64, n_max: usize) -> MixtureModel {
        let means: Vec<f64> = (0..=n_max).map(|n| 22.4 * n as f64).collect();
        MixtureModel::poisson(PhotonFlux::new(mu).unwrap(), &means, 2.0, 4.0).unwrap()
    }

    #[test]
    fn exact_poisson_weights_recovered() {
        for (mu, n_max) in [(0.92, 3), (0.21, 4), (3.7, 9), (5.16, 12), (0.033, 2)] {
            let r = poisson_consistency(&poisson_model(mu, n_max));
            assert!((r.mu_det.mu() - mu).abs() < 1e-6, "mu={mu}: {:?}", r);
            assert!(r.residual < 1e-20);
        }
    }

    #[test]
    fn vacuum_weights() {
        let m = MixtureModel::constrained(&[0.0, 22.4], 2.0, 4.0, &[1.0, 0.0]).unwrap();
        assert!(poisson_consistency(&m).mu_det.mu() < 1e-9);
    }
}
