//! Weighted least-squares fit of a Gaussian mixture to a pulse-height
//! histogram.
//!
//! The model for bin `b` is `sum_N C_N * P_N(b)`, where `P_N(b)` is the mass
//! of peak `N` inside the bin and `C_N` its expected count. Residuals are
//! `(count - model) / sqrt(max(count, 1))`. Fitting expected counts rather
//! than normalized probabilities lets mass that falls outside the binned
//! range still count towards the weights.
//!
//! Starting values come from a coarse scan over the single-photon gain with
//! Poisson weights; Levenberg-Marquardt then refines all parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{lower_tail, poisson_weights, MixtureModel, Peak, WidthMode};
use crate::error::{Error, Result};
use crate::photonstat::PhotonFlux;
use crate::waveform::AmplitudeHistogram;

/// Fewest histogram entries accepted by [`fit_mixture`].
pub const MIN_FIT_COUNTS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub n_max: usize,
    pub mode: WidthMode,
    pub max_iterations: usize,
    /// Single-photon peak spacing to start from; scanned when absent.
    pub gain_hint_mv: Option<f64>,
    /// A peak lower than this fraction of the tallest peak is reported as not
    /// visible.
    pub visibility: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_max: 4,
            mode: WidthMode::Constrained,
            max_iterations: 500,
            gain_hint_mv: None,
            visibility: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// `n_max` asks for a peak that the data does not show.
    PeakNotVisible {
        n: usize,
        height_ratio: f64,
        counts: f64,
    },
    /// The iteration budget ran out; parameters are the best seen so far.
    NotConverged { iterations: usize },
    /// Fitted means are not increasing with N.
    MeansOutOfOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: MixtureModel,
    /// Weighted sum of squared residuals.
    pub chi_square: f64,
    pub residual_norm: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted total count, including mass outside the binned range.
    pub fitted_counts: f64,
    pub warnings: Vec<FitWarning>,
}

impl FitReport {
    /// Converged with ordered means.
    pub fn is_valid(&self) -> bool {
        self.converged && !self.warnings.contains(&FitWarning::MeansOutOfOrder)
    }
}

/// Parameter layout: means, widths, expected counts.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n_peaks: usize,
    mode: WidthMode,
}

impl Layout {
    fn n_widths(&self) -> usize {
        match self.mode {
            WidthMode::Constrained => 2.min(self.n_peaks),
            WidthMode::Free => self.n_peaks,
        }
    }
    fn len(&self) -> usize {
        2 * self.n_peaks + self.n_widths()
    }
    fn mean(&self, n: usize) -> usize {
        n
    }
    fn width(&self, k: usize) -> usize {
        self.n_peaks + k
    }
    fn count(&self, n: usize) -> usize {
        self.n_peaks + self.n_widths() + n
    }
    /// Width of peak `n` and its index among the width parameters, with the
    /// chain-rule factor d sigma_n / d param.
    fn sigma(&self, p: &[f64], n: usize) -> (f64, usize, f64) {
        match self.mode {
            WidthMode::Free => (p[self.width(n)], n, 1.0),
            WidthMode::Constrained if n == 0 => (p[self.width(0)], 0, 1.0),
            WidthMode::Constrained => {
                let r = (n as f64).sqrt();
                (p[self.width(1)] * r, 1, r)
            }
        }
    }
}

struct Problem<'a> {
    edges: &'a [f64],
    counts: Vec<f64>,
    inv_sd: Vec<f64>,
    layout: Layout,
    min_sigma: f64,
    /// Means stay inside the binned range and widths below its span, which
    /// keeps a peak from turning into a flat background.
    range: (f64, f64),
}

impl Problem<'_> {
    fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Residuals, and optionally the Jacobian of the residuals.
    fn evaluate(&self, p: &[f64], jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
        let lay = self.layout;
        let nb = self.n_bins();
        let mut model = vec![0.0; nb];
        let mut jac = jac;
        if let Some(j) = jac.as_deref_mut() {
            j.fill(0.0);
        }
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for n in 0..lay.n_peaks {
            let m = p[lay.mean(n)];
            let (s, wk, dsdp) = lay.sigma(p, n);
            let c = p[lay.count(n)];
            let z: Vec<f64> = self.edges.iter().map(|&e| (e - m) / s).collect();
            let cdf: Vec<f64> = z.iter().map(|&z| lower_tail(z)).collect();
            let pdf: Vec<f64> = z
                .iter()
                .map(|&z| (-0.5 * z * z).exp() * inv_sqrt_2pi)
                .collect();
            for b in 0..nb {
                let mass = cdf[b + 1] - cdf[b];
                model[b] += c * mass;
                if let Some(j) = jac.as_deref_mut() {
                    let w = -self.inv_sd[b];
                    j[(b, lay.count(n))] = w * mass;
                    j[(b, lay.mean(n))] = w * c * (pdf[b] - pdf[b + 1]) / s;
                    let dsig = c * (pdf[b] * z[b] - pdf[b + 1] * z[b + 1]) / s;
                    j[(b, lay.width(wk))] += w * dsig * dsdp;
                }
            }
        }
        DVector::from_iterator(
            nb,
            (0..nb).map(|b| (self.counts[b] - model[b]) * self.inv_sd[b]),
        )
    }

    fn cost(&self, p: &[f64]) -> f64 {
        self.evaluate(p, None).norm_squared()
    }

    fn project(&self, p: &mut [f64]) {
        let lay = self.layout;
        for k in 0..lay.n_widths() {
            let i = lay.width(k);
            p[i] = p[i].clamp(self.min_sigma, self.range.1 - self.range.0);
        }
        for n in 0..lay.n_peaks {
            let i = lay.mean(n);
            p[i] = p[i].clamp(self.range.0, self.range.1);
        }
        for n in 0..lay.n_peaks {
            let i = lay.count(n);
            p[i] = p[i].max(0.0);
        }
    }
}

fn start_vector(lay: Layout, means: &[f64], s0: f64, s1: f64, counts: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; lay.len()];
    for n in 0..lay.n_peaks {
        p[lay.mean(n)] = means[n];
        p[lay.count(n)] = counts[n];
    }
    match lay.mode {
        WidthMode::Constrained => {
            p[lay.width(0)] = s0;
            if lay.n_peaks > 1 {
                p[lay.width(1)] = s1;
            }
        }
        WidthMode::Free => {
            for n in 0..lay.n_peaks {
                p[lay.width(n)] = if n == 0 { s0 } else { s1 * (n as f64).sqrt() };
            }
        }
    }
    p
}

/// Coarse scan over gain and relative single-photon width with Poisson
/// weights at `mu = mean amplitude / gain`, keeping the best weighted cost.
/// For each gain the zero peak starts from the mean and spread of the
/// entries below half a gain.
fn initial_guess(hist: &AmplitudeHistogram, prob: &Problem, opts: &FitOptions) -> Vec<f64> {
    let lay = prob.layout;
    let total = hist.total as f64;
    let width = (hist.hi() - hist.lo()) / hist.n_bins() as f64;
    let centers: Vec<f64> = (0..hist.n_bins()).map(|i| hist.bin_center(i)).collect();
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();

    let mass: f64 = counts.iter().sum();
    let mean_amp = if mass > 0.0 {
        centers.iter().zip(&counts).map(|(v, c)| v * c).sum::<f64>() / mass
    } else {
        0.0
    };
    let origin = if hist.lo() <= 0.0 && hist.hi() > 0.0 {
        0.0
    } else {
        hist.lo()
    };
    let zero_peak = |g: f64| -> (f64, f64) {
        let (mut n, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (v, c) in centers.iter().zip(&counts) {
            if *v < origin + 0.5 * g {
                n += c;
                m1 += c * v;
                m2 += c * v * v;
            }
        }
        if n < 10.0 {
            return (origin, 2.0 * width);
        }
        let m = m1 / n;
        (m, (m2 / n - m * m).max(0.0).sqrt().max(0.5 * width))
    };

    let gains: Vec<f64> = match opts.gain_hint_mv {
        Some(g) => vec![g],
        None => {
            let g_lo = 4.0 * width;
            let g_hi = ((hist.hi() - origin) / 1.5).max(g_lo * 1.01);
            let steps = (((g_hi - g_lo) / (0.5 * width)).ceil() as usize).clamp(10, 600);
            (0..=steps)
                .map(|i| g_lo + (g_hi - g_lo) * i as f64 / steps as f64)
                .collect()
        }
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for &g in &gains {
        let (m0, s0) = zero_peak(g);
        let mu = ((mean_amp - m0) / g).max(0.0);
        let w = poisson_weights(PhotonFlux::new(mu).expect("mu >= 0"), lay.n_peaks - 1);
        let means: Vec<f64> = (0..lay.n_peaks).map(|n| m0 + n as f64 * g).collect();
        let start_counts: Vec<f64> = w.iter().map(|x| x * total).collect();
        for rel in [0.1, 0.2, 0.3, 0.45] {
            let p = start_vector(
                lay,
                &means,
                s0,
                (rel * g).max(prob.min_sigma),
                &start_counts,
            );
            let c = prob.cost(&p);
            if best.as_ref().is_none_or(|b| c < b.0) {
                best = Some((c, p));
            }
        }
    }
    best.expect("at least one candidate").1
}

/// Fit `opts.n_max + 1` Gaussian peaks to `hist`.
///
/// Running out of iterations is not an error: the report carries the best
/// parameters found and `converged == false`.
pub fn fit_mixture(hist: &AmplitudeHistogram, opts: &FitOptions) -> Result<FitReport> {
    if hist.total < MIN_FIT_COUNTS {
        return Err(Error::InsufficientCounts {
            total: hist.total,
            required: MIN_FIT_COUNTS,
        });
    }
    if opts.n_max < 1 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    let lay = Layout {
        n_peaks: opts.n_max + 1,
        mode: opts.mode,
    };
    let width = (hist.hi() - hist.lo()) / hist.n_bins() as f64;
    let prob = Problem {
        edges: &hist.bin_edges,
        counts: hist.counts.iter().map(|&c| c as f64).collect(),
        inv_sd: hist
            .counts
            .iter()
            .map(|&c| 1.0 / (c.max(1) as f64).sqrt())
            .collect(),
        layout: lay,
        min_sigma: 0.05 * width,
        range: (hist.lo(), hist.hi()),
    };
    if lay.len() >= prob.n_bins() {
        return Err(Error::invalid(
            "n_max",
            "more parameters than histogram bins",
        ));
    }

    let mut p = initial_guess(hist, &prob, opts);
    let np = lay.len();
    let mut jac = DMatrix::zeros(prob.n_bins(), np);
    let mut r = prob.evaluate(&p, Some(&mut jac));
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;
        let mut improved = false;
        // Inner loop: raise damping until a step lowers the cost.
        for _ in 0..40 {
            let mut damped = a.clone();
            for i in 0..np {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            prob.project(&mut trial);
            let trial_cost = prob.cost(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let cost_drop = cost - trial_cost;
                let rel = cost_drop / cost.max(1e-300);
                let moved = trial
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b).abs() / (b.abs() + 1e-6))
                    .fold(0.0, f64::max);
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                // A chi-square change of 1e-6 is far below the statistical
                // resolution (1 per parameter).
                if cost_drop < 1e-6 || rel < 1e-12 || moved < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // No downhill step at any damping: a (projected) minimum.
            converged = true;
        }
        if converged {
            break;
        }
        r = prob.evaluate(&p, Some(&mut jac));
        cost = r.norm_squared();
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(FitWarning::NotConverged { iterations });
    }
    let fitted_counts: f64 = (0..lay.n_peaks).map(|n| p[lay.count(n)]).sum();
    let peaks: Vec<Peak> = (0..lay.n_peaks)
        .map(|n| Peak {
            n,
            mean_mv: p[lay.mean(n)],
            sigma_mv: lay.sigma(&p, n).0,
            weight: if fitted_counts > 0.0 {
                p[lay.count(n)] / fitted_counts
            } else {
                0.0
            },
        })
        .collect();
    // A peak holding less than one count has an undetermined mean.
    let occupied: Vec<&Peak> = peaks
        .iter()
        .filter(|pk| pk.weight * fitted_counts >= 1.0)
        .collect();
    if occupied.windows(2).any(|w| !(w[1].mean_mv > w[0].mean_mv)) {
        warnings.push(FitWarning::MeansOutOfOrder);
    }
    let tallest = peaks
        .iter()
        .map(|p| p.weight / p.sigma_mv)
        .fold(0.0, f64::max);
    for pk in &peaks[1..] {
        let ratio = if tallest > 0.0 {
            pk.weight / pk.sigma_mv / tallest
        } else {
            0.0
        };
        let counts = pk.weight * fitted_counts;
        if ratio < opts.visibility || counts < 25.0 {
            warnings.push(FitWarning::PeakNotVisible {
                n: pk.n,
                height_ratio: ratio,
                counts,
            });
        }
    }

    Ok(FitReport {
        model: MixtureModel {
            peaks,
            mode: opts.mode,
        },
        chi_square: cost,
        residual_norm: cost.sqrt(),
        dof: prob.n_bins().saturating_sub(np),
        iterations,
        converged,
        fitted_counts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::waveform::build_histogram;

    fn sample_hist(
        model: &MixtureModel,
        n: usize,
        seed: u64,
        range: (f64, f64),
    ) -> AmplitudeHistogram {
        let mut r = rng::from_seed(seed);
        build_histogram((0..n).map(|_| model.sample(&mut r).1), 0.5, range).unwrap()
    }

    #[test]
    fn too_few_counts() {
        let h = build_histogram([1.0; 10], 0.5, (-5.0, 110.0)).unwrap();
        assert!(matches!(
            fit_mixture(&h, &FitOptions::default()),
            Err(Error::InsufficientCounts { .. })
        ));
        let empty = build_histogram(std::iter::empty(), 0.5, (-5.0, 110.0)).unwrap();
        assert!(fit_mixture(&empty, &FitOptions::default()).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = sample_hist(
            &MixtureModel::constrained(&[0.0, 22.0, 44.0], 2.0, 4.0, &[0.5, 0.3, 0.2]).unwrap(),
            20_000,
            1,
            (-5.0, 70.0),
        );
        for mode in [WidthMode::Constrained, WidthMode::Free] {
            let lay = Layout { n_peaks: 3, mode };
            let prob = Problem {
                edges: &h.bin_edges,
                counts: h.counts.iter().map(|&c| c as f64).collect(),
                inv_sd: h
                    .counts
                    .iter()
                    .map(|&c| 1.0 / (c.max(1) as f64).sqrt())
                    .collect(),
                layout: lay,
                min_sigma: 0.01,
                range: (h.lo(), h.hi()),
            };
            let p = start_vector(lay, &[0.3, 21.0, 45.0], 2.2, 3.8, &[9000.0, 7000.0, 4000.0]);
            let mut jac = DMatrix::zeros(prob.n_bins(), lay.len());
            prob.evaluate(&p, Some(&mut jac));
            for k in 0..lay.len() {
                let h_k = 1e-6 * p[k].abs().max(1.0);
                let mut up = p.clone();
                up[k] += h_k;
                let mut dn = p.clone();
                dn[k] -= h_k;
                let fd = (prob.evaluate(&up, None) - prob.evaluate(&dn, None)) / (2.0 * h_k);
                let err = (&fd - jac.column(k)).amax();
                assert!(
                    err < 1e-5 * fd.amax().max(1.0),
                    "mode {mode:?} param {k}: {err} of {}",
                    fd.amax()
                );
            }
        }
    }

    #[test]
    fn recovers_known_mixture() {
        let truth = MixtureModel::poisson(
            PhotonFlux::new(1.5).unwrap(),
            &[0.0, 22.4, 43.1, 63.8, 85.5],
            2.0,
            4.0,
        )
        .unwrap();
        let h = sample_hist(&truth, 1_000_000, 2, (-10.0, 130.0));
        let rep = fit_mixture(&h, &FitOptions::default()).unwrap();
        assert!(rep.is_valid(), "{:?}", rep.warnings);
        for (fit, want) in rep.model.peaks.iter().zip(&truth.peaks) {
            assert!((fit.weight - want.weight).abs() < 0.01);
            assert!((fit.mean_mv - want.mean_mv).abs() < 0.5);
        }
        assert!((rep.model.peaks[1].sigma_mv - 4.0).abs() < 0.2);
    }

    #[test]
    fn vacuum_histogram_has_no_photon_peak() {
        let truth = MixtureModel::constrained(&[0.0, 22.4], 1.5, 4.0, &[1.0, 0.0]).unwrap();
        let h = sample_hist(&truth, 200_000, 3, (-5.0, 110.0));
        let opts = FitOptions {
            n_max: 1,
            ..FitOptions::default()
        };
        let rep = fit_mixture(&h, &opts).unwrap();
        assert!(rep.model.peaks[1].weight < 1e-4, "{:?}", rep.model);
        assert!(rep
            .warnings
            .iter()
            .any(|w| matches!(w, FitWarning::PeakNotVisible { n: 1, .. })));
    }
}
