use serde::{Deserialize, Serialize};

use super::{MixtureModel, Peak};
use crate::error::{Error, Result};

/// Thresholds between adjacent photon numbers and the per-state error of the
/// resulting assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationResult {
    pub thresholds_mv: Vec<f64>,
    /// `errors[N]`: probability that a true N-photon amplitude falls outside
    /// bin N.
    pub errors: Vec<f64>,
}

/// Discrimination levels at the crossing of each adjacent pair of peaks,
/// with both peaks normalized to unit mass. The fitted weights play no role.
pub fn place_thresholds(model: &MixtureModel) -> Result<Vec<f64>> {
    if model.peaks.len() < 2 {
        return Err(Error::invalid(
            "peaks",
            "need at least two peaks to discriminate",
        ));
    }
    model
        .peaks
        .windows(2)
        .map(|pair| crossing(&pair[0], &pair[1]))
        .collect()
}

/// Root of `ln pdf_lo(t) - ln pdf_hi(t)` inside `(mean_lo, mean_hi)`.
///
/// At `mean_lo` the lower peak dominates unless the upper one is much wider;
/// at `mean_hi` the upper one dominates. With unequal widths the log-ratio is
/// quadratic and has a second root outside the interval, which the bracket
/// excludes.
fn crossing(lo: &Peak, hi: &Peak) -> Result<f64> {
    let f = |t: f64| lo.ln_pdf(t) - hi.ln_pdf(t);
    let (mut a, mut b) = (lo.mean_mv, hi.mean_mv);
    let (fa, fb) = (f(a), f(b));
    if !(fa > 0.0 && fb < 0.0) {
        return Err(Error::NoCrossing {
            lower: lo.n,
            upper: hi.n,
            lower_mean: lo.mean_mv,
            upper_mean: hi.mean_mv,
        });
    }
    // Bisection: 60 halvings take any realistic interval below 1e-12 mV.
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Assigned photon number for amplitude `v`: bins are right-closed,
/// `(-inf, t0], (t0, t1], ..., (t_last, inf)`.
pub fn classify(v: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().take_while(|&&t| v > t).count()
}

/// Mass of each unit-normalized peak outside its own bin. The top bin is
/// open-ended, so for a model truncated at `N = 2` the result answers the
/// 0 / 1 / >=2 task.
pub fn discrimination_errors(
    model: &MixtureModel,
    thresholds: &[f64],
) -> Result<DiscriminationResult> {
    if thresholds.len() + 1 != model.peaks.len() {
        return Err(Error::invalid(
            "thresholds",
            "need exactly one threshold per adjacent pair of peaks",
        ));
    }
    if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("thresholds", "must increase strictly"));
    }
    let errors = model
        .peaks
        .iter()
        .map(|p| {
            let below = p.n.checked_sub(1).map_or(0.0, |i| p.cdf(thresholds[i]));
            let above = thresholds.get(p.n).map_or(0.0, |&t| p.sf(t));
            below + above
        })
        .collect();
    Ok(DiscriminationResult {
        thresholds_mv: thresholds.to_vec(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{upper_tail, WidthMode};

    fn pair(m0: f64, s0: f64, m1: f64, s1: f64) -> MixtureModel {
        MixtureModel::new(
            vec![
                Peak {
                    n: 0,
                    mean_mv: m0,
                    sigma_mv: s0,
                    weight: 0.9,
                },
                Peak {
                    n: 1,
                    mean_mv: m1,
                    sigma_mv: s1,
                    weight: 0.1,
                },
            ],
            WidthMode::Free,
        )
        .unwrap()
    }

    #[test]
    fn equal_widths_cross_at_midpoint() {
        let t = place_thresholds(&pair(0.0, 3.0, 22.4, 3.0)).unwrap();
        assert!((t[0] - 11.2).abs() < 1e-9);
    }

    #[test]
    fn unequal_widths_match_grid_oracle() {
        for s1 in [4.0, 6.14, 9.37] {
            let m = pair(22.4, s1, 43.1, s1 * 2f64.sqrt());
            let t = place_thresholds(&m).unwrap()[0];
            // Dense-grid sign change of the density difference.
            let (p, q) = (m.peaks[0], m.peaks[1]);
            let step = 1e-5;
            let mut x = 22.4;
            while p.pdf(x) - q.pdf(x) > 0.0 {
                x += step;
            }
            assert!((t - (x - step / 2.0)).abs() < 1e-3, "s1={s1}: {t} vs {x}");
        }
    }

    #[test]
    fn weights_do_not_move_thresholds() {
        let a = pair(0.0, 2.0, 22.4, 4.0);
        let mut b = a.clone();
        b.peaks[0].weight = 0.1;
        b.peaks[1].weight = 0.9;
        assert_eq!(place_thresholds(&a).unwrap(), place_thresholds(&b).unwrap());
    }

    #[test]
    fn pathological_overlap_reported() {
        // The wide lower peak never rises above the narrow upper one nearby.
        let m = pair(0.0, 10.0, 0.5, 1.0);
        assert!(matches!(
            place_thresholds(&m),
            Err(Error::NoCrossing {
                lower: 0,
                upper: 1,
                ..
            })
        ));
    }

    #[test]
    fn equal_sigma_errors_are_gaussian_tails() {
        let sigma = 2.5;
        let d = 2.0 * sigma;
        let m = pair(0.0, sigma, d, sigma);
        let t = place_thresholds(&m).unwrap();
        let r = discrimination_errors(&m, &t).unwrap();
        for e in r.errors {
            assert!((e - 0.158_655_253_931_457_05).abs() < 1e-9);
            assert!((e - upper_tail(1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn separated_peaks_have_vanishing_error() {
        let m = MixtureModel::constrained(
            &[0.0, 20.0, 40.0],
            1.0,
            1.0 / 2f64.sqrt().sqrt(),
            &[0.4, 0.4, 0.2],
        );
        // Widths 1, 0.84, 1.19: every gap is at least 8 sigma on each side.
        let m = m.unwrap();
        let t = place_thresholds(&m).unwrap();
        let r = discrimination_errors(&m, &t).unwrap();
        assert!(r.errors.iter().all(|&e| e < 1e-15), "{:?}", r.errors);
        let far = pair(0.0, 1.0, 20.0, 1.0);
        let r = discrimination_errors(&far, &place_thresholds(&far).unwrap()).unwrap();
        assert!(r.errors.iter().all(|&e| e < 1e-15 && e > 0.0));
    }

    #[test]
    fn classify_is_right_closed() {
        let t = [5.0, 30.0];
        assert_eq!(classify(-1.0, &t), 0);
        assert_eq!(classify(5.0, &t), 0);
        assert_eq!(classify(5.000001, &t), 1);
        assert_eq!(classify(30.0, &t), 1);
        assert_eq!(classify(99.0, &t), 2);
    }
}
