//! Click-counting estimators for detection efficiency, dark counts and
//! afterpulsing.

use serde::{Deserialize, Serialize};

use crate::detector::GateRecord;
use crate::photonstat::PhotonFlux;

/// Click counts split by illumination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickTally {
    pub illuminated_gates: u64,
    pub illuminated_clicks: u64,
    pub dark_gates: u64,
    pub dark_clicks: u64,
}

impl ClickTally {
    pub fn record(&mut self, illuminated: bool, clicked: bool) {
        if illuminated {
            self.illuminated_gates += 1;
            self.illuminated_clicks += u64::from(clicked);
        } else {
            self.dark_gates += 1;
            self.dark_clicks += u64::from(clicked);
        }
    }

    pub fn push(&mut self, rec: &GateRecord) {
        self.record(rec.illuminated, rec.clicked());
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a GateRecord>) -> Self {
        let mut t = Self::default();
        records.into_iter().for_each(|r| t.push(r));
        t
    }

    pub fn gates(&self) -> u64 {
        self.illuminated_gates + self.dark_gates
    }

    pub fn clicks(&self) -> u64 {
        self.illuminated_clicks + self.dark_clicks
    }

    /// Click probability over every gate of the run.
    pub fn click_probability(&self) -> f64 {
        ratio(self.clicks(), self.gates())
    }

    pub fn merge(&mut self, other: &ClickTally) {
        self.illuminated_gates += other.illuminated_gates;
        self.illuminated_clicks += other.illuminated_clicks;
        self.dark_gates += other.dark_gates;
        self.dark_clicks += other.dark_clicks;
    }
}

impl<'a> FromIterator<&'a GateRecord> for ClickTally {
    fn from_iter<I: IntoIterator<Item = &'a GateRecord>>(iter: I) -> Self {
        Self::from_records(iter)
    }
}

impl FromIterator<GateRecord> for ClickTally {
    fn from_iter<I: IntoIterator<Item = GateRecord>>(iter: I) -> Self {
        let mut t = Self::default();
        iter.into_iter().for_each(|r| t.push(&r));
        t
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingSummary {
    pub p_click_illuminated: f64,
    pub p_click_dark: f64,
    /// Afterpulse clicks per avalanche in the illuminated gates.
    pub p_afterpulse: f64,
    pub eta_est: f64,
    /// One-sigma statistical uncertainty of `eta_est` (delta method).
    pub eta_stderr: f64,
    pub mu_in: PhotonFlux,
    /// Illuminated click rate did not exceed the dark rate; `eta_est` is 0.
    pub degenerate: bool,
}

/// Efficiency, dark and afterpulse estimates from an illuminated run and a
/// companion zero-flux run of the same detector.
///
/// `eta = -ln[(1 - P_ill) / (1 - P_dark)] / mu`. The afterpulse probability is
/// the excess click rate of the non-illuminated gates of the illuminated run
/// over the dark rate, divided by the number of avalanches in the illuminated
/// gates.
pub fn estimate_efficiency(
    illuminated: &ClickTally,
    dark_run: &ClickTally,
    mu_in: PhotonFlux,
) -> CountingSummary {
    let p_ill = ratio(
        illuminated.illuminated_clicks,
        illuminated.illuminated_gates,
    );
    let p_dark = dark_run.click_probability();

    let degenerate = mu_in.mu() <= 0.0 || p_ill <= p_dark || p_ill >= 1.0;
    let (eta_est, eta_stderr) = if degenerate {
        (0.0, 0.0)
    } else {
        let mu = mu_in.mu();
        let eta = -((1.0 - p_ill) / (1.0 - p_dark)).ln() / mu;
        let var_ill = p_ill * (1.0 - p_ill) / illuminated.illuminated_gates as f64;
        let var_dark = if dark_run.gates() > 0 {
            p_dark * (1.0 - p_dark) / dark_run.gates() as f64
        } else {
            0.0
        };
        let se = (var_ill / (1.0 - p_ill).powi(2) + var_dark / (1.0 - p_dark).powi(2)).sqrt() / mu;
        (eta.clamp(0.0, 1.0), se)
    };

    let p_afterpulse = if illuminated.illuminated_clicks == 0 || illuminated.dark_gates == 0 {
        0.0
    } else {
        let excess = illuminated.dark_clicks as f64 - illuminated.dark_gates as f64 * p_dark;
        (excess / illuminated.illuminated_clicks as f64).clamp(0.0, 1.0)
    };

    CountingSummary {
        p_click_illuminated: p_ill,
        p_click_dark: p_dark,
        p_afterpulse,
        eta_est,
        eta_stderr,
        mu_in,
        degenerate,
    }
}
