use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BIN_WIDTH_MV: f64 = 0.5;
pub const DEFAULT_RANGE_MV: (f64, f64) = (-5.0, 110.0);

/// Pulse-height histogram with uniform bins.
///
/// `total` counts the in-range entries only; values outside the binned range
/// are tallied in `underflow` / `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
}

impl AmplitudeHistogram {
    /// Empty histogram with `bin_width` bins covering `[lo, hi)`. The last bin
    /// is widened to a whole multiple of `bin_width` when needed.
    pub fn new(bin_width: f64, (lo, hi): (f64, f64)) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if !(hi > lo) {
            return Err(Error::invalid("range", format!("empty range [{lo}, {hi})")));
        }
        let n = ((hi - lo) / bin_width - 1e-9).ceil().max(1.0) as usize;
        let bin_edges = (0..=n).map(|i| lo + i as f64 * bin_width).collect();
        Ok(Self {
            bin_edges,
            counts: vec![0; n],
            total: 0,
            underflow: 0,
            overflow: 0,
        })
    }

    /// Histogram from explicit edges and counts (e.g. read from a file).
    pub fn from_parts(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::invalid(
                "bin_edges",
                "need one more edge than bins and at least one bin",
            ));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "bin_edges",
                "edges must be strictly increasing",
            ));
        }
        let total = counts.iter().sum();
        Ok(Self {
            bin_edges,
            counts,
            total,
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn lo(&self) -> f64 {
        self.bin_edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.bin_edges.last().unwrap()
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        self.bin_edges[i + 1] - self.bin_edges[i]
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo() && v < self.hi()) {
            return None;
        }
        // Uniform-bin guess, corrected against the stored edges.
        let w = (self.hi() - self.lo()) / self.n_bins() as f64;
        let mut i = (((v - self.lo()) / w) as usize).min(self.n_bins() - 1);
        while i > 0 && v < self.bin_edges[i] {
            i -= 1;
        }
        while i + 1 < self.n_bins() && v >= self.bin_edges[i + 1] {
            i += 1;
        }
        Some(i)
    }

    pub fn fill(&mut self, v: f64) {
        match self.bin_of(v) {
            Some(i) => {
                self.counts[i] += 1;
                self.total += 1;
            }
            None if v < self.lo() => self.underflow += 1,
            None => self.overflow += 1,
        }
    }

    /// Bin probabilities relative to the in-range total.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Probability density per mV.
    pub fn density(&self) -> Vec<f64> {
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(i, p)| p / self.bin_width(i))
            .collect()
    }
}

pub fn build_histogram(
    amplitudes: impl IntoIterator<Item = f64>,
    bin_width_mv: f64,
    range: (f64, f64),
) -> Result<AmplitudeHistogram> {
    let mut h = AmplitudeHistogram::new(bin_width_mv, range)?;
    amplitudes.into_iter().for_each(|v| h.fill(v));
    Ok(h)
}
