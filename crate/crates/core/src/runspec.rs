//! Run and sweep specs, read from TOML, plus the built-in presets.
//!
//! A run spec names everything a simulation depends on, including the seed,
//! so an echoed spec reproduces the run exactly.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::FitOptions;
use crate::detector::{BiasResponse, DetectorConfig};
use crate::error::{Error, Result};
use crate::photonstat::PhotonFlux;
use crate::waveform::{
    Feedthrough, DEFAULT_BIN_WIDTH_MV, DEFAULT_RANGE_MV, DEFAULT_SAMPLES_PER_GATE,
};

/// Artifacts a run can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Records,
    Trace,
    Histogram,
    Fit,
    Discrimination,
    Counting,
}

/// How per-gate amplitudes are obtained from the simulated avalanches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    /// Record amplitude plus Gaussian readout noise of `sigma_elec_mv`.
    #[default]
    Amplitude,
    /// Synthesize the raw trace, self-difference it and extract the amplitude
    /// of every gate. `sigma_elec_mv` is then the per-sample noise.
    Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutOptions {
    pub mode: ReadoutMode,
    /// Histogram only the illuminated gates.
    pub illuminated_only: bool,
    pub bin_width_mv: f64,
    pub range_mv: (f64, f64),
    pub samples_per_gate: usize,
    pub feedthrough: Feedthrough,
    /// Gates written to the trace artifact.
    pub trace_gates: u64,
}

impl Default for ReadoutOptions {
    fn default() -> Self {
        Self {
            mode: ReadoutMode::Amplitude,
            illuminated_only: true,
            bin_width_mv: DEFAULT_BIN_WIDTH_MV,
            range_mv: DEFAULT_RANGE_MV,
            samples_per_gate: DEFAULT_SAMPLES_PER_GATE,
            feedthrough: Feedthrough::default(),
            trace_gates: 256,
        }
    }
}

impl ReadoutOptions {
    pub fn sample_rate(&self, cfg: &DetectorConfig) -> f64 {
        self.samples_per_gate as f64 * cfg.gate_frequency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_mv > 0.0) || !(self.range_mv.1 > self.range_mv.0) {
            return Err(Error::invalid(
                "range_mv",
                "need bin_width_mv > 0 and a non-empty range",
            ));
        }
        if self.trace_gates == 0 {
            return Err(Error::invalid("trace_gates", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    pub fit: FitOptions,
    /// Fold the fitted model into `0..=n` before placing thresholds; the top
    /// bin stays open-ended.
    pub discrimination_n_max: Option<usize>,
    /// Report errors for `0..=discrimination_n_max` with the top bin closed by
    /// the threshold to the next peak.
    pub closed_top_bin: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            discrimination_n_max: None,
            closed_top_bin: false,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<()> {
        if self.fit.n_max == 0 {
            return Err(Error::invalid("n_max", "need at least two peaks"));
        }
        if let Some(n) = self.discrimination_n_max {
            if n == 0 || n > self.fit.n_max || (self.closed_top_bin && n == self.fit.n_max) {
                return Err(Error::invalid(
                    "discrimination_n_max",
                    "must lie in 1..=n_max, and below n_max for a closed top bin",
                ));
            }
        } else if self.closed_top_bin {
            return Err(Error::invalid(
                "closed_top_bin",
                "needs discrimination_n_max",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingOptions {
    /// Length of the companion zero-flux run; defaults to `n_gates`.
    pub dark_run_gates: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    pub n_gates: u64,
    /// Mean incident photons per light pulse.
    pub flux: PhotonFlux,
    pub outputs: BTreeSet<Output>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub readout: ReadoutOptions,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub counting: CountingOptions,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_gates == 0 {
            return Err(Error::invalid("n_gates", "must be >= 1"));
        }
        self.detector.validate()?;
        self.readout.validate()?;
        self.analysis.validate()?;
        if self.readout.mode == ReadoutMode::Waveform && self.detector.illumination_divisor < 2 {
            // Self-differencing leaves A(g) - A(g - 1) in gate g, so every
            // light pulse needs an empty gate in front of it.
            return Err(Error::invalid(
                "illumination_divisor",
                "waveform readout needs a divisor of at least 2",
            ));
        }
        if self.counting.dark_run_gates == Some(0) {
            return Err(Error::invalid("dark_run_gates", "must be >= 1"));
        }
        Ok(())
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }

    /// Mean detected photons per light pulse.
    pub fn detected_flux(&self) -> f64 {
        self.flux.mu() * self.detector.efficiency().eta()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| with_path(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run spec serializes")
    }

    pub fn hash(&self) -> String {
        spec_hash(self.to_toml().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSweep {
    /// Mean incident photons per light pulse.
    pub flux: PhotonFlux,
    pub v_dc: Vec<f64>,
    #[serde(default)]
    pub response: BiasResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSweep {
    /// Mean incident photons per light pulse, one histogram each.
    pub values: Vec<PhotonFlux>,
}

/// A bias sweep (counting estimates per bias) or a flux sweep (one
/// histogram and fit per flux). Exactly one of the two sections is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub seed: u64,
    pub n_gates: u64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub readout: ReadoutOptions,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<FluxSweep>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_gates == 0 {
            return Err(Error::invalid("n_gates", "must be >= 1"));
        }
        self.detector.validate()?;
        self.readout.validate()?;
        self.analysis.validate()?;
        match (&self.bias, &self.flux) {
            (Some(b), None) => {
                if b.v_dc.is_empty() {
                    return Err(Error::invalid("v_dc", "bias list is empty"));
                }
                b.response.validate()
            }
            (None, Some(f)) if f.values.is_empty() => {
                Err(Error::invalid("values", "flux list is empty"))
            }
            (None, Some(_)) => Ok(()),
            _ => Err(Error::Config(
                "a sweep needs exactly one of [bias] or [flux]".into(),
            )),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| with_path(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    pub fn hash(&self) -> String {
        spec_hash(self.to_toml().as_bytes())
    }

    /// The run spec of flux point `mu`, with `outputs`.
    pub fn run_at(&self, mu: PhotonFlux, seed: u64, outputs: BTreeSet<Output>) -> RunSpec {
        RunSpec {
            seed,
            n_gates: self.n_gates,
            flux: mu,
            outputs,
            detector: self.detector.clone(),
            readout: self.readout.clone(),
            analysis: self.analysis.clone(),
            counting: CountingOptions::default(),
        }
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        Error::InvalidParameter { name, reason } => {
            Error::Config(format!("{}: `{name}`: {reason}", path.display()))
        }
        other => other,
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn spec_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Built-in run presets.
pub const RUN_PRESETS: &[(&str, &str)] = &[
    ("efficiency", include_str!("../presets/efficiency.toml")),
    ("fig4a", include_str!("../presets/fig4a.toml")),
    ("fig4b", include_str!("../presets/fig4b.toml")),
    ("fig4c", include_str!("../presets/fig4c.toml")),
    ("fig4d", include_str!("../presets/fig4d.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
];

/// Built-in sweep presets.
pub const SWEEP_PRESETS: &[(&str, &str)] = &[
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4-sweep", include_str!("../presets/fig4-sweep.toml")),
];

fn lookup<'a>(table: &[(&str, &'a str)], name: &str) -> Result<&'a str> {
    table
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "unknown preset `{name}` (available: {})",
                names.join(", ")
            ))
        })
}

pub fn run_preset(name: &str) -> Result<RunSpec> {
    RunSpec::parse(lookup(RUN_PRESETS, name)?)
        .map_err(|e| Error::Config(format!("preset {name}: {e}")))
}

pub fn sweep_preset(name: &str) -> Result<SweepSpec> {
    SweepSpec::parse(lookup(SWEEP_PRESETS, name)?)
        .map_err(|e| Error::Config(format!("preset {name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_round_trips() {
        for (name, _) in RUN_PRESETS {
            let s = run_preset(name).unwrap();
            assert_eq!(RunSpec::parse(&s.to_toml()).unwrap(), s, "{name}");
        }
        for (name, _) in SWEEP_PRESETS {
            let s = sweep_preset(name).unwrap();
            assert_eq!(SweepSpec::parse(&s.to_toml()).unwrap(), s, "{name}");
        }
        assert!(run_preset("fig9").is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let err = RunSpec::parse("n_gates = 10\nflux = 1.0\noutputs = []\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let base = "seed = 1\nn_gates = 10\nflux = 1.0\noutputs = [\"histogram\"]\n";
        assert!(RunSpec::parse(base).is_ok());
        assert!(RunSpec::parse(&format!("{base}colour = 3\n")).is_err());
        assert!(RunSpec::parse(&format!("{base}[detector]\nqe = 1.5\n")).is_err());
        assert!(RunSpec::parse(&base.replace("flux = 1.0", "flux = -1.0")).is_err());
        assert!(RunSpec::parse(&base.replace("n_gates = 10", "n_gates = 0")).is_err());
        assert!(RunSpec::parse(&base.replace("histogram", "plot")).is_err());
    }

    #[test]
    fn parse_error_names_the_line() {
        let err =
            RunSpec::parse("seed = 1\nn_gates = 10\nflux = \"lots\"\noutputs = []\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn sweep_needs_exactly_one_kind() {
        let base = "seed = 1\nn_gates = 10\n";
        assert!(SweepSpec::parse(base).is_err());
        assert!(SweepSpec::parse(&format!("{base}[bias]\nflux = 0.033\nv_dc = []\n")).is_err());
        assert!(SweepSpec::parse(&format!("{base}[bias]\nflux = 0.033\nv_dc = [49.0]\n")).is_ok());
        assert!(SweepSpec::parse(&format!("{base}[flux]\nvalues = [0.21]\n")).is_ok());
        assert!(SweepSpec::parse(&format!(
            "{base}[flux]\nvalues = [0.21]\n[bias]\nflux = 0.1\nv_dc = [49.0]\n"
        ))
        .is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = run_preset("fig4a").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
