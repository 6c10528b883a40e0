//! Raw detector output is dominated by the gate feedthrough; subtracting
//! the trace delayed by one gate period leaves only the avalanches.
//!
//! Prints per-gate maxima of the raw and self-differenced traces next to the
//! simulated amplitude.

use apd_pnr::detector::{simulate_run, DetectorConfig};
use apd_pnr::photonstat::PhotonFlux;
use apd_pnr::rng;
use apd_pnr::waveform::{
    extract_amplitudes, extract_with_boxcar, self_difference, synthesize_trace, Feedthrough,
    GateGeometry,
};

fn main() -> apd_pnr::Result<()> {
    let cfg = DetectorConfig {
        peak_means_mv: vec![22.4, 43.1, 63.8, 85.5],
        illumination_divisor: 2,
        ..DetectorConfig::default()
    };
    let records = simulate_run(&cfg, PhotonFlux::new(3.0)?, 32, 5)?;
    let rate = 64.0 * cfg.gate_frequency;
    let geom = GateGeometry::new(&cfg, rate)?;
    let raw = synthesize_trace(
        &records,
        &cfg,
        rate,
        &Feedthrough::default(),
        &mut rng::from_seed(6),
    )?;
    let diff = self_difference(&raw, geom.samples_per_gate)?;

    let raw_max = extract_with_boxcar(&raw, &cfg, 1)?;
    let diff_amp = extract_amplitudes(&diff, &cfg)?;
    println!("gate  true_mv   raw_max_mv  self_diff_mv");
    for (g, a) in diff_amp {
        let r = &records[g as usize];
        println!(
            "{g:>4} {:>8.2} {:>12.2} {:>13.2}",
            r.amplitude_mv, raw_max[g as usize].1, a
        );
    }
    Ok(())
}
