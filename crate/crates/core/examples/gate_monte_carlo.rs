//! A few hundred gates of the detector model, with dark counts and
//! afterpulsing turned up so they show.

use apd_pnr::analysis::ClickTally;
use apd_pnr::detector::{simulate_run, DetectorConfig};
use apd_pnr::photonstat::PhotonFlux;

fn main() -> apd_pnr::Result<()> {
    let cfg = DetectorConfig {
        dark_prob: 0.01,
        trap_fill: 0.5,
        illumination_divisor: 8,
        ..DetectorConfig::default()
    };
    let records = simulate_run(&cfg, PhotonFlux::new(2.0)?, 400, 42)?;

    println!("gate lit incident detected dark afterpulse amplitude_mv");
    for r in records.iter().filter(|r| r.clicked()).take(25) {
        println!(
            "{:>4} {:>3} {:>8} {:>8} {:>4} {:>10} {:>12.2}",
            r.gate_index,
            r.illuminated as u8,
            r.n_incident,
            r.n_detected,
            r.n_dark,
            r.n_afterpulse,
            r.amplitude_mv
        );
    }
    let t = ClickTally::from_records(&records);
    println!(
        "clicks: {}/{} illuminated, {}/{} dark",
        t.illuminated_clicks, t.illuminated_gates, t.dark_clicks, t.dark_gates
    );
    Ok(())
}
