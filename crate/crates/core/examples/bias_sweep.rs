//! Efficiency, dark count and afterpulse probability against DC bias.

use apd_pnr::detector::{bias_sweep, BiasResponse, DetectorConfig};
use apd_pnr::photonstat::PhotonFlux;

fn main() -> apd_pnr::Result<()> {
    let resp = BiasResponse::default();
    let cfg = DetectorConfig::default();
    let volts: Vec<f64> = (0..=10).map(|i| 44.0 + 0.5 * i as f64).collect();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let pts = bias_sweep(
        &resp,
        &cfg,
        &volts,
        PhotonFlux::new(0.033)?,
        2_000_000,
        9,
        jobs,
    )?;

    println!("v_dc   p_eta  eta_est  +-      dark      afterpulse");
    for p in pts {
        println!(
            "{:.1} {:.4} {:.4} {:.4} {:.2e} {:.4}",
            p.v_dc, p.p_eta, p.eta_est, p.eta_stderr, p.dark_est, p.afterpulse_est
        );
    }
    Ok(())
}
