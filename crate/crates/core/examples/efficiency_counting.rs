//! Detection efficiency, dark count and afterpulse probabilities from click
//! counting at 0.033 photons per pulse.
//!
//!     cargo run --release --example efficiency_counting

use apd_pnr::pipeline;
use apd_pnr::runspec;

fn main() -> apd_pnr::Result<()> {
    let spec = runspec::run_preset("efficiency")?;
    let out = pipeline::simulate(&spec)?;
    let s = out.counting.expect("preset asks for counting");
    println!("gates          {}", spec.n_gates);
    println!("P(click | lit) {:.5}", s.p_click_illuminated);
    println!("P(dark)        {:.3e}", s.p_click_dark);
    println!("eta            {:.4} +- {:.4}", s.eta_est, s.eta_stderr);
    println!("eta / QE       {:.4}", s.eta_est / spec.detector.qe);
    println!("afterpulse     {:.2}%", 100.0 * s.p_afterpulse);
    Ok(())
}
