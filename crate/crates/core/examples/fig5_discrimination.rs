//! Discrimination levels and misassignment probabilities for the 0 / 1 / >=2
//! photon task at a detected flux of 0.92.

use apd_pnr::pipeline;
use apd_pnr::runspec;

fn main() -> apd_pnr::Result<()> {
    let spec = runspec::run_preset("fig5")?;
    let out = pipeline::simulate(&spec)?;
    let a = out.analysis.expect("fig5 asks for a fit");
    let d = a.discrimination.expect("fig5 asks for discrimination");

    for (i, t) in d.result.thresholds_mv.iter().enumerate() {
        println!("level {i}|{}: {t:.2} mV", i + 1);
    }
    for (n, e) in d.result.errors.iter().enumerate() {
        let label = if n + 1 == d.result.errors.len() {
            format!(">={n}")
        } else {
            n.to_string()
        };
        println!("eps_{label:<3} = {:.2}%", 100.0 * e);
    }
    println!(
        "fitted sigma0 = {:.2} mV, sigma1 = {:.2} mV",
        d.model.peaks[0].sigma_mv, d.model.peaks[1].sigma_mv
    );
    Ok(())
}
