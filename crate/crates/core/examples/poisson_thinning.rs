//! Photon-number statistics of a weak coherent pulse before and after the
//! detection chain.
//!
//!     cargo run --example poisson_thinning -- 5.16

use apd_pnr::photonstat::{
    detected_flux, poisson_pmf, sample_photon_number, thin, EfficiencyChain, PhotonFlux,
};
use apd_pnr::rng;

fn main() -> apd_pnr::Result<()> {
    let mu: f64 = std::env::args()
        .nth(1)
        .map_or(Ok(5.16), |s| s.parse())
        .expect("flux");
    let flux = PhotonFlux::new(mu)?;
    let chain = EfficiencyChain::new(0.81, 0.911)?;
    let det = detected_flux(flux, &chain);

    let draws = 1_000_000;
    let mut hist = [0u64; 16];
    let mut r = rng::from_seed(1);
    for _ in 0..draws {
        let n = sample_photon_number(flux, &mut r);
        let k = thin(thin(n, chain.qe(), &mut r)?, chain.p_eta(), &mut r)?;
        hist[(k as usize).min(15)] += 1;
    }

    println!(
        "incident mu = {mu}, eta = {:.4}, detected mu = {:.4}",
        chain.eta(),
        det.mu()
    );
    println!("{:>3} {:>10} {:>10}", "n", "sampled", "poisson");
    for (n, &c) in hist.iter().enumerate().take(12) {
        println!(
            "{n:>3} {:>10.6} {:>10.6}",
            c as f64 / draws as f64,
            poisson_pmf(n as u64, det)
        );
    }
    Ok(())
}
