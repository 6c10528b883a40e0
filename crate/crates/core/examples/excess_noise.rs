//! Excess noise of an avalanche amplitude distribution, from the closed form
//! and from a sample.

use rand_distr::{Distribution, Normal};

use apd_pnr::analysis::{excess_noise, excess_noise_of_peak};
use apd_pnr::rng;

fn main() -> apd_pnr::Result<()> {
    let (mean, sigma) = (22.4, 9.37);
    let d = Normal::new(mean, sigma).expect("valid normal");
    let mut r = rng::from_seed(3);
    let sample: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut r)).collect();
    println!("closed form  {:.4}", excess_noise_of_peak(mean, sigma)?);
    println!("sampled      {:.4}", excess_noise(&sample)?);
    println!("constant     {:.4}", excess_noise(&[22.4; 10])?);
    Ok(())
}
