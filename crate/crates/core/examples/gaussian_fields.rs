//! Draws input fields from the spectral covariance and checks the
//! whitening/coloring round trip and the sample trace.

use rbno::rng::NormalStream;
use rbno::{CovarianceParams, Mesh1D, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let mesh = Mesh1D::uniform(256)?;
    let cov = SpectralCovariance::new(mesh, CovarianceParams { a_delta: 2.0, a_identity: 10.0, alpha: 1.0 })?;
    let mut rng = NormalStream::new(42, 0);

    let n = 2000;
    let mut mean_norm = 0.0;
    let mut worst_round_trip: f64 = 0.0;
    for _ in 0..n {
        let x = cov.sample(&mut rng);
        mean_norm += cov.mesh().norm_sq(&x) / n as f64;
        let back = cov.unwhiten(&cov.whiten(&x));
        worst_round_trip = worst_round_trip.max((&back - &x).amax() / x.amax());
    }
    println!("dimension               {}", cov.dim());
    println!("trace of C              {:.6}", cov.trace());
    println!("mean ||x||_M^2 ({n})   {:.6}", mean_norm);
    println!("whiten/unwhiten error   {:.2e}", worst_round_trip);
    println!("leading eigenvalues     {:?}", cov.mu().iter().take(5).map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    Ok(())
}
