//! Random Hermite polynomial maps: exact inverse-inequality constants and the
//! subspace Poincare inequality.

use rbno::metrics::subspace_poincare_check;
use rbno::polymap::{verify_constants, HermiteMap};
use rbno::rng::NormalStream;

fn main() -> rbno::Result<()> {
    let mut rng = NormalStream::new(3, 0);
    for degree in 1..=4 {
        let map = HermiteMap::random(4, 3, degree, 6, &mut rng)?;
        let c = verify_constants(&map, 10_000, degree as u64)?;
        println!(
            "degree {degree}: K_D = {:.4} (<= {degree})  K_H = {:.4} (<= {})  E|DF|^2 = {:.4} (MC {:.4} +- {:.4})",
            c.k_d,
            c.k_h,
            degree - 1,
            c.derivative_energy,
            c.derivative_energy_mc,
            c.derivative_energy_se
        );
        for row in subspace_poincare_check(&map, &[0, 1, 2, 3, 4])? {
            println!("    r = {}  lhs {:.4e}  rhs {:.4e}  holds {}", row.r, row.lhs, row.rhs, row.holds());
        }
    }
    Ok(())
}
