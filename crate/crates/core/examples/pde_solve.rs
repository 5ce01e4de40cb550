//! Solves both benchmark problems for one random input and checks the
//! Jacobian against central finite differences.

use rbno::rng::NormalStream;
use rbno::{Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn main() -> rbno::Result<()> {
    for kind in [ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers] {
        let mesh = Mesh1D::uniform(256)?;
        let problem = PdeProblem::new(kind, mesh.clone())?;
        let cov = SpectralCovariance::new(mesh, kind.default_covariance())?;
        let x = cov.sample(&mut NormalStream::new(7, 0));

        let sol = problem.solve(&x, &x.map(|_| 0.0))?;
        let jac = problem.linearize(&sol.y)?;

        let dir = cov.sample(&mut NormalStream::new(7, 1));
        let eps = 1e-6;
        let plus = problem.forward(&(&x + eps * &dir))?;
        let minus = problem.forward(&(&x - eps * &dir))?;
        let fd = (plus - minus) / (2.0 * eps);
        let analytic = jac.apply_vec(&dir);
        println!(
            "{:<10} newton iterations {:>2}  residual {:.1e}  max|y| {:.4}  jacobian rel err {:.1e}",
            kind.name(),
            sol.iterations,
            sol.residual_norm,
            sol.y.amax(),
            (&fd - &analytic).norm() / analytic.norm()
        );
    }
    Ok(())
}
