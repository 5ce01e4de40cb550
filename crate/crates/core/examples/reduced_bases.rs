//! Builds the data-driven reduced bases from one training set and compares
//! their training-set reconstruction errors with the trailing eigenvalue sums.

use rbno::metrics::{reconstruction_curve, Reconstruction};
use rbno::reduction::build_basis;
use rbno::{generate_dataset, BasisKind, Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let kind = ProblemKind::SemilinearElliptic;
    let mesh = Mesh1D::uniform(256)?;
    let problem = PdeProblem::new(kind, mesh.clone())?;
    let cov = SpectralCovariance::new(mesh, kind.default_covariance())?;
    let train = generate_dataset(&problem, &cov, 400, 1)?;
    let ranks = [5, 10, 20];

    for basis_kind in [BasisKind::OutputPca, BasisKind::InputDis, BasisKind::OutputDis] {
        let basis = build_basis(basis_kind, &train, &cov, 20)?;
        let quantity = Reconstruction::matching(basis_kind);
        let curve = reconstruction_curve(&train, &cov, &basis, quantity, &ranks)?;
        println!("{basis_kind} ({})", quantity.name());
        for (r, report) in ranks.iter().zip(&curve) {
            println!(
                "  r = {r:>2}  mean error {:.6e}  trailing sum {:.6e}",
                report.mean_error(),
                basis.trailing_sum(*r)?
            );
        }
    }
    Ok(())
}
