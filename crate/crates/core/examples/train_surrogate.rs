//! Trains a small derivative-informed surrogate and reports its test errors.

use rbno::experiment::fit_rbno;
use rbno::metrics::{h1_semi_error, l2_error};
use rbno::reduction::build_basis;
use rbno::surrogate::{NetworkConfig, TrainingSchedule};
use rbno::{generate_dataset, BasisKind, Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let kind = ProblemKind::SemilinearElliptic;
    let mesh = Mesh1D::uniform(256)?;
    let problem = PdeProblem::new(kind, mesh.clone())?;
    let cov = SpectralCovariance::new(mesh.clone(), kind.default_covariance())?;
    let train = generate_dataset(&problem, &cov, 250, 1)?;
    let test = generate_dataset(&problem, &cov, 200, 99)?;

    let network = NetworkConfig::for_problem(kind);
    let mut schedule = TrainingSchedule::desk(network.lr0, 1);
    schedule.epochs = 200;
    schedule.lr_halvings = vec![150, 160, 170, 180, 190];

    for input_kind in [BasisKind::InputPca, BasisKind::InputDis] {
        let input = build_basis(input_kind, &train, &cov, 10)?;
        let output = build_basis(BasisKind::OutputPca, &train, &cov, 10)?;
        let (rbno, report) = fit_rbno(&train, input, output, &network, &schedule)?;
        let l2 = l2_error(&test, &mesh, &rbno)?;
        let h1 = h1_semi_error(&test, &cov, &rbno)?;
        println!(
            "{input_kind:<10} loss {:.3e} -> {:.3e}   test L2 {:.4}  H1 {:.4}",
            report.initial_loss, report.final_loss, l2.value, h1.value
        );
    }
    Ok(())
}
