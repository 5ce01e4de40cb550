//! Splits the test error of a trained surrogate into latent and reconstruction
//! terms and writes the result as a metrics CSV.

use rbno::experiment::fit_rbno;
use rbno::metrics::{error_decomposition, write_csv, MetricRow};
use rbno::reduction::build_basis;
use rbno::surrogate::{NetworkConfig, TrainingSchedule};
use rbno::{generate_dataset, BasisKind, Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let kind = ProblemKind::SteadyBurgers;
    let mesh = Mesh1D::uniform(256)?;
    let problem = PdeProblem::new(kind, mesh.clone())?;
    let cov = SpectralCovariance::new(mesh, kind.default_covariance())?;
    let train = generate_dataset(&problem, &cov, 200, 1)?;
    let test = generate_dataset(&problem, &cov, 100, 99)?;

    let network = NetworkConfig::for_problem(kind);
    let mut schedule = TrainingSchedule::desk(network.lr0, 1);
    schedule.epochs = 100;
    schedule.lr_halvings = vec![75, 80, 85, 90, 95];
    let input = build_basis(BasisKind::InputDis, &train, &cov, 10)?;
    let output = build_basis(BasisKind::OutputDis, &train, &cov, 10)?;
    let (rbno, _) = fit_rbno(&train, input, output, &network, &schedule)?;

    let d = error_decomposition(&test, &cov, &rbno)?;
    println!("L2  measured {:.4e}  bound {:.4e}", d.l2_measured, d.l2_bound());
    println!(
        "    latent {:.3e}  output reconstruction {:.3e}  mean shift {:.3e}",
        d.l2_latent, d.l2_output_reconstruction, d.l2_mean_shift
    );
    println!("H1  measured {:.4e}  bound {:.4e}", d.h1_measured, d.h1_bound());
    println!(
        "    latent {:.3e}  input reconstruction {:.3e}  output reconstruction {:.3e}",
        d.h1_latent, d.h1_input_reconstruction, d.h1_output_reconstruction
    );
    println!("bounds hold: {}", d.holds(1e-9));

    let rows: Vec<MetricRow> = [("l2_error", d.l2_measured), ("h1_semi_error", d.h1_measured)]
        .into_iter()
        .map(|(metric, value)| MetricRow {
            metric: metric.into(),
            problem: kind.name().into(),
            basis_in: "input_dis".into(),
            basis_out: "output_dis".into(),
            rank: 10,
            n_train: train.len(),
            seed: 1,
            value,
            denominator: 1.0,
        })
        .collect();
    let path = std::env::temp_dir().join("rbno-decomposition.csv");
    write_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}
