//! End-to-end run of the file-based pipeline on a reduced configuration:
//! generate, build bases, train every run and evaluate every suite.
//! Pass an output directory as the first argument to keep the artifacts.

use rbno::experiment::{ExperimentConfig, Suite, Workspace};
use rbno::{BasisKind, ProblemKind};

fn main() -> rbno::Result<()> {
    let mut config = ExperimentConfig::desk(ProblemKind::SemilinearElliptic);
    config.n_el = 64;
    config.train_sizes = vec![100, 200];
    config.test_size = 200;
    config.reference_size = 1000;
    config.ranks = vec![5];
    config.seeds = vec![1, 2];
    config.reconstruction_rank = 10;
    config.excess_sizes = vec![40, 80];
    config.excess_seeds = vec![11, 12];
    config.excess_rank = 5;
    config.schedule.epochs = 60;
    config.schedule.lr_halvings = vec![45, 48, 51, 54, 57];
    config.theory.maps = 8;

    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join(format!("rbno-pipeline-{}", std::process::id())));
    let ws = Workspace::new(&root, config)?;
    println!("config digest {}", ws.digest());
    for (role, n, seed) in ws.planned_datasets(true) {
        ws.generate(role, n, seed)?;
    }
    for (kind, r, n, seed) in ws.planned_bases() {
        ws.build_basis(kind, r, n, seed)?;
    }
    for kind in [BasisKind::OutputPca, BasisKind::OutputDis, BasisKind::InputDis] {
        ws.build_reference_basis(kind, ws.config().excess_rank)?;
    }
    for run in ws.config().runs() {
        ws.train_run(&run)?;
    }
    for suite in Suite::ALL {
        let rows = ws.evaluate(suite)?;
        println!("{:<15} {:>5} rows -> {}", suite.name(), rows.len(), ws.metrics_path(suite).display());
    }
    for row in ws.evaluate(Suite::Generalization)?.iter().filter(|r| r.metric == "h1_semi_error") {
        println!("  {}/{} n={} seed={}  H1 error {:.4}", row.basis_in, row.basis_out, row.n_train, row.seed, row.value);
    }
    Ok(())
}
