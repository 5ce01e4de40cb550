//! Excess risk of small-sample bases against a large-sample reference, and the
//! Monte Carlo rate of the output mean.

use rbno::experiment::reference_basis;
use rbno::metrics::{excess_risk, mean_estimator_error, rate_slope, TestMoments};
use rbno::{generate_dataset, BasisKind, Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let kind = ProblemKind::SemilinearElliptic;
    let mesh = Mesh1D::uniform(256)?;
    let problem = PdeProblem::new(kind, mesh.clone())?;
    let cov = SpectralCovariance::new(mesh.clone(), kind.default_covariance())?;
    let reference = generate_dataset(&problem, &cov, 4000, 2)?;
    let test = generate_dataset(&problem, &cov, 1000, 3)?;
    let moments = TestMoments::new(&test, &cov)?;

    let r = 10;
    let sizes = [40, 80, 160, 320];
    let seeds = 10..16u64;
    let reference_pca = reference_basis(BasisKind::OutputPca, &reference, &cov, r)?;
    let mut risks = vec![Vec::new(); sizes.len()];
    let mut mean_errors = vec![Vec::new(); sizes.len()];
    for seed in seeds {
        let full = generate_dataset(&problem, &cov, *sizes.last().unwrap(), seed)?;
        for (j, &n) in sizes.iter().enumerate() {
            let set = full.truncated(n);
            let small = reference_basis(BasisKind::OutputPca, &set, &cov, r)?;
            risks[j].push(excess_risk(&small, &reference_pca, &moments, &mesh)?);
            mean_errors[j].push(mean_estimator_error(&set, reference_pca.mean(), &mesh)?);
        }
    }
    for (j, n) in sizes.iter().enumerate() {
        let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        println!("N = {n:>4}  excess risk {:.3e}  mean error {:.3e}", mean(&risks[j]), mean(&mean_errors[j]));
    }
    println!("excess-risk slope {:.3}", rate_slope(&sizes, &risks)?);
    println!("mean-error slope  {:.3}", rate_slope(&sizes, &mean_errors)?);
    Ok(())
}
