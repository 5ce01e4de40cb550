//! Generates a dataset, writes it to disk with checksums and reads it back.

use rbno::pde::JacobianStorage;
use rbno::{generate_dataset, Mesh1D, PdeProblem, ProblemKind, SampleSet, SpectralCovariance};

fn main() -> rbno::Result<()> {
    let kind = ProblemKind::SteadyBurgers;
    let mesh = Mesh1D::uniform(256)?;
    let problem = PdeProblem::new(kind, mesh.clone())?;
    let cov = SpectralCovariance::new(mesh, kind.default_covariance())?;

    let set = generate_dataset(&problem, &cov, 200, 1)?;
    let mean_iters = set.iterations.iter().sum::<usize>() as f64 / set.len() as f64;
    println!("generated {} samples, mean Newton iterations {mean_iters:.2}", set.len());

    let dir = tempfile_dir();
    set.save(&dir, "example", JacobianStorage::Auto)?;
    let (loaded, digest) = SampleSet::load(&dir, &problem, &cov)?;
    let max_diff = set.outputs.iter().zip(&loaded.outputs).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    println!("reloaded from {} (config digest '{digest}'), max output difference {max_diff:e}", dir.display());
    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        println!("  {:<14} {:>10} bytes", entry.file_name().to_string_lossy(), entry.metadata()?.len());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join(format!("rbno-dataset-{}", std::process::id()))
}
