//! The two 1D benchmark operators `F: x -> y`, their Newton solvers, direct
//! sensitivities and dataset generation.
//!
//! Dirichlet conditions are imposed by row replacement, so every vector and
//! matrix keeps the full nodal dimension and the Dirichlet rows of the
//! residual read `R_i = y_i - g_i`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CovarianceParams, Mesh1D, SpectralCovariance};
use crate::io;
use crate::linalg::{Tridiagonal, TridiagonalLu};
use crate::rng::NormalStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    SemilinearElliptic,
    SteadyBurgers,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::SemilinearElliptic => "semilinear",
            ProblemKind::SteadyBurgers => "burgers",
        }
    }

    /// Input measure used with this problem in the reference experiments.
    pub fn default_covariance(self) -> CovarianceParams {
        match self {
            ProblemKind::SemilinearElliptic => CovarianceParams { a_delta: 2.0, a_identity: 10.0, alpha: 1.0 },
            ProblemKind::SteadyBurgers => CovarianceParams { a_delta: 10.0, a_identity: 20.0, alpha: 1.0 },
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semilinear" | "semilinear_elliptic" => Ok(ProblemKind::SemilinearElliptic),
            "burgers" | "steady_burgers" => Ok(ProblemKind::SteadyBurgers),
            other => Err(Error::invalid(format!("unknown problem '{other}'"))),
        }
    }
}

/// Newton solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged when `|R| <= rel_tol * (1 + |load|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    /// Load steps for the Burgers fallback continuation.
    pub homotopy_steps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 50, armijo: 1e-4, max_halvings: 40, homotopy_steps: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub y: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
enum Nonlinearity {
    /// `c2 * M (y^3)` with the cube taken nodally.
    Cubic { reaction: f64 },
    /// Galerkin convection `\int y y' v` integrated exactly on each element.
    Convection,
}

/// A discretized benchmark problem on a fixed mesh.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    kind: ProblemKind,
    mesh: Mesh1D,
    stiffness: Tridiagonal,
    nonlinearity: Nonlinearity,
    /// Load operator: `load = forcing * x`.
    forcing: Tridiagonal,
    /// `dR/dx`, Dirichlet rows zeroed.
    residual_dx: Arc<Tridiagonal>,
    dirichlet: Vec<usize>,
    diffusion: Vec<f64>,
    source: Vec<f64>,
    options: NewtonOptions,
}

impl PdeProblem {
    pub fn new(kind: ProblemKind, mesh: Mesh1D) -> Result<Self> {
        match kind {
            ProblemKind::SemilinearElliptic => Self::semilinear(mesh),
            ProblemKind::SteadyBurgers => Self::burgers(mesh),
        }
    }

    /// `-(c1 y')' + c2 y^3 = x`, `y(0) = 0`, `y'(1) = 0`, with
    /// `c1 = 1e-4 + 1e-2 * 1_(0.5, 1)` evaluated at element midpoints and `c2 = 0.1`.
    pub fn semilinear(mesh: Mesh1D) -> Result<Self> {
        let diffusion: Vec<f64> =
            mesh.midpoints().iter().map(|&s| 1e-4 + if s > 0.5 && s < 1.0 { 1e-2 } else { 0.0 }).collect();
        let stiffness = mesh.weighted_stiffness(&diffusion)?;
        let forcing = mesh.mass().clone();
        Ok(Self::assemble(
            ProblemKind::SemilinearElliptic,
            mesh,
            stiffness,
            Nonlinearity::Cubic { reaction: 0.1 },
            forcing,
            vec![0],
            diffusion,
            Vec::new(),
        ))
    }

    /// `-(c1 y')' + y y' = c2 x`, `y(0) = y(1) = 0`, with `c1 = 0.01` and the
    /// source profile `c2(s) = (0.025 sqrt(2 pi))^-1 exp(-(s - 0.4)^2 / 0.05^2)` at nodes.
    pub fn burgers(mesh: Mesh1D) -> Result<Self> {
        let viscosity = 0.01;
        let n_el = mesh.n_el();
        let stiffness = mesh.weighted_stiffness(&vec![viscosity; n_el])?;
        let scale = 1.0 / (0.025 * (2.0 * PI).sqrt());
        let source: Vec<f64> =
            mesh.nodes().iter().map(|&s| scale * (-(s - 0.4).powi(2) / 0.05f64.powi(2)).exp()).collect();
        let forcing = mesh.mass().scale_columns(&source);
        Ok(Self::assemble(
            ProblemKind::SteadyBurgers,
            mesh,
            stiffness,
            Nonlinearity::Convection,
            forcing,
            vec![0, n_el],
            vec![viscosity; n_el],
            source,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ProblemKind,
        mesh: Mesh1D,
        stiffness: Tridiagonal,
        nonlinearity: Nonlinearity,
        forcing: Tridiagonal,
        dirichlet: Vec<usize>,
        diffusion: Vec<f64>,
        source: Vec<f64>,
    ) -> Self {
        let mut dx = forcing.combine(-1.0, &forcing, 0.0);
        for &i in &dirichlet {
            dx.set_unit_row(i, 0.0);
        }
        Self {
            kind,
            mesh,
            stiffness,
            nonlinearity,
            forcing,
            residual_dx: Arc::new(dx),
            dirichlet,
            diffusion,
            source,
            options: NewtonOptions::default(),
        }
    }

    pub fn with_options(mut self, options: NewtonOptions) -> Self {
        self.options = options;
        self
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// Dirichlet node indices (all with value zero).
    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    /// Element-wise diffusion coefficient.
    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    /// Nodal source profile (Burgers only; empty otherwise).
    pub fn source_profile(&self) -> &[f64] {
        &self.source
    }

    /// Assembled load vector for an input field, Dirichlet entries set to their values.
    pub fn load(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut b = self.forcing.mul_vec(x);
        for &i in &self.dirichlet {
            b[i] = 0.0;
        }
        b
    }

    fn check_dim(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dims(format!("{what} has length {}, expected {}", v.len(), self.dim())));
        }
        Ok(())
    }

    /// `R(y, x)`.
    pub fn residual(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.residual_with_load(y, &self.load(x))
    }

    /// Residual for an explicit load vector: `A(y) - load`, with Dirichlet rows `y_i - load_i`.
    pub fn residual_with_load(&self, y: &DVector<f64>, load: &DVector<f64>) -> DVector<f64> {
        let mut r = self.stiffness.mul_vec(y);
        match self.nonlinearity {
            Nonlinearity::Cubic { reaction } => {
                let cubed = y.map(|v| v * v * v);
                r += self.mesh.mass().mul_vec(&cubed) * reaction;
            }
            Nonlinearity::Convection => {
                for e in 0..self.mesh.n_el() {
                    let (ya, yb) = (y[e], y[e + 1]);
                    let diff = yb - ya;
                    r[e] += diff * (2.0 * ya + yb) / 6.0;
                    r[e + 1] += diff * (ya + 2.0 * yb) / 6.0;
                }
            }
        }
        r -= load;
        for &i in &self.dirichlet {
            r[i] = y[i] - load[i];
        }
        r
    }

    /// `dR/dy` at `y` (tridiagonal, unit Dirichlet rows).
    pub fn residual_dy(&self, y: &DVector<f64>) -> Tridiagonal {
        let mut a = self.stiffness.clone();
        match self.nonlinearity {
            Nonlinearity::Cubic { reaction } => {
                let scale: Vec<f64> = y.iter().map(|v| 3.0 * reaction * v * v).collect();
                let reaction_part = self.mesh.mass().scale_columns(&scale);
                a = a.combine(1.0, &reaction_part, 1.0);
            }
            Nonlinearity::Convection => {
                for e in 0..self.mesh.n_el() {
                    let (ya, yb) = (y[e], y[e + 1]);
                    a.add_entry(e, e, (yb - 4.0 * ya) / 6.0);
                    a.add_entry(e, e + 1, (ya + 2.0 * yb) / 6.0);
                    a.add_entry(e + 1, e, (-2.0 * ya - yb) / 6.0);
                    a.add_entry(e + 1, e + 1, (4.0 * yb - ya) / 6.0);
                }
            }
        }
        for &i in &self.dirichlet {
            a.set_unit_row(i, 1.0);
        }
        a
    }

    /// `dR/dx` (independent of the state for both problems).
    pub fn residual_dx(&self) -> &Tridiagonal {
        &self.residual_dx
    }

    /// Solves `R(y, x) = 0` from the initial guess `y0`.
    pub fn solve(&self, x: &DVector<f64>, y0: &DVector<f64>) -> Result<Solution> {
        self.check_dim(x, "input")?;
        self.check_dim(y0, "initial guess")?;
        let load = self.load(x);
        match self.newton(&load, y0) {
            Ok(sol) => Ok(sol),
            Err(err @ Error::NonConvergence { .. }) if self.kind == ProblemKind::SteadyBurgers => {
                self.continuation(&load, y0).map_err(|_| err)
            }
            Err(err) => Err(err),
        }
    }

    /// Solves `A(y) = load` for an explicitly assembled load vector.
    pub fn solve_with_load(&self, load: &DVector<f64>, y0: &DVector<f64>) -> Result<Solution> {
        self.check_dim(load, "load")?;
        self.check_dim(y0, "initial guess")?;
        self.newton(load, y0)
    }

    fn continuation(&self, load: &DVector<f64>, y0: &DVector<f64>) -> Result<Solution> {
        let steps = self.options.homotopy_steps.max(1);
        let mut y = y0.clone();
        let mut iterations = 0;
        let mut residual_norm = f64::NAN;
        for k in 1..=steps {
            let scaled = load * (k as f64 / steps as f64);
            let sol = self.newton(&scaled, &y)?;
            iterations += sol.iterations;
            residual_norm = sol.residual_norm;
            y = sol.y;
        }
        Ok(Solution { y, iterations, residual_norm })
    }

    fn newton(&self, load: &DVector<f64>, y0: &DVector<f64>) -> Result<Solution> {
        let opts = &self.options;
        let tol = opts.rel_tol * (1.0 + load.norm());
        let mut y = y0.clone();
        let mut r = self.residual_with_load(&y, load);
        let mut norm = r.norm();
        let mut trace = vec![norm];
        for iter in 0..=opts.max_iter {
            if norm <= tol {
                return Ok(Solution { y, iterations: iter, residual_norm: norm });
            }
            if iter == opts.max_iter || !norm.is_finite() {
                break;
            }
            let lu = self.residual_dy(&y).factor()?;
            let step = -lu.solve_vec(&r);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let trial = &y + &step * t;
                let r_trial = self.residual_with_load(&trial, load);
                let n_trial = r_trial.norm();
                if n_trial.is_finite() && n_trial * n_trial <= (1.0 - 2.0 * opts.armijo * t) * norm * norm {
                    accepted = Some((trial, r_trial, n_trial));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((yn, rn, nn)) => {
                    y = yn;
                    r = rn;
                    norm = nn;
                    trace.push(norm);
                }
                None => break,
            }
        }
        Err(Error::NonConvergence { residual: norm, trace })
    }

    /// Direct-sensitivity Jacobian `dy/dx` as a factored operator.
    pub fn linearize(&self, y: &DVector<f64>) -> Result<Jacobian> {
        self.check_dim(y, "state")?;
        let lhs = self.residual_dy(y).factor()?;
        Ok(Jacobian::Factored { lhs, rhs: Arc::clone(&self.residual_dx), zero_rows: self.dirichlet.clone() })
    }

    /// Dense `J = -(dR/dy)^-1 dR/dx` at a solution pair.
    pub fn jacobian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x, "input")?;
        Ok(self.linearize(y)?.to_dense())
    }

    /// Forward map with a zero initial guess.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.solve(x, &DVector::zeros(self.dim()))?.y)
    }

    /// Relative error of `J dir` against a central difference of the forward map.
    pub fn jacobian_check(&self, x: &DVector<f64>, dir: &DVector<f64>) -> Result<f64> {
        self.check_dim(dir, "direction")?;
        let y = self.forward(x)?;
        let analytic = self.linearize(&y)?.apply_vec(dir);
        let eps = 1e-6 * (1.0 + x.amax()) / dir.amax().max(f64::MIN_POSITIVE);
        let fd = (self.solve(&(x + eps * dir), &y)?.y - self.solve(&(x - eps * dir), &y)?.y) / (2.0 * eps);
        Ok((&fd - &analytic).norm() / analytic.norm().max(f64::MIN_POSITIVE))
    }
}

/// Jacobian of the parameter-to-solution map at one sample.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    /// `J = -lhs^-1 rhs`, with `zero_rows` forced to zero (Dirichlet rows).
    Factored {
        lhs: TridiagonalLu,
        rhs: Arc<Tridiagonal>,
        zero_rows: Vec<usize>,
    },
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.nrows(),
            Jacobian::Factored { lhs, .. } => lhs.dim(),
        }
    }

    /// `J v` for a block of vectors.
    pub fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m * v,
            Jacobian::Factored { lhs, rhs, zero_rows } => {
                let mut out = -lhs.solve_mat(&rhs.mul_mat(v));
                for &i in zero_rows {
                    out.row_mut(i).fill(0.0);
                }
                out
            }
        }
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        DVector::from_column_slice(self.apply(&m).as_slice())
    }

    /// `J^T w` (the adjoint in Euclidean coordinates).
    pub fn apply_transpose(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.transpose() * w,
            Jacobian::Factored { lhs, rhs, zero_rows } => {
                let mut w = w.clone();
                for &i in zero_rows {
                    w.row_mut(i).fill(0.0);
                }
                -rhs.transpose().mul_mat(&lhs.solve_transpose_mat(&w))
            }
        }
    }

    /// `J^T W J` for a symmetric tridiagonal weight `W`.
    pub fn gram(&self, weight: &Tridiagonal) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.transpose() * weight.mul_mat(m),
            Jacobian::Factored { lhs, rhs, zero_rows } => {
                let mut a = lhs.solve_mat(&rhs.to_dense());
                for &i in zero_rows {
                    a.row_mut(i).fill(0.0);
                }
                let mut b = weight.mul_mat(&a);
                for &i in zero_rows {
                    b.row_mut(i).fill(0.0);
                }
                rhs.transpose().mul_mat(&lhs.solve_transpose_mat(&b))
            }
        }
    }

    /// `J C J^T` for a dense symmetric `C`.
    pub fn sandwich(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m * c * m.transpose(),
            Jacobian::Factored { lhs, rhs, zero_rows } => {
                let t = rhs.mul_mat(&rhs.mul_mat(c).transpose());
                let mut w = lhs.solve_mat(&t);
                for &i in zero_rows {
                    w.row_mut(i).fill(0.0);
                }
                let mut v = lhs.solve_mat(&w.transpose());
                for &i in zero_rows {
                    v.row_mut(i).fill(0.0);
                }
                v.transpose()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.clone(),
            Jacobian::Factored { .. } => self.apply(&DMatrix::identity(self.dim(), self.dim())),
        }
    }
}

/// Input/output/Jacobian tuples for one problem and input measure.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub problem: ProblemKind,
    pub n_el: usize,
    pub covariance: CovarianceParams,
    pub seed: u64,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub jacobians: Vec<Jacobian>,
    /// Newton iterations per sample.
    pub iterations: Vec<usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(self.n_el + 1, |x| x.len())
    }

    pub fn has_jacobians(&self) -> bool {
        !self.jacobians.is_empty() && self.jacobians.len() == self.inputs.len()
    }

    /// The first `n` samples as a new set.
    pub fn truncated(&self, n: usize) -> SampleSet {
        let n = n.min(self.len());
        SampleSet {
            inputs: self.inputs[..n].to_vec(),
            outputs: self.outputs[..n].to_vec(),
            jacobians: self.jacobians.iter().take(n).cloned().collect(),
            iterations: self.iterations.iter().take(n).cloned().collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> SampleSet {
        SampleSet {
            problem: self.problem,
            n_el: self.n_el,
            covariance: self.covariance,
            seed: self.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            jacobians: Vec::new(),
            iterations: Vec::new(),
        }
    }
}

/// Whether `J.bin` holds dense Jacobians. They are always rebuilt from the
/// outputs on load; the stored copy is a checked export for other tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianStorage {
    /// Dense when the set has at most [`DENSE_JACOBIAN_LIMIT`] samples.
    Auto,
    Dense,
    Omit,
}

pub const DENSE_JACOBIAN_LIMIT: usize = 1000;

/// What identifies the contents of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetId {
    pub problem: ProblemKind,
    pub n_el: usize,
    pub covariance: CovarianceParams,
    pub n: usize,
    pub seed: u64,
}

impl DatasetId {
    pub fn digest(&self) -> Result<String> {
        crate::io::json_digest(self)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    id: DatasetId,
    dataset_digest: String,
    config_digest: String,
    iterations: Vec<usize>,
    x_sha256: String,
    y_sha256: String,
    j_sha256: Option<String>,
}

impl SampleSet {
    pub fn id(&self) -> DatasetId {
        DatasetId {
            problem: self.problem,
            n_el: self.n_el,
            covariance: self.covariance,
            n: self.len(),
            seed: self.seed,
        }
    }

    /// Writes `manifest.json`, `X.bin`, `Y.bin` and (per `storage`) `J.bin`.
    pub fn save(&self, dir: &Path, config_digest: &str, storage: JacobianStorage) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let flat = |vs: &[DVector<f64>]| vs.iter().flat_map(|v| v.iter().copied()).collect::<Vec<f64>>();
        let x_sha256 = io::write_f64s(&dir.join("X.bin"), &flat(&self.inputs))?;
        let y_sha256 = io::write_f64s(&dir.join("Y.bin"), &flat(&self.outputs))?;
        let dense = match storage {
            JacobianStorage::Auto => self.len() <= DENSE_JACOBIAN_LIMIT,
            JacobianStorage::Dense => true,
            JacobianStorage::Omit => false,
        };
        let j_sha256 = if dense && self.has_jacobians() {
            // row-major per sample
            let values: Vec<f64> =
                self.jacobians.iter().flat_map(|j| j.to_dense().transpose().as_slice().to_vec()).collect();
            Some(io::write_f64s(&dir.join("J.bin"), &values)?)
        } else {
            None
        };
        let id = self.id();
        let manifest = DatasetManifest {
            dataset_digest: id.digest()?,
            id,
            config_digest: config_digest.to_string(),
            iterations: self.iterations.clone(),
            x_sha256,
            y_sha256,
            j_sha256,
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Identity and config digest recorded in a saved dataset, without loading the arrays.
    pub fn peek(dir: &Path) -> Result<(DatasetId, String)> {
        let m: DatasetManifest = io::read_json(&dir.join("manifest.json"))?;
        if m.id.digest()? != m.dataset_digest {
            return Err(Error::Integrity(format!("dataset digest mismatch in {}", dir.display())));
        }
        Ok((m.id, m.config_digest))
    }

    /// Loads a dataset saved by [`save`](Self::save) and rebuilds its Jacobians
    /// from the stored outputs. Returns the set and its config digest.
    pub fn load(dir: &Path, problem: &PdeProblem, cov: &SpectralCovariance) -> Result<(SampleSet, String)> {
        let m: DatasetManifest = io::read_json(&dir.join("manifest.json"))?;
        if m.id.digest()? != m.dataset_digest {
            return Err(Error::Integrity(format!("dataset digest mismatch in {}", dir.display())));
        }
        let id = m.id;
        if id.problem != problem.kind() || id.n_el != problem.mesh().n_el() || id.covariance != cov.params() {
            return Err(Error::invalid(format!("{} was generated for a different problem or measure", dir.display())));
        }
        let d = problem.dim();
        let split = |v: Vec<f64>| v.chunks_exact(d).map(DVector::from_column_slice).collect::<Vec<_>>();
        let inputs = split(io::read_f64s(&dir.join("X.bin"), id.n * d, &m.x_sha256)?);
        let outputs = split(io::read_f64s(&dir.join("Y.bin"), id.n * d, &m.y_sha256)?);
        if m.iterations.len() != id.n {
            return Err(Error::Integrity("iteration counts do not match the sample count".into()));
        }
        let jacobians = outputs.iter().map(|y| problem.linearize(y)).collect::<Result<Vec<_>>>()?;
        if let Some(sum) = &m.j_sha256 {
            let stored = io::read_f64s(&dir.join("J.bin"), id.n * d * d, sum)?;
            for k in [0, id.n - 1] {
                let dense = DMatrix::from_row_slice(d, d, &stored[k * d * d..(k + 1) * d * d]);
                let rebuilt = jacobians[k].to_dense();
                if (&dense - &rebuilt).amax() > 1e-9 * (1.0 + dense.amax()) {
                    return Err(Error::Integrity(format!("stored Jacobian {k} disagrees with the stored output")));
                }
            }
        }
        let set = SampleSet {
            problem: id.problem,
            n_el: id.n_el,
            covariance: id.covariance,
            seed: id.seed,
            inputs,
            outputs,
            jacobians,
            iterations: m.iterations,
        };
        Ok((set, m.config_digest))
    }
}

/// Solves sample `index` of the stream addressed by `seed`.
pub fn generate_sample(
    problem: &PdeProblem,
    cov: &SpectralCovariance,
    seed: u64,
    index: u64,
) -> Result<(DVector<f64>, Solution, Jacobian)> {
    let mut stream = NormalStream::new(seed, index);
    let x = cov.sample(&mut stream);
    let sol = problem.solve(&x, &DVector::zeros(problem.dim()))?;
    let jac = problem.linearize(&sol.y)?;
    Ok((x, sol, jac))
}

/// `n` independent samples, each solved from a zero guess. Sample `k` only
/// depends on `(seed, k)`.
pub fn generate_dataset(problem: &PdeProblem, cov: &SpectralCovariance, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::invalid("a dataset needs at least one sample"));
    }
    if cov.dim() != problem.dim() {
        return Err(Error::dims("covariance and problem live on different meshes"));
    }
    let mut set = SampleSet {
        problem: problem.kind(),
        n_el: problem.mesh().n_el(),
        covariance: cov.params(),
        seed,
        inputs: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        jacobians: Vec::with_capacity(n),
        iterations: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (x, sol, jac) = generate_sample(problem, cov, seed, k as u64)
            .map_err(|e| Error::Sample { index: k, source: Box::new(e) })?;
        set.inputs.push(x);
        set.outputs.push(sol.y);
        set.jacobians.push(jac);
        set.iterations.push(sol.iterations);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(kind: ProblemKind, n_el: usize) -> PdeProblem {
        PdeProblem::new(kind, Mesh1D::uniform(n_el).unwrap()).unwrap()
    }

    fn wavy(d: usize, phase: f64) -> DVector<f64> {
        DVector::from_fn(d, |i, _| (0.37 * i as f64 + phase).sin() * 0.8)
    }

    #[test]
    fn semilinear_coefficient_jumps_at_midpoint_of_domain() {
        let p = problem(ProblemKind::SemilinearElliptic, 256);
        assert_eq!(p.diffusion()[127], 1e-4);
        assert!((p.diffusion()[128] - 1.01e-2).abs() < 1e-15);
        assert_eq!(p.dirichlet_dofs(), &[0]);
    }

    #[test]
    fn burgers_profile_centered_at_point_four() {
        let p = problem(ProblemKind::SteadyBurgers, 256);
        let src = p.source_profile();
        let peak = (0..src.len()).max_by(|&a, &b| src[a].total_cmp(&src[b])).unwrap();
        assert!((p.mesh().nodes()[peak] - 0.4).abs() < 1.0 / 256.0);
        let s = p.mesh().nodes()[peak];
        let expected = (-(s - 0.4f64).powi(2) / 0.0025).exp() / (0.025 * (2.0 * PI).sqrt());
        assert!((src[peak] - expected).abs() < 1e-12 * expected);
        assert_eq!(p.dirichlet_dofs(), &[0, 256]);
    }

    #[test]
    fn zero_input_has_zero_solution() {
        for kind in [ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers] {
            let p = problem(kind, 32);
            let zero = DVector::zeros(33);
            assert_eq!(p.residual(&zero, &zero).norm(), 0.0);
            let sol = p.solve(&zero, &zero).unwrap();
            assert!(sol.iterations <= 1);
            assert_eq!(sol.y.norm(), 0.0);
        }
    }

    #[test]
    fn residual_dy_matches_central_differences() {
        for kind in [ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers] {
            let p = problem(kind, 24);
            let d = p.dim();
            let y = wavy(d, 0.3);
            let x = wavy(d, 1.1);
            let analytic = p.residual_dy(&y).to_dense();
            let eps = 1e-6;
            let mut fd = DMatrix::zeros(d, d);
            for j in 0..d {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += eps;
                ym[j] -= eps;
                let col = (p.residual(&yp, &x) - p.residual(&ym, &x)) / (2.0 * eps);
                fd.set_column(j, &col);
            }
            assert!((&analytic - &fd).norm() <= 1e-6 * analytic.norm(), "{kind}");
        }
    }

    #[test]
    fn residual_dx_is_constant_linear_part() {
        let p = problem(ProblemKind::SteadyBurgers, 16);
        let y = wavy(17, 0.2);
        let x1 = wavy(17, 0.9);
        let x2 = wavy(17, 2.0);
        let lhs = p.residual(&y, &x1) - p.residual(&y, &x2);
        let rhs = p.residual_dx().mul_vec(&(&x1 - &x2));
        assert!((lhs - rhs).amax() < 1e-13);
    }

    #[test]
    fn manufactured_discrete_solution_is_recovered() {
        let p = problem(ProblemKind::SemilinearElliptic, 64);
        let ramp = DVector::from_iterator(65, p.mesh().nodes().iter().cloned());
        let cubed = ramp.map(|v| v * v * v);
        let m = p.mesh().mass_dense();
        let k = p.mesh().weighted_stiffness(p.diffusion()).unwrap().to_dense();
        let rhs = &k * &ramp + m * cubed * 0.1;
        let x = m.clone().lu().solve(&rhs).unwrap();
        let sol = p.solve(&x, &DVector::zeros(65)).unwrap();
        // the Dirichlet row of the load is replaced, so compare away from node 0 as well
        assert!((sol.y - ramp).amax() < 1e-9);
    }

    #[test]
    fn jacobian_has_zero_dirichlet_rows_and_is_deterministic() {
        let p = problem(ProblemKind::SteadyBurgers, 32);
        let x = wavy(33, 0.5) * 0.3;
        let y = p.forward(&x).unwrap();
        let j1 = p.jacobian(&x, &y).unwrap();
        let j2 = p.jacobian(&x, &y).unwrap();
        assert_eq!(j1, j2);
        assert!(j1.row(0).iter().all(|&v| v == 0.0));
        assert!(j1.row(32).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn factored_transpose_matches_dense() {
        let p = problem(ProblemKind::SemilinearElliptic, 20);
        let x = wavy(21, 0.1);
        let y = p.forward(&x).unwrap();
        let jac = p.linearize(&y).unwrap();
        let dense = jac.to_dense();
        let w = DMatrix::from_fn(21, 2, |i, j| ((i + j) as f64).cos());
        assert!((jac.apply_transpose(&w) - dense.transpose() * &w).amax() < 1e-10);
    }

    #[test]
    fn semilinear_jacobian_at_zero_is_linear_solve() {
        let p = problem(ProblemKind::SemilinearElliptic, 16);
        let zero = DVector::zeros(17);
        let j = p.jacobian(&zero, &zero).unwrap();
        let mut k = p.mesh().weighted_stiffness(p.diffusion()).unwrap();
        k.set_unit_row(0, 1.0);
        let mut m = p.mesh().mass().clone();
        m.set_unit_row(0, 0.0);
        let expected = k.to_dense().lu().solve(&m.to_dense()).unwrap();
        assert!((j - expected).amax() < 1e-10);
    }

    #[test]
    fn gram_and_sandwich_match_dense_products() {
        for kind in [ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers] {
            let p = problem(kind, 20);
            let x = wavy(21, 0.4) * 0.5;
            let y = p.forward(&x).unwrap();
            let jac = p.linearize(&y).unwrap();
            let dense = jac.to_dense();
            let m = p.mesh().mass();
            let c = DMatrix::from_fn(21, 21, |i, j| (-((i as f64) - (j as f64)).abs() / 4.0).exp());
            let g = jac.gram(m);
            let g_ref = dense.transpose() * m.to_dense() * &dense;
            assert!((&g - &g_ref).amax() < 1e-10 * g_ref.amax(), "{kind}");
            let s = jac.sandwich(&c);
            let s_ref = &dense * &c * dense.transpose();
            assert!((&s - &s_ref).amax() < 1e-10 * s_ref.amax(), "{kind}");
            assert!(s.row(0).iter().all(|&v| v == 0.0));
            let dj = Jacobian::Dense(dense);
            assert!((dj.gram(m) - g_ref).amax() < 1e-10 * g.amax());
        }
    }

    #[test]
    fn dataset_rejects_zero_samples() {
        let p = problem(ProblemKind::SemilinearElliptic, 8);
        let cov = SpectralCovariance::new(p.mesh().clone(), p.kind().default_covariance()).unwrap();
        assert!(matches!(generate_dataset(&p, &cov, 0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dataset_save_load_round_trip() {
        let p = problem(ProblemKind::SteadyBurgers, 12);
        let cov = SpectralCovariance::new(p.mesh().clone(), ProblemKind::SteadyBurgers.default_covariance()).unwrap();
        let set = generate_dataset(&p, &cov, 5, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for storage in [JacobianStorage::Auto, JacobianStorage::Omit] {
            let path = dir.path().join(format!("{storage:?}"));
            set.save(&path, "cfg", storage).unwrap();
            assert_eq!(path.join("J.bin").exists(), storage == JacobianStorage::Auto);
            let (loaded, digest) = SampleSet::load(&path, &p, &cov).unwrap();
            assert_eq!(digest, "cfg");
            assert_eq!(loaded.inputs, set.inputs);
            assert_eq!(loaded.outputs, set.outputs);
            assert_eq!(loaded.iterations, set.iterations);
            for (a, b) in loaded.jacobians.iter().zip(&set.jacobians) {
                assert_eq!(a.to_dense(), b.to_dense());
            }
            assert_eq!(SampleSet::peek(&path).unwrap().0, set.id());
        }
        let path = dir.path().join("Auto");
        let mut bytes = std::fs::read(path.join("Y.bin")).unwrap();
        bytes[10] ^= 4;
        std::fs::write(path.join("Y.bin"), bytes).unwrap();
        assert!(matches!(SampleSet::load(&path, &p, &cov), Err(Error::Integrity(_))));
        let other = problem(ProblemKind::SemilinearElliptic, 12);
        assert!(SampleSet::load(&dir.path().join("Omit"), &other, &cov).is_err());
    }
}
