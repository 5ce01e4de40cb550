//! Reduced bases: exact input PCA, centered empirical output PCA, and the
//! derivative-informed subspaces (DIS) on either side of the Jacobian.
//!
//! Input-side bases live in the Cameron-Martin space: their columns are
//! orthonormal after whitening. Output-side bases are `M`-orthonormal.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mesh1D, SpectralCovariance};
use crate::io;
use crate::linalg::{canonicalize_signs, symmetric_eigen_desc, symmetrize, PairwiseSum};
use crate::pde::{Jacobian, SampleSet};

/// Relative threshold below which eigenvalues count as zero in constraint checks.
pub const EIG_CLAMP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    InputPca,
    OutputPca,
    InputDis,
    OutputDis,
}

impl BasisKind {
    pub const ALL: [BasisKind; 4] =
        [BasisKind::InputPca, BasisKind::OutputPca, BasisKind::InputDis, BasisKind::OutputDis];

    pub fn is_input(self) -> bool {
        matches!(self, BasisKind::InputPca | BasisKind::InputDis)
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::InputPca => "input_pca",
            BasisKind::OutputPca => "output_pca",
            BasisKind::InputDis => "input_dis",
            BasisKind::OutputDis => "output_dis",
        }
    }

    /// Short label used in tables: `pca` or `dis`.
    pub fn method(self) -> &'static str {
        match self {
            BasisKind::InputPca | BasisKind::OutputPca => "pca",
            BasisKind::InputDis | BasisKind::OutputDis => "dis",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BasisKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown basis kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    Exact,
    Empirical { n: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ReducedBasis {
    kind: BasisKind,
    source: BasisSource,
    cols: DMatrix<f64>,
    eigs: DVector<f64>,
    mean: DVector<f64>,
    /// Input bases: the columns in whitened coordinates (orthonormal).
    whitened: Option<DMatrix<f64>>,
    /// Linear map from nodal vectors to reduced coordinates (`r x d`).
    encoder: DMatrix<f64>,
}

impl ReducedBasis {
    fn input(
        kind: BasisKind,
        source: BasisSource,
        cov: &SpectralCovariance,
        whitened: DMatrix<f64>,
        eigs: DVector<f64>,
    ) -> Self {
        let mut w = whitened;
        let mut cols = cov.coloring() * &w;
        for j in 0..cols.ncols() {
            if crate::linalg::sign_of_largest(cols.column(j).as_slice()) < 0.0 {
                cols.column_mut(j).neg_mut();
                w.column_mut(j).neg_mut();
            }
        }
        let encoder = w.transpose() * cov.whitening();
        let d = cov.dim();
        Self { kind, source, cols, eigs, mean: DVector::zeros(d), whitened: Some(w), encoder }
    }

    fn output(
        kind: BasisKind,
        source: BasisSource,
        mesh: &Mesh1D,
        mut cols: DMatrix<f64>,
        eigs: DVector<f64>,
        mean: DVector<f64>,
    ) -> Self {
        canonicalize_signs(&mut cols);
        let encoder = mesh.mass().mul_mat(&cols).transpose();
        Self { kind, source, cols, eigs, mean, whitened: None, encoder }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn source(&self) -> BasisSource {
        self.source
    }

    pub fn rank(&self) -> usize {
        self.cols.ncols()
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    /// Decoder columns in nodal coordinates (`d x r`).
    pub fn cols(&self) -> &DMatrix<f64> {
        &self.cols
    }

    /// Full descending spectrum (length `d`).
    pub fn eigs(&self) -> &DVector<f64> {
        &self.eigs
    }

    /// Output bases: the empirical mean; zero for input bases.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Encoder as an `r x d` matrix acting on nodal vectors.
    pub fn encoder(&self) -> &DMatrix<f64> {
        &self.encoder
    }

    /// Input bases: columns in whitened coordinates.
    pub fn whitened_cols(&self) -> Option<&DMatrix<f64>> {
        self.whitened.as_ref()
    }

    fn require_side(&self, input: bool) -> Result<()> {
        if self.kind.is_input() != input {
            let side = if input { "input" } else { "output" };
            return Err(Error::invalid(format!("{} basis used on the {side} side", self.kind)));
        }
        Ok(())
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dims(format!("vector of length {} for a basis of dimension {}", v.len(), self.dim())));
        }
        Ok(())
    }

    /// `s_i = <col_i, x>_E`.
    pub fn encode_input(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_side(true)?;
        self.check_len(x)?;
        Ok(&self.encoder * x)
    }

    pub fn decode_input(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_side(true)?;
        self.decode(s)
    }

    /// `q_i = col_i^T M y` (no centering).
    pub fn encode_output(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_side(false)?;
        self.check_len(y)?;
        Ok(&self.encoder * y)
    }

    pub fn decode_output(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_side(false)?;
        self.decode(q)
    }

    fn decode(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.rank() {
            return Err(Error::dims(format!("{} coefficients for a rank-{} basis", c.len(), self.rank())));
        }
        Ok(&self.cols * c)
    }

    /// Side-agnostic projection `cols * encoder * v`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        Ok(&self.cols * (&self.encoder * v))
    }

    /// `sum_{i > r} eigs_i`.
    pub fn trailing_sum(&self, r: usize) -> Result<f64> {
        trailing_sum(self.eigs.as_slice(), r)
    }

    /// The leading `r` columns as a basis of its own.
    pub fn truncated(&self, r: usize) -> Result<ReducedBasis> {
        if r == 0 || r > self.rank() {
            return Err(Error::invalid(format!("cannot truncate a rank-{} basis to rank {r}", self.rank())));
        }
        Ok(ReducedBasis {
            kind: self.kind,
            source: self.source,
            cols: self.cols.columns(0, r).into_owned(),
            eigs: self.eigs.clone(),
            mean: self.mean.clone(),
            whitened: self.whitened.as_ref().map(|w| w.columns(0, r).into_owned()),
            encoder: self.encoder.rows(0, r).into_owned(),
        })
    }
}

/// `sum_{i > r} eigs_i`, accumulated from the smallest eigenvalue upwards.
pub fn trailing_sum(eigs: &[f64], r: usize) -> Result<f64> {
    if r > eigs.len() {
        return Err(Error::invalid(format!("rank {r} exceeds the spectrum length {}", eigs.len())));
    }
    Ok(eigs[r..].iter().rev().sum())
}

fn check_rank(r: usize, d: usize) -> Result<()> {
    if r == 0 || r > d {
        return Err(Error::invalid(format!("rank {r} must lie in 1..={d}")));
    }
    Ok(())
}

/// Zeroes eigenvalues that are indistinguishable from rounding noise:
/// negatives and values below `d * eps * scale`.
fn zero_noise(eigs: &mut DVector<f64>, scale: f64) {
    let floor = eigs.len() as f64 * f64::EPSILON * scale;
    for v in eigs.iter_mut() {
        if *v < floor || *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Relative drop in the spectrum that triggers recomputing the trailing block.
const REFINE_DROP: f64 = 1e-6;
const REFINE_LEVELS: usize = 6;

/// Recomputes the trailing part of a Gram spectrum from the per-sample factors.
///
/// Eigenvalues of an assembled Gram matrix are only accurate to about
/// `eps * lambda_1` in absolute terms. `block_gram(T)` must return
/// `(1/N) sum_k (A_k T)^T (A_k T)` formed directly from the factors `A_k`,
/// which keeps the trailing eigenvalues accurate relative to their own size.
fn refine_tail<F>(mut eigs: DVector<f64>, mut vecs: DMatrix<f64>, block_gram: F) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let d = eigs.len();
    let mut start = 0;
    for _ in 0..REFINE_LEVELS {
        let top = eigs[start];
        if top.is_nan() || top <= 0.0 {
            break;
        }
        let Some(s) = (start + 1..d).find(|&i| eigs[i] < REFINE_DROP * top) else {
            break;
        };
        let tail = vecs.columns(s, d - s).into_owned();
        let (vals, rot) = symmetric_eigen_desc(&block_gram(&tail)?)?;
        vecs.columns_mut(s, d - s).copy_from(&(tail * rot));
        eigs.rows_mut(s, d - s).copy_from(&vals);
        start = s;
    }
    let scale = eigs[start].max(0.0);
    let mut tail = eigs.rows(start, d - start).into_owned();
    zero_noise(&mut tail, scale);
    eigs.rows_mut(start, d - start).copy_from(&tail);
    Ok((eigs, vecs))
}

fn check_mesh(samples: &SampleSet, d: usize) -> Result<()> {
    if samples.dim() != d {
        return Err(Error::dims(format!("samples of dimension {} against a dimension-{d} mesh", samples.dim())));
    }
    Ok(())
}

fn require_jacobians(samples: &SampleSet) -> Result<()> {
    if !samples.has_jacobians() {
        return Err(Error::invalid("derivative-informed bases need Jacobians in the sample set"));
    }
    Ok(())
}

/// Karhunen-Loeve basis of the input measure: `col_i = sqrt(mu_i) phi_i`.
pub fn input_pca(cov: &SpectralCovariance, r: usize) -> Result<ReducedBasis> {
    let d = cov.dim();
    check_rank(r, d)?;
    let w = DMatrix::identity(d, r);
    Ok(ReducedBasis::input(BasisKind::InputPca, BasisSource::Exact, cov, w, cov.mu().clone()))
}

/// Empirical mean of the outputs.
pub fn output_mean(samples: &SampleSet) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let mut acc = PairwiseSum::new();
    for y in &samples.outputs {
        acc.push(y.clone());
    }
    Ok(acc.finish().expect("non-empty") / samples.len() as f64)
}

/// Centered empirical output PCA with the biased `1/N` covariance estimator.
pub fn output_pca(samples: &SampleSet, mesh: &Mesh1D, r: usize) -> Result<ReducedBasis> {
    let d = mesh.dim();
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("output PCA needs at least two samples"));
    }
    check_mesh(samples, d)?;
    check_rank(r, d.min(n))?;
    let mean = output_mean(samples)?;
    let mut centered = DMatrix::zeros(d, n);
    for (k, y) in samples.outputs.iter().enumerate() {
        centered.set_column(k, &(y - &mean));
    }
    let scaled = mesh.mass_sqrt() * centered / (n as f64).sqrt();
    let svd = SVD::try_new(scaled, true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenNonConvergence("output PCA singular value decomposition".into()))?;
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let mut eigs = DVector::zeros(d);
    for (i, &j) in order.iter().enumerate() {
        eigs[i] = sv[j] * sv[j];
    }
    let floor = (d.max(n) as f64 * f64::EPSILON * eigs[0].sqrt()).powi(2);
    eigs.iter_mut().filter(|v| **v < floor).for_each(|v| *v = 0.0);
    let lead = u.select_columns(&order[..r]);
    let cols = mesh.mass_inv_sqrt() * lead;
    Ok(ReducedBasis::output(
        BasisKind::OutputPca,
        BasisSource::Empirical { n, seed: samples.seed },
        mesh,
        cols,
        eigs,
        mean,
    ))
}

/// `(1/N) sum_k J_k^T M J_k` in nodal input coordinates.
pub fn nodal_input_gram(jacobians: &[Jacobian], mesh: &Mesh1D) -> Result<DMatrix<f64>> {
    let mut acc = PairwiseSum::new();
    for j in jacobians {
        acc.push(j.gram(mesh.mass()));
    }
    let n = acc.len();
    let sum = acc.finish().ok_or_else(|| Error::invalid("no Jacobians to accumulate"))?;
    Ok(symmetrize(&sum) / n as f64)
}

/// `(1/N) sum_k J_k C J_k^T` with `C` the nodal input covariance.
pub fn nodal_output_gram(jacobians: &[Jacobian], cov: &SpectralCovariance) -> Result<DMatrix<f64>> {
    let c = cov.coloring() * cov.coloring().transpose();
    let mut acc = PairwiseSum::new();
    for j in jacobians {
        acc.push(j.sandwich(&c));
    }
    let n = acc.len();
    let sum = acc.finish().ok_or_else(|| Error::invalid("no Jacobians to accumulate"))?;
    Ok(symmetrize(&sum) / n as f64)
}

/// Whitened input Gram `H_xi = (1/N) sum_k Jt_k^T M Jt_k` with `Jt_k = J_k * coloring`.
pub fn input_dis_operator(samples: &SampleSet, cov: &SpectralCovariance) -> Result<DMatrix<f64>> {
    require_jacobians(samples)?;
    check_mesh(samples, cov.dim())?;
    let nodal = nodal_input_gram(&samples.jacobians, cov.mesh())?;
    Ok(symmetrize(&(cov.coloring().transpose() * nodal * cov.coloring())))
}

/// `B ((1/N) sum_k Jt_k Jt_k^T) B` with `B = M^(1/2)`.
pub fn output_dis_operator(samples: &SampleSet, cov: &SpectralCovariance) -> Result<DMatrix<f64>> {
    require_jacobians(samples)?;
    check_mesh(samples, cov.dim())?;
    let nodal = nodal_output_gram(&samples.jacobians, cov)?;
    let b = cov.mesh().mass_sqrt();
    Ok(symmetrize(&(b * nodal * b)))
}

/// Input DIS with the trailing spectrum refined from the per-sample Jacobians.
pub fn input_dis(samples: &SampleSet, cov: &SpectralCovariance, r: usize) -> Result<ReducedBasis> {
    check_rank(r, cov.dim())?;
    let h = input_dis_operator(samples, cov)?;
    let (eigs, vecs) = symmetric_eigen_desc(&h)?;
    let mass = cov.mesh().mass();
    let (eigs, vecs) = refine_tail(eigs, vecs, |t| {
        let ct = cov.coloring() * t;
        mean_gram(samples.jacobians.iter().map(|j| {
            let x = j.apply(&ct);
            x.transpose() * mass.mul_mat(&x)
        }))
    })?;
    let w = vecs.columns(0, r).into_owned();
    let source = BasisSource::Empirical { n: samples.len(), seed: samples.seed };
    Ok(ReducedBasis::input(BasisKind::InputDis, source, cov, w, eigs))
}

fn mean_gram(items: impl Iterator<Item = DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let mut acc = PairwiseSum::new();
    for g in items {
        acc.push(g);
    }
    let n = acc.len();
    let sum = acc.finish().ok_or_else(|| Error::invalid("no Jacobians to accumulate"))?;
    Ok(symmetrize(&sum) / n as f64)
}

/// Input DIS from an already assembled whitened Gram operator.
pub fn input_dis_from_operator(
    h: &DMatrix<f64>,
    cov: &SpectralCovariance,
    r: usize,
    source: BasisSource,
) -> Result<ReducedBasis> {
    check_rank(r, cov.dim())?;
    let (mut eigs, vecs) = symmetric_eigen_desc(h)?;
    let top = eigs[0];
    zero_noise(&mut eigs, top);
    let w = vecs.columns(0, r).into_owned();
    Ok(ReducedBasis::input(BasisKind::InputDis, source, cov, w, eigs))
}

/// Output DIS with the trailing spectrum refined from the per-sample Jacobians.
pub fn output_dis(samples: &SampleSet, cov: &SpectralCovariance, r: usize) -> Result<ReducedBasis> {
    check_rank(r, cov.dim())?;
    let h = output_dis_operator(samples, cov)?;
    let mean = output_mean(samples)?;
    let (eigs, vecs) = symmetric_eigen_desc(&h)?;
    let b = cov.mesh().mass_sqrt();
    let coloring_t = cov.coloring().transpose();
    let (eigs, vecs) = refine_tail(eigs, vecs, |t| {
        let bt = b * t;
        mean_gram(samples.jacobians.iter().map(|j| {
            let y = &coloring_t * j.apply_transpose(&bt);
            y.transpose() * y
        }))
    })?;
    let cols = cov.mesh().mass_inv_sqrt() * vecs.columns(0, r);
    let source = BasisSource::Empirical { n: samples.len(), seed: samples.seed };
    Ok(ReducedBasis::output(BasisKind::OutputDis, source, cov.mesh(), cols, eigs, mean))
}

/// Output DIS from an assembled `M^(1/2)`-congruent Gram operator.
pub fn output_dis_from_operator(
    h: &DMatrix<f64>,
    mesh: &Mesh1D,
    r: usize,
    mean: DVector<f64>,
    source: BasisSource,
) -> Result<ReducedBasis> {
    check_rank(r, mesh.dim())?;
    let (mut eigs, vecs) = symmetric_eigen_desc(h)?;
    let top = eigs[0];
    zero_noise(&mut eigs, top);
    let cols = mesh.mass_inv_sqrt() * vecs.columns(0, r);
    Ok(ReducedBasis::output(BasisKind::OutputDis, source, mesh, cols, eigs, mean))
}

/// Builds any of the four bases from one sample set.
pub fn build_basis(kind: BasisKind, samples: &SampleSet, cov: &SpectralCovariance, r: usize) -> Result<ReducedBasis> {
    match kind {
        BasisKind::InputPca => input_pca(cov, r),
        BasisKind::OutputPca => output_pca(samples, cov.mesh(), r),
        BasisKind::InputDis => input_dis(samples, cov, r),
        BasisKind::OutputDis => output_dis(samples, cov, r),
    }
}

/// Reduced Jacobian `G = U^T M J V` (`r_out x r_in`).
pub fn reduce_jacobian(jac: &Jacobian, output: &ReducedBasis, input: &ReducedBasis) -> Result<DMatrix<f64>> {
    output.require_side(false)?;
    input.require_side(true)?;
    if jac.dim() != output.dim() || jac.dim() != input.dim() {
        return Err(Error::dims("Jacobian and bases have different dimensions"));
    }
    Ok(output.encoder() * jac.apply(input.cols()))
}

/// Largest violation of the linear constraint `B y = h` by the basis:
/// `max(|B col_i|, |B mean - h|)` over columns with non-negligible eigenvalue.
pub fn constraint_check(basis: &ReducedBasis, functionals: &DMatrix<f64>, values: &DVector<f64>) -> Result<f64> {
    if functionals.ncols() != basis.dim() || functionals.nrows() != values.len() {
        return Err(Error::dims("constraint functionals do not match the basis"));
    }
    let mut worst = 0.0f64;
    for i in 0..basis.rank() {
        if basis.eigs()[i] < EIG_CLAMP * basis.eigs()[0] {
            continue;
        }
        worst = worst.max((functionals * basis.cols().column(i)).amax());
    }
    if !basis.kind().is_input() {
        worst = worst.max((functionals * basis.mean() - values).amax());
    }
    Ok(worst)
}

#[derive(Serialize, Deserialize)]
struct BasisManifest {
    kind: BasisKind,
    source: BasisSource,
    rank: usize,
    dim: usize,
    config_digest: String,
    cols_sha256: String,
    eigs_sha256: String,
    mean_sha256: String,
    whitened_sha256: Option<String>,
}

impl ReducedBasis {
    /// Writes `manifest.json`, `cols.bin`, `eigs.bin`, `mean.bin` (and
    /// `whitened.bin` for input bases). Arrays are row-major.
    pub fn save(&self, dir: &Path, config_digest: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let cols_sha256 = io::write_f64s(&dir.join("cols.bin"), self.cols.transpose().as_slice())?;
        let eigs_sha256 = io::write_f64s(&dir.join("eigs.bin"), self.eigs.as_slice())?;
        let mean_sha256 = io::write_f64s(&dir.join("mean.bin"), self.mean.as_slice())?;
        let whitened_sha256 = match &self.whitened {
            Some(w) => Some(io::write_f64s(&dir.join("whitened.bin"), w.transpose().as_slice())?),
            None => None,
        };
        let manifest = BasisManifest {
            kind: self.kind,
            source: self.source,
            rank: self.rank(),
            dim: self.dim(),
            config_digest: config_digest.to_string(),
            cols_sha256,
            eigs_sha256,
            mean_sha256,
            whitened_sha256,
        };
        io::write_json(&dir.join("manifest.json"), &manifest)
    }

    /// Loads a basis and its config digest; the encoder is rebuilt from the covariance.
    pub fn load(dir: &Path, cov: &SpectralCovariance) -> Result<(ReducedBasis, String)> {
        let m: BasisManifest = io::read_json(&dir.join("manifest.json"))?;
        if m.dim != cov.dim() {
            return Err(Error::dims(format!("basis of dimension {} against a dimension-{} mesh", m.dim, cov.dim())));
        }
        let (d, r) = (m.dim, m.rank);
        let cols = DMatrix::from_row_slice(d, r, &io::read_f64s(&dir.join("cols.bin"), d * r, &m.cols_sha256)?);
        let eigs = DVector::from_vec(io::read_f64s(&dir.join("eigs.bin"), d, &m.eigs_sha256)?);
        let mean = DVector::from_vec(io::read_f64s(&dir.join("mean.bin"), d, &m.mean_sha256)?);
        let basis = if m.kind.is_input() {
            let sum = m
                .whitened_sha256
                .as_deref()
                .ok_or_else(|| Error::Integrity("input basis without whitened columns".into()))?;
            let w = DMatrix::from_row_slice(d, r, &io::read_f64s(&dir.join("whitened.bin"), d * r, sum)?);
            let encoder = w.transpose() * cov.whitening();
            ReducedBasis { kind: m.kind, source: m.source, cols, eigs, mean, whitened: Some(w), encoder }
        } else {
            let encoder = cov.mesh().mass().mul_mat(&cols).transpose();
            ReducedBasis { kind: m.kind, source: m.source, cols, eigs, mean, whitened: None, encoder }
        };
        Ok((basis, m.config_digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{generate_dataset, PdeProblem, ProblemKind};
    use crate::CovarianceParams;

    fn setup(n_el: usize) -> (PdeProblem, SpectralCovariance) {
        let mesh = Mesh1D::uniform(n_el).unwrap();
        let p = PdeProblem::new(ProblemKind::SemilinearElliptic, mesh.clone()).unwrap();
        let cov =
            SpectralCovariance::new(mesh, CovarianceParams { a_delta: 2.0, a_identity: 10.0, alpha: 1.0 }).unwrap();
        (p, cov)
    }

    fn linear_set(cov: &SpectralCovariance, a: &DMatrix<f64>, n: usize) -> SampleSet {
        let d = cov.dim();
        let mut stream = crate::rng::NormalStream::new(3, 0);
        let inputs: Vec<_> = (0..n).map(|_| cov.sample(&mut stream)).collect();
        SampleSet {
            problem: ProblemKind::SemilinearElliptic,
            n_el: d - 1,
            covariance: cov.params(),
            seed: 3,
            outputs: inputs.iter().map(|x| a * x).collect(),
            jacobians: (0..n).map(|_| Jacobian::Dense(a.clone())).collect(),
            iterations: vec![0; n],
            inputs,
        }
    }

    #[test]
    fn input_pca_matches_covariance() {
        let (_, cov) = setup(16);
        let b = input_pca(&cov, 17).unwrap();
        assert_eq!(b.eigs(), cov.mu());
        let w = b.whitened_cols().unwrap();
        assert!((w.transpose() * w - DMatrix::identity(17, 17)).amax() < 1e-12);
        let x = DVector::from_fn(17, |i, _| (i as f64 * 0.7).cos());
        assert!((b.project(&x).unwrap() - &x).amax() < 1e-9);
        for j in 0..17 {
            let c = b.cols().column(j).into_owned();
            assert!((cov.cm_inner(&c, &c) - 1.0).abs() < 1e-9);
        }
        assert!(input_pca(&cov, 18).is_err());
    }

    #[test]
    fn side_mismatch_is_rejected() {
        let (p, cov) = setup(8);
        let set = generate_dataset(&p, &cov, 5, 1).unwrap();
        let out = output_pca(&set, cov.mesh(), 3).unwrap();
        let inp = input_pca(&cov, 3).unwrap();
        let v = DVector::zeros(9);
        assert!(out.encode_input(&v).is_err());
        assert!(inp.encode_output(&v).is_err());
        assert!(reduce_jacobian(&set.jacobians[0], &inp, &out).is_err());
    }

    #[test]
    fn output_pca_trace_and_rank() {
        let (p, cov) = setup(32);
        let set = generate_dataset(&p, &cov, 10, 2).unwrap();
        let b = output_pca(&set, cov.mesh(), 5).unwrap();
        let mean = b.mean();
        let total: f64 = set.outputs.iter().map(|y| cov.mesh().norm_sq(&(y - mean))).sum::<f64>() / 10.0;
        assert!((b.eigs().sum() - total).abs() < 1e-10 * total);
        assert!(b.eigs().iter().skip(9).all(|&v| v == 0.0));
        let gram = b.cols().transpose() * cov.mesh().mass_dense() * b.cols();
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-9);
        assert!(output_pca(&set, cov.mesh(), 11).is_err());
        assert!(output_pca(&set.truncated(1), cov.mesh(), 1).is_err());
    }

    #[test]
    fn rank_one_linear_map_has_single_output_mode() {
        let (_, cov) = setup(32);
        let phi1 = cov.phi().column(0).into_owned();
        let m = cov.mesh().mass_dense();
        let a = &phi1 * (phi1.transpose() * m);
        let set = linear_set(&cov, &a, 50);
        let b = output_pca(&set, cov.mesh(), 2).unwrap();
        assert!(b.eigs()[0] > 0.0);
        assert!(b.eigs()[1] < 1e-20);
    }

    #[test]
    fn input_dis_for_linear_map_is_sample_independent() {
        let (_, cov) = setup(16);
        let a = DMatrix::from_fn(17, 17, |i, j| ((i * 3 + j) as f64 * 0.11).sin());
        let h1 = input_dis_operator(&linear_set(&cov, &a, 1), &cov).unwrap();
        let h100 = input_dis_operator(&linear_set(&cov, &a, 100), &cov).unwrap();
        assert!((&h1 - &h100).amax() < 1e-12 * h1.amax());
    }

    #[test]
    fn single_active_direction_is_found() {
        let (_, cov) = setup(16);
        // F(x) = phi_1 * xi_3
        let phi1 = cov.phi().column(0).into_owned();
        let a = &phi1 * cov.whitening().row(2);
        let set = linear_set(&cov, &a, 3);
        let b = input_dis(&set, &cov, 2).unwrap();
        let w = b.whitened_cols().unwrap();
        assert!(w[(2, 0)].abs() > 1.0 - 1e-10);
        let pca = input_pca(&cov, 3).unwrap();
        assert!((pca.whitened_cols().unwrap()[(2, 2)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dis_traces_and_shared_spectrum() {
        let (p, cov) = setup(24);
        let set = generate_dataset(&p, &cov, 1, 4).unwrap();
        let hin = input_dis(&set, &cov, 4).unwrap();
        let hout = output_dis(&set, &cov, 4).unwrap();
        let jt = set.jacobians[0].to_dense() * cov.coloring();
        let hs = (jt.transpose() * cov.mesh().mass_dense() * &jt).trace();
        assert!((hin.eigs().sum() - hs).abs() < 1e-10 * hs);
        assert!((hout.eigs().sum() - hs).abs() < 1e-10 * hs);
        for i in 0..10 {
            let (a, b) = (hin.eigs()[i], hout.eigs()[i]);
            assert!((a - b).abs() <= 1e-9 * a.max(b), "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn encode_decode_and_projection_properties() {
        let (p, cov) = setup(24);
        let set = generate_dataset(&p, &cov, 20, 5).unwrap();
        for kind in BasisKind::ALL {
            let b = build_basis(kind, &set, &cov, 6).unwrap();
            let s = DVector::from_fn(6, |i, _| i as f64 - 2.5);
            let v = b.decode(&s).unwrap();
            assert!((&b.encoder * v - &s).amax() < 1e-10, "{kind}");
            let x = &set.outputs[3] + &set.inputs[2];
            let px = b.project(&x).unwrap();
            assert!((b.project(&px).unwrap() - &px).amax() < 1e-10, "{kind}");
            if !kind.is_input() {
                let rest = &x - &px;
                assert!(cov.mesh().inner(&rest, &px).abs() <= 1e-10 * cov.mesh().norm_sq(&x));
            }
        }
    }

    #[test]
    fn reduce_jacobian_full_rank_preserves_hs_norm() {
        let (p, cov) = setup(12);
        let set = generate_dataset(&p, &cov, 2, 6).unwrap();
        let d = cov.dim();
        let inp = input_pca(&cov, d).unwrap();
        let out = output_dis(&set, &cov, d).unwrap();
        let g = reduce_jacobian(&set.jacobians[1], &out, &inp).unwrap();
        let jt = set.jacobians[1].to_dense() * cov.coloring();
        let hs = (jt.transpose() * cov.mesh().mass_dense() * &jt).trace();
        assert!((g.norm_squared() - hs).abs() < 1e-9 * hs);
        let zero = Jacobian::Dense(DMatrix::zeros(d, d));
        assert_eq!(reduce_jacobian(&zero, &out, &inp).unwrap().amax(), 0.0);
    }

    #[test]
    fn trailing_sum_edges() {
        let e = [3.0, 2.0, 1.0];
        assert_eq!(trailing_sum(&e, 3).unwrap(), 0.0);
        assert_eq!(trailing_sum(&e, 0).unwrap(), 6.0);
        assert_eq!(trailing_sum(&e, 1).unwrap(), 3.0);
        assert!(trailing_sum(&e, 4).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let (p, cov) = setup(10);
        let set = generate_dataset(&p, &cov, 6, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for kind in BasisKind::ALL {
            let b = build_basis(kind, &set, &cov, 4).unwrap();
            let path = dir.path().join(kind.name());
            b.save(&path, "abc").unwrap();
            let (loaded, digest) = ReducedBasis::load(&path, &cov).unwrap();
            assert_eq!(digest, "abc");
            assert_eq!(loaded.cols(), b.cols());
            assert_eq!(loaded.eigs(), b.eigs());
            assert!((loaded.encoder() - b.encoder()).amax() < 1e-14);
        }
    }
}
