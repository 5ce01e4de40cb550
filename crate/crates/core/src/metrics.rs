//! Generalization, reconstruction and sampling-error diagnostics.
//!
//! Every ratio is a ratio of sums over the test set. Derivative quantities are
//! measured on whitened Jacobians `Jt = J C^{1/2}`, whose columns form an
//! E-orthonormal frame, with the output norm taken in `Y` (mass matrix).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mesh1D, SpectralCovariance};
use crate::linalg::{loglog_slope, symmetric_eigen_desc, weighted_frobenius_sq, PairwiseSum};
use crate::pde::{PdeProblem, SampleSet};
use crate::polymap::{subspace_poincare_sides, HermiteMap};
use crate::reduction::{output_mean, reduce_jacobian, trailing_sum, BasisKind, ReducedBasis};
use crate::rng::NormalStream;
use crate::surrogate::Rbno;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub name: String,
    /// Normalized error: summed error over summed denominator.
    pub value: f64,
    /// Mean of the normalizing quantity over the test set.
    pub denominator: f64,
    pub n_test: usize,
    pub provenance: Vec<String>,
}

impl ErrorReport {
    fn from_sums(name: &str, numerator: f64, denominator: f64, n_test: usize) -> Result<Self> {
        if !(denominator > 0.0) {
            return Err(Error::invalid(format!("{name}: the normalizing quantity vanishes")));
        }
        Ok(Self {
            name: name.to_string(),
            value: numerator / denominator,
            denominator: denominator / n_test as f64,
            n_test,
            provenance: Vec::new(),
        })
    }

    /// Un-normalized mean error, `value * denominator`.
    pub fn mean_error(&self) -> f64 {
        self.value * self.denominator
    }

    pub fn with_provenance(mut self, items: impl IntoIterator<Item = String>) -> Self {
        self.provenance.extend(items);
        self
    }
}

/// A map that can be evaluated together with its whitened Jacobian.
pub trait Surrogate {
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// Jacobian with respect to whitened input coordinates (`d_out x d_in`).
    fn whitened_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl Surrogate for Rbno {
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Rbno::predict(self, x)
    }

    fn whitened_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Rbno::whitened_jacobian(self, x)
    }
}

fn require_samples(test: &SampleSet) -> Result<()> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    Ok(())
}

fn require_jacobians(test: &SampleSet) -> Result<()> {
    require_samples(test)?;
    if !test.has_jacobians() {
        return Err(Error::invalid("the test set carries no Jacobians"));
    }
    Ok(())
}

/// `sum ||y_k - y~_k||^2_Y / sum ||y_k||^2_Y`.
pub fn l2_error(test: &SampleSet, mesh: &Mesh1D, surrogate: &impl Surrogate) -> Result<ErrorReport> {
    require_samples(test)?;
    let mut num = PairwiseSum::new();
    let mut den = PairwiseSum::new();
    for (x, y) in test.inputs.iter().zip(&test.outputs) {
        num.push(mesh.norm_sq(&(y - surrogate.predict(x)?)));
        den.push(mesh.norm_sq(y));
    }
    ErrorReport::from_sums("l2_error", num.finish().unwrap_or(0.0), den.finish().unwrap_or(0.0), test.len())
}

/// `sum ||Jt_k - Jt~_k||^2_HS / sum ||Jt_k||^2_HS`.
pub fn h1_semi_error(test: &SampleSet, cov: &SpectralCovariance, surrogate: &impl Surrogate) -> Result<ErrorReport> {
    require_jacobians(test)?;
    let mass = cov.mesh().mass();
    let mut num = PairwiseSum::new();
    let mut den = PairwiseSum::new();
    for (x, jac) in test.inputs.iter().zip(&test.jacobians) {
        let jt = jac.apply(cov.coloring());
        num.push(weighted_frobenius_sq(mass, &(&jt - surrogate.whitened_jacobian(x)?)));
        den.push(weighted_frobenius_sq(mass, &jt));
    }
    ErrorReport::from_sums("h1_semi_error", num.finish().unwrap_or(0.0), den.finish().unwrap_or(0.0), test.len())
}

/// The three reconstruction quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    /// `sum ||(I - P_r)(y_k - mean)||^2 / sum ||y_k - mean_test||^2`.
    Output,
    /// `sum ||(I - P_r) Jt_k||^2 / sum ||Jt_k||^2`.
    DerivativeOutput,
    /// `sum ||Jt_k (I - Q_r)||^2 / sum ||Jt_k||^2`.
    DerivativeInput,
}

impl Reconstruction {
    pub fn name(self) -> &'static str {
        match self {
            Reconstruction::Output => "output_reconstruction",
            Reconstruction::DerivativeOutput => "derivative_reconstruction_output",
            Reconstruction::DerivativeInput => "derivative_reconstruction_input",
        }
    }

    /// The quantities a basis of `kind` can reconstruct.
    pub fn for_kind(kind: BasisKind) -> &'static [Reconstruction] {
        if kind.is_input() {
            &[Reconstruction::DerivativeInput]
        } else {
            &[Reconstruction::Output, Reconstruction::DerivativeOutput]
        }
    }

    /// The quantity whose training-set value equals the basis' trailing eigenvalue sum.
    pub fn matching(kind: BasisKind) -> Reconstruction {
        match kind {
            BasisKind::OutputPca => Reconstruction::Output,
            BasisKind::OutputDis => Reconstruction::DerivativeOutput,
            BasisKind::InputPca | BasisKind::InputDis => Reconstruction::DerivativeInput,
        }
    }
}

fn check_basis(
    test: &SampleSet,
    cov: &SpectralCovariance,
    basis: &ReducedBasis,
    quantity: Reconstruction,
) -> Result<()> {
    if !Reconstruction::for_kind(basis.kind()).contains(&quantity) {
        return Err(Error::invalid(format!("{} cannot be measured with a {} basis", quantity.name(), basis.kind())));
    }
    if basis.dim() != cov.dim() || test.dim() != cov.dim() {
        return Err(Error::dims("basis, test set and covariance disagree in dimension"));
    }
    if quantity == Reconstruction::Output {
        require_samples(test)
    } else {
        require_jacobians(test)
    }
}

/// Reconstruction errors of the leading `ranks` columns of `basis`, one report per rank.
///
/// Residuals are formed explicitly for each sample, so small errors keep
/// their relative accuracy.
pub fn reconstruction_curve(
    test: &SampleSet,
    cov: &SpectralCovariance,
    basis: &ReducedBasis,
    quantity: Reconstruction,
    ranks: &[usize],
) -> Result<Vec<ErrorReport>> {
    check_basis(test, cov, basis, quantity)?;
    let bases = ranks.iter().map(|&r| basis.truncated(r)).collect::<Result<Vec<_>>>()?;
    let mesh = cov.mesh();
    let mass = mesh.mass();
    let mut num: Vec<PairwiseSum<f64>> = ranks.iter().map(|_| PairwiseSum::new()).collect();
    let mut den = PairwiseSum::new();
    match quantity {
        Reconstruction::Output => {
            let test_mean = output_mean(test)?;
            for y in &test.outputs {
                den.push(mesh.norm_sq(&(y - &test_mean)));
                let c = y - basis.mean();
                for (b, acc) in bases.iter().zip(num.iter_mut()) {
                    acc.push(mesh.norm_sq(&(&c - b.project(&c)?)));
                }
            }
        }
        Reconstruction::DerivativeOutput | Reconstruction::DerivativeInput => {
            for jac in &test.jacobians {
                let jt = jac.apply(cov.coloring());
                den.push(weighted_frobenius_sq(mass, &jt));
                for (b, acc) in bases.iter().zip(num.iter_mut()) {
                    let residual = if quantity == Reconstruction::DerivativeOutput {
                        &jt - b.cols() * (b.encoder() * &jt)
                    } else {
                        let w =
                            b.whitened_cols().ok_or_else(|| Error::invalid("input basis without whitened columns"))?;
                        &jt - (&jt * w) * w.transpose()
                    };
                    acc.push(weighted_frobenius_sq(mass, &residual));
                }
            }
        }
    }
    let den = den.finish().unwrap_or(0.0);
    num.into_iter()
        .map(|acc| ErrorReport::from_sums(quantity.name(), acc.finish().unwrap_or(0.0), den, test.len()))
        .collect()
}

/// All reconstruction errors applicable to `basis`, at its full rank.
pub fn reconstruction_errors(
    test: &SampleSet,
    cov: &SpectralCovariance,
    basis: &ReducedBasis,
) -> Result<Vec<ErrorReport>> {
    let mut out = Vec::new();
    for &q in Reconstruction::for_kind(basis.kind()) {
        out.extend(reconstruction_curve(test, cov, basis, q, &[basis.rank()])?);
    }
    Ok(out)
}

/// Test-set second moments from which the reconstruction error of any basis
/// follows in `O(d^2 r)`. Suited to comparing many bases on one test set.
#[derive(Debug, Clone)]
pub struct TestMoments {
    n: usize,
    mean: DVector<f64>,
    /// `(1/N) sum (y - mean)(y - mean)^T`, nodal.
    output_covariance: DMatrix<f64>,
    /// `(1/N) sum Jt^T M Jt` (whitened input frame).
    input_gram: Option<DMatrix<f64>>,
    /// `(1/N) sum Jt Jt^T`, nodal.
    output_gram: Option<DMatrix<f64>>,
}

impl TestMoments {
    pub fn new(test: &SampleSet, cov: &SpectralCovariance) -> Result<Self> {
        require_samples(test)?;
        let n = test.len();
        let mean = output_mean(test)?;
        let mut acc = PairwiseSum::new();
        for y in &test.outputs {
            let c = y - &mean;
            acc.push(&c * c.transpose());
        }
        let output_covariance = acc.finish().expect("non-empty") / n as f64;
        let (input_gram, output_gram) = if test.has_jacobians() {
            (
                Some(crate::reduction::input_dis_operator(test, cov)?),
                Some(crate::reduction::nodal_output_gram(&test.jacobians, cov)?),
            )
        } else {
            (None, None)
        };
        Ok(Self { n, mean, output_covariance, input_gram, output_gram })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn gram(g: &Option<DMatrix<f64>>) -> Result<&DMatrix<f64>> {
        g.as_ref().ok_or_else(|| Error::invalid("the test set carries no Jacobians"))
    }

    /// Reconstruction error of `quantity` with `basis`.
    pub fn reconstruction(&self, basis: &ReducedBasis, mesh: &Mesh1D, quantity: Reconstruction) -> Result<ErrorReport> {
        if !Reconstruction::for_kind(basis.kind()).contains(&quantity) {
            return Err(Error::invalid(format!(
                "{} cannot be measured with a {} basis",
                quantity.name(),
                basis.kind()
            )));
        }
        let m = mesh.mass();
        let e = basis.encoder();
        let (num, den) = match quantity {
            Reconstruction::Output => {
                let c = &self.output_covariance;
                let total = m.mul_mat(c).trace();
                let kept = (e * c * e.transpose()).trace();
                let shift = &self.mean - basis.mean();
                let shift_kept = (e * &shift).norm_squared();
                (total - kept + mesh.norm_sq(&shift) - shift_kept, total)
            }
            Reconstruction::DerivativeOutput => {
                let g = Self::gram(&self.output_gram)?;
                let total = m.mul_mat(g).trace();
                (total - (e * g * e.transpose()).trace(), total)
            }
            Reconstruction::DerivativeInput => {
                let h = Self::gram(&self.input_gram)?;
                let w = basis.whitened_cols().ok_or_else(|| Error::invalid("input basis without whitened columns"))?;
                let total = h.trace();
                (total - (w.transpose() * h * w).trace(), total)
            }
        };
        ErrorReport::from_sums(quantity.name(), num * self.n as f64, den * self.n as f64, self.n)
    }
}

/// Reconstruction error of `small` minus that of `reference`, both measured on
/// the matching quantity of their kind. May be slightly negative.
pub fn excess_risk(
    small: &ReducedBasis,
    reference: &ReducedBasis,
    moments: &TestMoments,
    mesh: &Mesh1D,
) -> Result<f64> {
    if small.kind() != reference.kind() || small.rank() != reference.rank() {
        return Err(Error::invalid(format!(
            "excess risk compares {} rank {} against {} rank {}",
            small.kind(),
            small.rank(),
            reference.kind(),
            reference.rank()
        )));
    }
    let q = Reconstruction::matching(small.kind());
    Ok(moments.reconstruction(small, mesh, q)?.value - moments.reconstruction(reference, mesh, q)?.value)
}

/// `min(sqrt(2r) ||A_hat - A||_HS, 2 ||A_hat - A||_HS^2 / gap)` with `gap = lambda_r - lambda_{r+1}` of `A`:
/// a bound on `tr(A (P - P_hat))` for the rank-`r` dominant eigenprojections `P`, `P_hat`.
pub fn excess_risk_bound(a_hat: &DMatrix<f64>, a: &DMatrix<f64>, r: usize) -> Result<f64> {
    if a_hat.shape() != a.shape() || !a.is_square() {
        return Err(Error::dims("operators must be square and of equal size"));
    }
    if r == 0 || r >= a.nrows() {
        return Err(Error::invalid("rank must lie strictly inside the operator dimension"));
    }
    let dist = (a_hat - a).norm();
    let (eigs, _) = symmetric_eigen_desc(a)?;
    let gap = eigs[r - 1] - eigs[r];
    let global = (2.0 * r as f64).sqrt() * dist;
    Ok(if gap > 0.0 { global.min(2.0 * dist * dist / gap) } else { global })
}

/// `||mean_hat - mean_ref||^2_Y`.
pub fn mean_estimator_error(samples: &SampleSet, reference_mean: &DVector<f64>, mesh: &Mesh1D) -> Result<f64> {
    let m = output_mean(samples)?;
    if m.len() != reference_mean.len() {
        return Err(Error::dims("reference mean has the wrong length"));
    }
    Ok(mesh.norm_sq(&(m - reference_mean)))
}

/// Log-log regression slope of the mean of `values[i]` (one vector per grid point) against `grid`.
pub fn rate_slope(grid: &[usize], values: &[Vec<f64>]) -> Result<f64> {
    if grid.len() != values.len() || values.iter().any(|v| v.is_empty()) {
        return Err(Error::invalid("one non-empty value list per grid point is required"));
    }
    let x: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let y: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    loglog_slope(&x, &y)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: DVector<f64>,
    /// Componentwise standard error of the mean.
    pub std_err: DVector<f64>,
    pub samples: usize,
}

/// `(1/M) sum_m f(project(x) + z_m - project(z_m))` with `z_m` drawn by `sample`.
pub fn conditional_expectation_mc<F, P, S>(
    f: F,
    project: P,
    mut sample: S,
    x: &DVector<f64>,
    m_inner: usize,
) -> Result<McEstimate>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    P: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    S: FnMut() -> DVector<f64>,
{
    if m_inner == 0 {
        return Err(Error::invalid("at least one inner sample is required"));
    }
    let px = project(x)?;
    let mut sum = PairwiseSum::new();
    let mut sum_sq = PairwiseSum::new();
    for _ in 0..m_inner {
        let z = sample();
        let v = f(&(&px + &z - project(&z)?))?;
        sum_sq.push(v.component_mul(&v));
        sum.push(v);
    }
    let m = m_inner as f64;
    let mean = sum.finish().expect("non-empty") / m;
    let second = sum_sq.finish().expect("non-empty") / m;
    let var = (second - mean.component_mul(&mean)).map(|v| v.max(0.0));
    let std_err = if m_inner > 1 { var.map(|v| (v / (m - 1.0)).sqrt()) } else { DVector::zeros(mean.len()) };
    Ok(McEstimate { mean, std_err, samples: m_inner })
}

/// Conditional expectation of the PDE map given the projection of `x` onto an input basis.
pub fn conditional_expectation_pde(
    problem: &PdeProblem,
    cov: &SpectralCovariance,
    basis: &ReducedBasis,
    x: &DVector<f64>,
    m_inner: usize,
    stream: &mut NormalStream,
) -> Result<McEstimate> {
    if !basis.kind().is_input() {
        return Err(Error::invalid("conditioning requires an input basis"));
    }
    conditional_expectation_mc(|v| problem.forward(v), |v| basis.project(v), || cov.sample(stream), x, m_inner)
}

/// Conditional expectation of a Hermite map given the coordinates `retained`.
pub fn conditional_expectation_hermite(
    map: &HermiteMap,
    retained: &[usize],
    xi: &DVector<f64>,
    m_inner: usize,
    stream: &mut NormalStream,
) -> Result<McEstimate> {
    let n = map.dim_in();
    if xi.len() != n || retained.iter().any(|&k| k >= n) {
        return Err(Error::dims("conditioning point or retained coordinates out of range"));
    }
    let project = |v: &DVector<f64>| {
        let mut p = DVector::zeros(n);
        for &k in retained {
            p[k] = v[k];
        }
        Ok(p)
    };
    conditional_expectation_mc(|v| map.eval(v.as_slice()), project, || stream.normal_vector(n), xi, m_inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareRow {
    pub r: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl PoincareRow {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-12
    }
}

/// Both sides of the subspace Poincare inequality for each retained dimension.
pub fn subspace_poincare_check(map: &HermiteMap, ranks: &[usize]) -> Result<Vec<PoincareRow>> {
    ranks
        .iter()
        .map(|&r| {
            if r > map.dim_in() {
                return Err(Error::invalid(format!("rank {r} exceeds the input dimension {}", map.dim_in())));
            }
            let (lhs, rhs) = subspace_poincare_sides(map, r);
            Ok(PoincareRow { r, lhs, rhs })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub r: usize,
    /// Mean reconstruction error (un-normalized).
    pub measured: f64,
    pub trailing_sum: f64,
    pub bound: f64,
}

/// Measured reconstruction error of the basis' matching quantity against
/// `trailing_sum` and `constant * trailing_sum` over a rank grid.
pub fn bound_curve(
    test: &SampleSet,
    cov: &SpectralCovariance,
    basis: &ReducedBasis,
    ranks: &[usize],
    constant: f64,
) -> Result<Vec<BoundRow>> {
    let quantity = Reconstruction::matching(basis.kind());
    let reports = reconstruction_curve(test, cov, basis, quantity, ranks)?;
    ranks
        .iter()
        .zip(reports)
        .map(|(&r, rep)| {
            let tail = trailing_sum(basis.eigs().as_slice(), r)?;
            Ok(BoundRow { r, measured: rep.mean_error(), trailing_sum: tail, bound: constant * tail })
        })
        .collect()
}

/// Terms of the error decomposition for one surrogate, each normalized like
/// the corresponding measured error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub l2_measured: f64,
    /// `sum ||U^+ (y - mean) - phi(V^+ x)||^2`.
    pub l2_latent: f64,
    /// `sum ||(I - P)(y - mean_test)||^2`.
    pub l2_output_reconstruction: f64,
    /// `N ||(I - P)(mean_test - mean)||^2`.
    pub l2_mean_shift: f64,
    pub h1_measured: f64,
    /// `sum ||U^+ Jt W - D phi||_F^2`.
    pub h1_latent: f64,
    pub h1_input_reconstruction: f64,
    pub h1_output_reconstruction: f64,
}

impl ErrorDecomposition {
    pub fn l2_bound(&self) -> f64 {
        self.l2_latent + self.l2_output_reconstruction + self.l2_mean_shift
    }

    pub fn h1_bound(&self) -> f64 {
        self.h1_latent + self.h1_input_reconstruction + self.h1_output_reconstruction
    }

    /// Whether both bounds hold up to `slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.l2_measured <= self.l2_bound() + slack && self.h1_measured <= self.h1_bound() + slack
    }
}

/// Measured errors and every decomposition term, evaluated in one pass.
pub fn error_decomposition(test: &SampleSet, cov: &SpectralCovariance, rbno: &Rbno) -> Result<ErrorDecomposition> {
    require_jacobians(test)?;
    let mesh = cov.mesh();
    let mass = mesh.mass();
    let (input, output) = (&rbno.input, &rbno.output);
    let w = input.whitened_cols().ok_or_else(|| Error::invalid("input basis without whitened columns"))?;
    let test_mean = output_mean(test)?;
    let mut sums: [PairwiseSum<f64>; 9] = Default::default();
    let [l2_measured, l2_norm, l2_latent, l2_output, h1_measured, h1_norm, h1_latent, h1_input, h1_output] = &mut sums;
    for ((x, y), jac) in test.inputs.iter().zip(&test.outputs).zip(&test.jacobians) {
        let s = input.encode_input(x)?;
        let (phi, dphi) = rbno.net.forward_with_jacobian(&s)?;
        let pred = output.decode_output(&phi)? + output.mean();
        l2_measured.push(mesh.norm_sq(&(y - &pred)));
        l2_norm.push(mesh.norm_sq(y));
        l2_latent.push((output.encode_output(&(y - output.mean()))? - &phi).norm_squared());
        let c = y - &test_mean;
        l2_output.push(mesh.norm_sq(&(&c - output.project(&c)?)));

        let jt = jac.apply(cov.coloring());
        let surrogate = output.cols() * &dphi * w.transpose();
        h1_measured.push(weighted_frobenius_sq(mass, &(&jt - &surrogate)));
        h1_norm.push(weighted_frobenius_sq(mass, &jt));
        h1_latent.push((reduce_jacobian(jac, output, input)? - &dphi).norm_squared());
        h1_input.push(weighted_frobenius_sq(mass, &(&jt - (&jt * w) * w.transpose())));
        h1_output.push(weighted_frobenius_sq(mass, &(&jt - output.cols() * (output.encoder() * &jt))));
    }
    let [l2_measured, l2_norm, l2_latent, l2_output, h1_measured, h1_norm, h1_latent, h1_input, h1_output] =
        sums.map(|acc| acc.finish().unwrap_or(0.0));
    if !(l2_norm > 0.0) || !(h1_norm > 0.0) {
        return Err(Error::invalid("test outputs or Jacobians vanish"));
    }
    let shift = &test_mean - output.mean();
    let shift_residual = test.len() as f64 * mesh.norm_sq(&(&shift - output.project(&shift)?));
    Ok(ErrorDecomposition {
        l2_measured: l2_measured / l2_norm,
        l2_latent: l2_latent / l2_norm,
        l2_output_reconstruction: l2_output / l2_norm,
        l2_mean_shift: shift_residual / l2_norm,
        h1_measured: h1_measured / h1_norm,
        h1_latent: h1_latent / h1_norm,
        h1_input_reconstruction: h1_input / h1_norm,
        h1_output_reconstruction: h1_output / h1_norm,
    })
}

/// One CSV row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub problem: String,
    pub basis_in: String,
    pub basis_out: String,
    pub rank: usize,
    pub n_train: usize,
    pub seed: u64,
    pub value: f64,
    pub denominator: f64,
}

pub const CSV_HEADER: &str = "metric,problem,basis_in,basis_out,rank,n_train,seed,value,denominator";

/// Writes `rows` under the fixed header (also when `rows` is empty).
pub fn write_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Integrity(format!("unexpected CSV header in {}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
