//! Linear finite elements on the unit interval and the Gaussian input
//! measure `N(0, (a_delta * (-Laplacian) + a_identity)^(-alpha))`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, spd_sqrt_pair, symmetric_eigen_desc, Tridiagonal};
use crate::rng::NormalStream;

/// Uniform mesh of `[0, 1]` with P1 mass and stiffness matrices.
#[derive(Debug, Clone)]
pub struct Mesh1D {
    n_el: usize,
    nodes: Vec<f64>,
    mass: Tridiagonal,
    stiffness: Tridiagonal,
    mass_dense: DMatrix<f64>,
    mass_sqrt: DMatrix<f64>,
    mass_inv_sqrt: DMatrix<f64>,
}

impl Mesh1D {
    pub fn uniform(n_el: usize) -> Result<Self> {
        if n_el < 2 {
            return Err(Error::invalid(format!("a mesh needs at least 2 elements, got {n_el}")));
        }
        let h = 1.0 / n_el as f64;
        let nodes = (0..=n_el).map(|i| i as f64 * h).collect();
        let mut mass = Tridiagonal::zeros(n_el + 1);
        for e in 0..n_el {
            mass.add_entry(e, e, h / 3.0);
            mass.add_entry(e + 1, e + 1, h / 3.0);
            mass.add_entry(e, e + 1, h / 6.0);
            mass.add_entry(e + 1, e, h / 6.0);
        }
        let stiffness = assemble_stiffness(n_el, &vec![1.0; n_el]);
        let mass_dense = mass.to_dense();
        let (mass_sqrt, mass_inv_sqrt) = spd_sqrt_pair(&mass_dense)?;
        Ok(Self { n_el, nodes, mass, stiffness, mass_dense, mass_sqrt, mass_inv_sqrt })
    }

    pub fn n_el(&self) -> usize {
        self.n_el
    }

    /// Number of nodal degrees of freedom.
    pub fn dim(&self) -> usize {
        self.n_el + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_el as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn mass(&self) -> &Tridiagonal {
        &self.mass
    }

    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    pub fn mass_dense(&self) -> &DMatrix<f64> {
        &self.mass_dense
    }

    pub fn stiffness_dense(&self) -> DMatrix<f64> {
        self.stiffness.to_dense()
    }

    /// Symmetric square root of the mass matrix.
    pub fn mass_sqrt(&self) -> &DMatrix<f64> {
        &self.mass_sqrt
    }

    pub fn mass_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.mass_inv_sqrt
    }

    /// Stiffness `\int c u' v'` for an element-wise constant coefficient.
    pub fn weighted_stiffness(&self, coefficient: &[f64]) -> Result<Tridiagonal> {
        if coefficient.len() != self.n_el {
            return Err(Error::dims(format!("{} element coefficients for {} elements", coefficient.len(), self.n_el)));
        }
        Ok(assemble_stiffness(self.n_el, coefficient))
    }

    /// L2 inner product of nodal functions.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.mass.inner(u.as_slice(), v.as_slice())
    }

    pub fn norm_sq(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u)
    }
}

fn assemble_stiffness(n_el: usize, coefficient: &[f64]) -> Tridiagonal {
    let inv_h = n_el as f64;
    let mut k = Tridiagonal::zeros(n_el + 1);
    for (e, c) in coefficient.iter().enumerate() {
        let s = c * inv_h;
        k.add_entry(e, e, s);
        k.add_entry(e + 1, e + 1, s);
        k.add_entry(e, e + 1, -s);
        k.add_entry(e + 1, e, -s);
    }
    k
}

/// Parameters of the elliptic covariance operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub a_delta: f64,
    pub a_identity: f64,
    pub alpha: f64,
}

/// Full eigen-representation of the covariance on a mesh.
///
/// `phi` holds mass-orthonormal eigenvectors of `(a_delta K + a_identity M) phi = rho M phi`
/// ordered so that the covariance eigenvalues `mu = rho^(-alpha)` are non-increasing.
#[derive(Debug, Clone)]
pub struct SpectralCovariance {
    mesh: Mesh1D,
    params: CovarianceParams,
    phi: DMatrix<f64>,
    rho: DVector<f64>,
    mu: DVector<f64>,
    coloring: DMatrix<f64>,
    whitening: DMatrix<f64>,
}

impl SpectralCovariance {
    pub fn new(mesh: Mesh1D, params: CovarianceParams) -> Result<Self> {
        let CovarianceParams { a_delta, a_identity, alpha } = params;
        for (name, v) in [("a_delta", a_delta), ("a_identity", a_identity), ("alpha", alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("covariance coefficient {name} must be positive, got {v}")));
            }
        }
        let d = mesh.dim();
        let operator = mesh.stiffness().combine(a_delta, mesh.mass(), a_identity).to_dense();
        let chol = Cholesky::new(mesh.mass_dense().clone())
            .ok_or_else(|| Error::Singular("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let l_inv =
            l.clone().try_inverse().ok_or_else(|| Error::Singular("Cholesky factor of the mass matrix".into()))?;
        let reduced = &l_inv * operator * l_inv.transpose();
        let (rho_desc, w) = symmetric_eigen_desc(&reduced)?;
        // ascending rho gives descending mu
        let order: Vec<usize> = (0..d).rev().collect();
        let rho = DVector::from_iterator(d, order.iter().map(|&i| rho_desc[i]));
        if rho.iter().any(|&r| r <= 0.0) {
            return Err(Error::EigenNonConvergence("non-positive eigenvalue of an SPD operator".into()));
        }
        let mut phi = l_inv.transpose() * w.select_columns(&order);
        canonicalize_signs(&mut phi);
        let mu = rho.map(|r| r.powf(-alpha));
        let sqrt_mu = mu.map(f64::sqrt);
        let coloring = &phi * DMatrix::from_diagonal(&sqrt_mu);
        let whitening = DMatrix::from_diagonal(&sqrt_mu.map(|s| 1.0 / s)) * phi.transpose() * mesh.mass_dense();
        Ok(Self { mesh, params, phi, rho, mu, coloring, whitening })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn params(&self) -> CovarianceParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// M-orthonormal eigenvectors (columns), matching `mu`.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    /// Covariance eigenvalues, non-increasing.
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// `Phi diag(sqrt(mu))`: maps whitened coordinates to nodal fields.
    pub fn coloring(&self) -> &DMatrix<f64> {
        &self.coloring
    }

    /// `diag(mu^(-1/2)) Phi^T M`: maps nodal fields to whitened coordinates.
    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }

    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.whitening * x
    }

    pub fn unwhiten(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.coloring * xi
    }

    /// Cameron-Martin inner product.
    pub fn cm_inner(&self, w1: &DVector<f64>, w2: &DVector<f64>) -> f64 {
        self.whiten(w1).dot(&self.whiten(w2))
    }

    /// Karhunen-Loeve sample `sum_i sqrt(mu_i) xi_i phi_i`.
    pub fn sample(&self, stream: &mut NormalStream) -> DVector<f64> {
        let xi = stream.normal_vector(self.dim());
        self.unwhiten(&xi)
    }

    /// Trace of the covariance operator.
    pub fn trace(&self) -> f64 {
        self.mu.sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn semilinear_cov(n_el: usize) -> SpectralCovariance {
        let mesh = Mesh1D::uniform(n_el).unwrap();
        SpectralCovariance::new(mesh, CovarianceParams { a_delta: 2.0, a_identity: 10.0, alpha: 1.0 }).unwrap()
    }

    #[test]
    fn two_element_matrices_are_closed_form() {
        let mesh = Mesh1D::uniform(2).unwrap();
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1.0 / 3.0, 1.0 / 6.0, 0.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 0.0, 1.0 / 6.0, 1.0 / 3.0],
        ) * 0.5;
        let k = DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -2.0, 4.0, -2.0, 0.0, -2.0, 2.0]);
        assert!((mesh.mass_dense() - m).amax() < 1e-15);
        assert!((mesh.stiffness_dense() - k).amax() < 1e-15);
    }

    #[test]
    fn mesh_invariants() {
        let mesh = Mesh1D::uniform(256).unwrap();
        assert_eq!(mesh.dim(), 257);
        assert!((mesh.mass_dense().sum() - 1.0).abs() < 1e-12);
        let k = mesh.stiffness_dense();
        assert!((&k - k.transpose()).amax() == 0.0);
        assert!((k * DVector::from_element(257, 1.0)).amax() < 1e-10);
        assert!(matches!(Mesh1D::uniform(1), Err(Error::InvalidArgument(_))));
        let s = mesh.mass_sqrt();
        assert!((s * s - mesh.mass_dense()).amax() < 1e-14);
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal_and_mu_decreasing() {
        let cov = semilinear_cov(64);
        let phi = cov.phi();
        let gram = phi.transpose() * cov.mesh().mass_dense() * phi;
        assert!((gram - DMatrix::identity(65, 65)).amax() < 1e-10);
        assert!(cov.mu().iter().all(|&m| m > 0.0));
        assert!(cov.mu().as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn inverse_operator_reproduces_eigenpairs() {
        let cov = semilinear_cov(64);
        let mesh = cov.mesh();
        let a = mesh.stiffness().combine(2.0, mesh.mass(), 10.0).to_dense();
        let a_inv_m = a.lu().solve(mesh.mass_dense()).unwrap();
        for i in [0, 1, 10, 64] {
            let phi = cov.phi().column(i).into_owned();
            let lhs = &a_inv_m * &phi;
            let rhs = &phi * cov.mu()[i];
            assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm());
        }
    }

    #[test]
    fn rejects_non_positive_coefficients() {
        let mesh = Mesh1D::uniform(8).unwrap();
        let bad = CovarianceParams { a_delta: 0.0, a_identity: 10.0, alpha: 1.0 };
        assert!(matches!(SpectralCovariance::new(mesh, bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn whitening_round_trip_and_cameron_martin_norms() {
        let cov = semilinear_cov(32);
        let mut s = NormalStream::new(3, 0);
        let xi = s.normal_vector(cov.dim());
        assert!((cov.whiten(&cov.unwhiten(&xi)) - &xi).amax() < 1e-10);
        let phi1 = cov.phi().column(0).into_owned();
        let cm = cov.cm_inner(&phi1, &phi1);
        assert!((cm * cov.mu()[0] - 1.0).abs() < 1e-10);
        let zero = cov.unwhiten(&DVector::zeros(cov.dim()));
        assert_eq!(zero.amax(), 0.0);
        let mut e1 = DVector::zeros(cov.dim());
        e1[0] = 1.0;
        let x = cov.unwhiten(&e1);
        assert!((x - phi1 * cov.mu()[0].sqrt()).amax() < 1e-14);
    }

    #[test]
    fn cameron_martin_inner_matches_dense_operator() {
        let cov = semilinear_cov(32);
        let m = cov.mesh().mass_dense();
        let c = cov.phi() * DMatrix::from_diagonal(cov.mu()) * cov.phi().transpose() * m;
        let c_inv = c.try_inverse().unwrap();
        let mut s = NormalStream::new(9, 1);
        let w1 = s.normal_vector(cov.dim());
        let w2 = s.normal_vector(cov.dim());
        let brute = (w1.transpose() * m * &c_inv * &w2)[0];
        let fast = cov.cm_inner(&w1, &w2);
        assert!((brute - fast).abs() <= 1e-8 * brute.abs().max(1.0));
    }

    #[test]
    fn parseval_in_cameron_martin_space() {
        let cov = semilinear_cov(32);
        let mut s = NormalStream::new(11, 0);
        let x = s.normal_vector(cov.dim());
        let xi = cov.whiten(&x);
        let direct = {
            let m = cov.mesh().mass_dense();
            let c = cov.phi() * DMatrix::from_diagonal(cov.mu()) * cov.phi().transpose() * m;
            (x.transpose() * m * c.try_inverse().unwrap() * &x)[0]
        };
        assert!((xi.norm_squared() - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn eigenvalues_decay_like_inverse_square() {
        let cov = semilinear_cov(256);
        let idx: Vec<f64> = (20..=200).map(|i| i as f64).collect();
        let vals: Vec<f64> = (20..=200).map(|i| cov.mu()[i - 1]).collect();
        let slope = crate::linalg::loglog_slope(&idx, &vals).unwrap();
        assert!((-2.3..=-1.7).contains(&slope), "slope {slope}");
    }
}
