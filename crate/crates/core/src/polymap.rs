//! Polynomial chaos test maps `F(xi) = sum_alpha c_alpha H_alpha(xi)` in the
//! normalized Hermite basis, with closed-form derivatives, conditional
//! expectations and inverse-inequality constants.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::max_generalized_eigenvalue_on_range;
use crate::rng::NormalStream;

/// Normalized probabilists' Hermite polynomial `He_n(t) / sqrt(n!)`.
pub fn hermite_eval(n: usize, t: f64) -> f64 {
    *hermite_all(n, t).last().expect("at least H_0")
}

/// `[H_0(t), ..., H_n(t)]`.
pub fn hermite_all(n: usize, t: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(t);
    }
    for k in 1..n {
        let next = (t * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        h.push(next);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTerm {
    pub alpha: Vec<u32>,
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteMap {
    dim_in: usize,
    dim_out: usize,
    terms: Vec<HermiteTerm>,
}

fn order(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

impl HermiteMap {
    pub fn new(dim_in: usize, dim_out: usize, terms: Vec<HermiteTerm>) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::invalid("Hermite maps need positive input and output dimensions"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &terms {
            if t.alpha.len() != dim_in || t.coef.len() != dim_out {
                return Err(Error::dims("term shape does not match the map dimensions"));
            }
            if t.coef.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("non-finite chaos coefficient"));
            }
            if !seen.insert(t.alpha.clone()) {
                return Err(Error::invalid(format!("duplicate multi-index {:?}", t.alpha)));
            }
        }
        Ok(Self { dim_in, dim_out, terms })
    }

    fn from_accumulated(dim_in: usize, dim_out: usize, acc: BTreeMap<Vec<u32>, DVector<f64>>) -> Self {
        let terms =
            acc.into_iter().map(|(alpha, coef)| HermiteTerm { alpha, coef: coef.as_slice().to_vec() }).collect();
        Self { dim_in, dim_out, terms }
    }

    /// Random map of exactly the given degree: one term of full degree plus
    /// `extra_terms` terms of random order in `0..=degree`.
    pub fn random(
        dim_in: usize,
        dim_out: usize,
        degree: u32,
        extra_terms: usize,
        rng: &mut NormalStream,
    ) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("random maps need degree at least 1"));
        }
        let mut acc: BTreeMap<Vec<u32>, DVector<f64>> = BTreeMap::new();
        for k in 0..=extra_terms {
            let target = if k == 0 { degree } else { rng.next_index(degree as usize + 1) as u32 };
            let mut alpha = vec![0u32; dim_in];
            for _ in 0..target {
                alpha[rng.next_index(dim_in)] += 1;
            }
            let coef = rng.normal_vector(dim_out);
            *acc.entry(alpha).or_insert_with(|| DVector::zeros(dim_out)) += coef;
        }
        Ok(Self::from_accumulated(dim_in, dim_out, acc))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn terms(&self) -> &[HermiteTerm] {
        &self.terms
    }

    /// Largest `|alpha|` among terms with a nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|t| t.coef.iter().any(|&c| c != 0.0)).map(|t| order(&t.alpha)).max().unwrap_or(0)
    }

    fn check_point(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim_in {
            return Err(Error::dims(format!("point of length {} for a map with {} inputs", xi.len(), self.dim_in)));
        }
        Ok(())
    }

    fn tables(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let n = self.terms.iter().flat_map(|t| t.alpha.iter().cloned()).max().unwrap_or(0) as usize;
        xi.iter().map(|&t| hermite_all(n, t)).collect()
    }

    pub fn eval(&self, xi: &[f64]) -> Result<DVector<f64>> {
        self.check_point(xi)?;
        let tab = self.tables(xi);
        let mut out = DVector::zeros(self.dim_out);
        for t in &self.terms {
            let basis: f64 = t.alpha.iter().enumerate().map(|(i, &a)| tab[i][a as usize]).product();
            out.axpy(basis, &DVector::from_column_slice(&t.coef), 1.0);
        }
        Ok(out)
    }

    /// `dim_out x dim_in` Jacobian, column `k` = `sum_alpha sqrt(alpha_k) c_alpha H_{alpha - e_k}`.
    pub fn jacobian(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(xi)?;
        let tab = self.tables(xi);
        let mut jac = DMatrix::zeros(self.dim_out, self.dim_in);
        for t in &self.terms {
            for k in 0..self.dim_in {
                let ak = t.alpha[k];
                if ak == 0 {
                    continue;
                }
                let mut basis = (ak as f64).sqrt();
                for (i, &a) in t.alpha.iter().enumerate() {
                    basis *= tab[i][if i == k { a as usize - 1 } else { a as usize }];
                }
                for (o, c) in t.coef.iter().enumerate() {
                    jac[(o, k)] += basis * c;
                }
            }
        }
        Ok(jac)
    }

    /// Chaos expansion of `dF/dxi_k`.
    pub fn derivative(&self, k: usize) -> Result<HermiteMap> {
        if k >= self.dim_in {
            return Err(Error::invalid(format!("coordinate {k} out of range")));
        }
        let mut acc: BTreeMap<Vec<u32>, DVector<f64>> = BTreeMap::new();
        for t in &self.terms {
            if t.alpha[k] == 0 {
                continue;
            }
            let mut beta = t.alpha.clone();
            beta[k] -= 1;
            let scale = (t.alpha[k] as f64).sqrt();
            *acc.entry(beta).or_insert_with(|| DVector::zeros(self.dim_out)) +=
                DVector::from_column_slice(&t.coef) * scale;
        }
        Ok(Self::from_accumulated(self.dim_in, self.dim_out, acc))
    }

    /// `E[F]` = the constant coefficient.
    pub fn mean(&self) -> DVector<f64> {
        self.terms
            .iter()
            .find(|t| order(&t.alpha) == 0)
            .map_or_else(|| DVector::zeros(self.dim_out), |t| DVector::from_column_slice(&t.coef))
    }

    /// `E ||F||^2 = sum_alpha ||c_alpha||^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.terms.iter().map(|t| t.coef.iter().map(|c| c * c).sum::<f64>()).sum()
    }

    /// `E <F, G>` for two maps with matching dimensions.
    pub fn l2_inner(&self, other: &HermiteMap) -> f64 {
        let lookup: BTreeMap<&[u32], &[f64]> =
            other.terms.iter().map(|t| (t.alpha.as_slice(), t.coef.as_slice())).collect();
        self.terms
            .iter()
            .filter_map(|t| {
                lookup.get(t.alpha.as_slice()).map(|c| t.coef.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>())
            })
            .sum()
    }

    /// `E ||D F||_F^2 = sum_alpha |alpha| ||c_alpha||^2`.
    pub fn derivative_energy(&self) -> f64 {
        self.terms.iter().map(|t| order(&t.alpha) as f64 * t.coef.iter().map(|c| c * c).sum::<f64>()).sum()
    }

    /// `E[F | xi_i, i in retained]`: the terms supported inside `retained`.
    pub fn conditional_expectation(&self, retained: &[usize]) -> Result<HermiteMap> {
        if retained.iter().any(|&i| i >= self.dim_in) {
            return Err(Error::invalid("retained coordinate out of range"));
        }
        let terms = self
            .terms
            .iter()
            .filter(|t| t.alpha.iter().enumerate().all(|(i, &a)| a == 0 || retained.contains(&i)))
            .cloned()
            .collect();
        Ok(Self { dim_in: self.dim_in, dim_out: self.dim_out, terms })
    }

    /// Output covariance `C_Y = sum_{|alpha| >= 1} c c^T`.
    pub fn output_covariance(&self) -> DMatrix<f64> {
        self.weighted_outer(|a| if a >= 1 { 1.0 } else { 0.0 })
    }

    /// `H_Y = E[D F D F^T] = sum_alpha |alpha| c c^T`.
    pub fn output_derivative_form(&self) -> DMatrix<f64> {
        self.weighted_outer(|a| a as f64)
    }

    fn weighted_outer(&self, weight: impl Fn(u32) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim_out, self.dim_out);
        for t in &self.terms {
            let w = weight(order(&t.alpha));
            if w != 0.0 {
                let c = DVector::from_column_slice(&t.coef);
                m += &c * c.transpose() * w;
            }
        }
        m
    }

    /// `H_X[k, l] = E <d_k F, d_l F>`.
    pub fn input_derivative_form(&self) -> Result<DMatrix<f64>> {
        let ders: Vec<HermiteMap> = (0..self.dim_in).map(|k| self.derivative(k)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.dim_in, self.dim_in, |k, l| ders[k].l2_inner(&ders[l])))
    }

    /// Hessian form `[k, l] = sum_j E <d_j d_k F, d_j d_l F>`, so that
    /// `v^T form v = E ||D^2 F(., v)||_HS^2`.
    pub fn input_hessian_form(&self) -> Result<DMatrix<f64>> {
        let n = self.dim_in;
        let mut second: Vec<Vec<HermiteMap>> = Vec::with_capacity(n);
        for k in 0..n {
            let dk = self.derivative(k)?;
            second.push((0..n).map(|j| dk.derivative(j)).collect::<Result<_>>()?);
        }
        Ok(DMatrix::from_fn(n, n, |k, l| (0..n).map(|j| second[k][j].l2_inner(&second[l][j])).sum()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: HermiteMap = io::read_json(path)?;
        HermiteMap::new(m.dim_in, m.dim_out, m.terms)
    }
}

/// Observed inverse-inequality constants of a Hermite map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub degree: u32,
    /// Exact `sup <u, H_Y u> / <u, C_Y u>` (generalized eigenvalue).
    pub k_d: f64,
    /// Exact Hessian-inverse constant.
    pub k_h: f64,
    /// Maxima over the probe set (canonical directions plus random unit vectors).
    pub k_d_probe: f64,
    pub k_h_probe: f64,
    /// Analytic `E ||D F||_F^2` and its Monte Carlo estimate with standard error.
    pub derivative_energy: f64,
    pub derivative_energy_mc: f64,
    pub derivative_energy_se: f64,
}

pub const PROBE_COUNT: usize = 64;

fn probe_max(a: &DMatrix<f64>, b: &DMatrix<f64>, rng: &mut NormalStream) -> f64 {
    let n = a.nrows();
    let scale = b.diagonal().amax();
    let mut probes: Vec<DVector<f64>> =
        (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    for _ in 0..PROBE_COUNT {
        let v = rng.normal_vector(n);
        probes.push(&v / v.norm());
    }
    probes
        .iter()
        .filter_map(|u| {
            let den = u.dot(&(b * u));
            (den > 1e-12 * scale).then(|| u.dot(&(a * u)) / den)
        })
        .fold(0.0, f64::max)
}

/// Computes `K_D`, `K_H` exactly and over a probe set, and checks the derivative
/// energy against `n_mc` Monte Carlo samples.
pub fn verify_constants(map: &HermiteMap, n_mc: usize, seed: u64) -> Result<ConstantReport> {
    if n_mc < 10_000 {
        return Err(Error::invalid("verify_constants needs at least 10^4 Monte Carlo samples"));
    }
    let cy = map.output_covariance();
    let hy = map.output_derivative_form();
    let hx = map.input_derivative_form()?;
    let hess = map.input_hessian_form()?;
    let k_d = max_generalized_eigenvalue_on_range(&hy, &cy, 1e-12)?;
    let k_h = max_generalized_eigenvalue_on_range(&hess, &hx, 1e-12)?;
    let mut probe_rng = NormalStream::new(seed, 0);
    let k_d_probe = probe_max(&hy, &cy, &mut probe_rng);
    let k_h_probe = probe_max(&hess, &hx, &mut probe_rng);
    let mut rng = NormalStream::new(seed, 1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_mc {
        let xi: Vec<f64> = (0..map.dim_in()).map(|_| rng.next_normal()).collect();
        let e = map.jacobian(&xi)?.norm_squared();
        sum += e;
        sum_sq += e * e;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(ConstantReport {
        degree: map.degree(),
        k_d,
        k_h,
        k_d_probe,
        k_h_probe,
        derivative_energy: map.derivative_energy(),
        derivative_energy_mc: mean,
        derivative_energy_se: (var / n).sqrt(),
    })
}

/// Analytic subspace Poincare sides for the leading `r` coordinates:
/// `E ||F - E[F | xi_1..r]||^2` and `E ||D F (I - Q_r)||_F^2`.
pub fn subspace_poincare_sides(map: &HermiteMap, r: usize) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for t in &map.terms {
        let energy: f64 = t.coef.iter().map(|c| c * c).sum();
        let outside: u32 = t.alpha.iter().skip(r).sum();
        if outside > 0 {
            lhs += energy;
        }
        rhs += outside as f64 * energy;
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen_desc;

    fn single(dim_in: usize, alpha: Vec<u32>, coef: Vec<f64>) -> HermiteMap {
        let dim_out = coef.len();
        HermiteMap::new(dim_in, dim_out, vec![HermiteTerm { alpha, coef }]).unwrap()
    }

    /// Golub-Welsch nodes and weights for the standard Gaussian.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let jac = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
        let (vals, vecs) = symmetric_eigen_desc(&jac).unwrap();
        (vals.iter().cloned().collect(), (0..n).map(|i| vecs[(0, i)].powi(2)).collect())
    }

    #[test]
    fn low_order_values() {
        for t in [-1.3, 0.0, 0.7, 2.5] {
            assert_eq!(hermite_eval(0, t), 1.0);
            assert_eq!(hermite_eval(1, t), t);
            assert!((hermite_eval(2, t) - (t * t - 1.0) / 2f64.sqrt()).abs() < 1e-14);
            assert!((hermite_eval(3, t) - (t * t * t - 3.0 * t) / 6f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn orthonormal_under_gauss_hermite_quadrature() {
        let (nodes, weights) = gauss_hermite(200);
        for m in 0..=8 {
            for n in 0..=8 {
                let s: f64 =
                    nodes.iter().zip(&weights).map(|(&t, &w)| w * hermite_eval(m, t) * hermite_eval(n, t)).sum();
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-10, "({m}, {n}): {s}");
            }
        }
    }

    #[test]
    fn linear_map_has_constant_jacobian() {
        let f = single(3, vec![1, 0, 0], vec![2.0, -1.0]);
        let j = f.jacobian(&[0.3, -2.0, 1.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = NormalStream::new(11, 0);
        let f = HermiteMap::random(4, 3, 4, 12, &mut rng).unwrap();
        let xi = [0.3, -0.8, 1.1, 0.05];
        let j = f.jacobian(&xi).unwrap();
        let eps = 1e-5;
        for k in 0..4 {
            let mut p = xi;
            let mut m = xi;
            p[k] += eps;
            m[k] -= eps;
            let fd = (f.eval(&p).unwrap() - f.eval(&m).unwrap()) / (2.0 * eps);
            assert!((fd - j.column(k)).norm() < 1e-7 * j.norm().max(1.0));
        }
    }

    #[test]
    fn derivative_map_matches_jacobian_column() {
        let mut rng = NormalStream::new(5, 0);
        let f = HermiteMap::random(3, 2, 3, 8, &mut rng).unwrap();
        let xi = [0.4, 1.2, -0.3];
        let j = f.jacobian(&xi).unwrap();
        for k in 0..3 {
            assert!((f.derivative(k).unwrap().eval(&xi).unwrap() - j.column(k)).amax() < 1e-12);
        }
    }

    #[test]
    fn constants_for_simple_maps() {
        let lin = single(2, vec![0, 1], vec![1.0, 2.0]);
        let rep = verify_constants(&lin, 10_000, 1).unwrap();
        assert!((rep.k_d - 1.0).abs() < 1e-12);
        assert_eq!(rep.k_h, 0.0);
        let cubic = single(3, vec![1, 2, 0], vec![0.5, -1.0, 0.25]);
        let rep = verify_constants(&cubic, 10_000, 1).unwrap();
        assert!((rep.k_d - 3.0).abs() < 1e-10);
        assert!((rep.k_d_probe - 3.0).abs() < 1e-10);
        assert!(rep.k_h <= 2.0 + 1e-10);
        assert!(verify_constants(&cubic, 100, 1).is_err());
    }

    #[test]
    fn conditional_expectation_edges() {
        let mut rng = NormalStream::new(2, 0);
        let f = HermiteMap::random(4, 2, 3, 10, &mut rng).unwrap();
        assert_eq!(f.conditional_expectation(&[0, 1, 2, 3]).unwrap(), f);
        let c = f.conditional_expectation(&[]).unwrap();
        assert!(c.terms().iter().all(|t| order(&t.alpha) == 0));
        assert_eq!(c.mean(), f.mean());
    }

    #[test]
    fn poincare_sides_edges() {
        let lin = HermiteMap::new(
            3,
            1,
            vec![
                HermiteTerm { alpha: vec![1, 0, 0], coef: vec![1.0] },
                HermiteTerm { alpha: vec![0, 1, 0], coef: vec![2.0] },
                HermiteTerm { alpha: vec![0, 0, 1], coef: vec![3.0] },
            ],
        )
        .unwrap();
        assert_eq!(subspace_poincare_sides(&lin, 1), (13.0, 13.0));
        assert_eq!(subspace_poincare_sides(&lin, 3), (0.0, 0.0));
    }

    #[test]
    fn rejects_duplicates_and_bad_shapes() {
        let t = HermiteTerm { alpha: vec![1, 0], coef: vec![1.0] };
        assert!(HermiteMap::new(2, 1, vec![t.clone(), t.clone()]).is_err());
        assert!(HermiteMap::new(3, 1, vec![t]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = NormalStream::new(9, 0);
        let f = HermiteMap::random(3, 2, 2, 5, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        f.save(&path).unwrap();
        assert_eq!(HermiteMap::load(&path).unwrap(), f);
    }
}
