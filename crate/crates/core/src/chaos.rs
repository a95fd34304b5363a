//! Hermite polynomials, multi-indices and Wiener chaos expansions.
//!
//! For a measure `N(0, diag(lambda))` the generalized Hermite polynomials
//!
//! ```text
//! Phi_alpha(x) = sqrt(alpha!) * prod_j phi_{alpha_j}(x_j / sqrt(lambda_j)),
//! phi_n = He_n / n!,
//! ```
//!
//! form an orthonormal basis of `L^2`; a [`ChaosExpansion`] stores the
//! coefficients of a function in this basis up to a fixed total degree.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::SpectralGaussian;
use crate::numerics::{self, QuadScheme};
use crate::permanent::permanent;

pub const MAX_HERMITE_DEGREE: usize = 60;
pub const MAX_MONOMIAL_DEGREE: usize = 8;

/// `phi_n(xi) = He_n(xi) / n!` via `phi_{n+1} = (xi phi_n - phi_{n-1}) / (n + 1)`.
pub fn hermite_phi(n: usize, xi: f64) -> Result<f64> {
    if n > MAX_HERMITE_DEGREE {
        return Err(Error::DegreeTooLarge { degree: n, max: MAX_HERMITE_DEGREE });
    }
    Ok(*hermite_phi_table(n, xi).last().unwrap())
}

/// `[phi_0(xi), ..., phi_n(xi)]`, no degree check.
pub fn hermite_phi_table(n: usize, xi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(xi);
    }
    for k in 1..n {
        let next = (xi * out[k] - out[k - 1]) / (k + 1) as f64;
        out.push(next);
    }
    out
}

/// A multi-index `alpha` of nonnegative integers.
///
/// Ordered by total degree first, then colexicographically (last entry most
/// significant), which is also the order of [`enumerate_indices`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = vec![0; dim];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `alpha!` in exact arithmetic; `None` on overflow.
    pub fn factorial_exact(&self) -> Option<u64> {
        self.0.iter().try_fold(1u64, |acc, &a| acc.checked_mul(factorial_u64(a as usize)?))
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial_f64(a as usize)).product()
    }

    /// Positions `i^alpha`: index `j` repeated `alpha_j` times, ascending.
    pub fn positions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(j, &a)| std::iter::repeat_n(j, a as usize))
            .collect()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.iter().rev().cmp(other.0.iter().rev()))
            .then_with(|| self.0.len().cmp(&other.0.len()))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn factorial_u64(n: usize) -> Option<u64> {
    (1..=n as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

pub fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All multi-indices of length `dim` and total degree `degree`, in colex
/// order; there are `C(degree + dim - 1, degree)` of them.
pub fn enumerate_indices(dim: usize, degree: usize) -> Vec<MultiIndex> {
    fn rec(dim: usize, degree: usize, out: &mut Vec<Vec<u32>>) {
        if dim == 1 {
            out.push(vec![degree as u32]);
            return;
        }
        for last in 0..=degree {
            let mut prefixes = Vec::new();
            rec(dim - 1, degree - last, &mut prefixes);
            for mut p in prefixes {
                p.push(last as u32);
                out.push(p);
            }
        }
    }
    if dim == 0 {
        return if degree == 0 { vec![MultiIndex(vec![])] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut out);
    out.into_iter().map(MultiIndex).collect()
}

/// Every multi-index with total degree `<= max_degree`, graded.
pub fn indices_up_to(dim: usize, max_degree: usize) -> Vec<MultiIndex> {
    (0..=max_degree).flat_map(|n| enumerate_indices(dim, n)).collect()
}

/// `|alpha|! / alpha!`, the number of distinct arrangements of `i^alpha`.
pub fn sigma_class_count(alpha: &MultiIndex) -> Result<u64> {
    let n = alpha.degree();
    if n > 20 {
        return Err(Error::DegreeTooLarge { degree: n, max: 20 });
    }
    let num = factorial_u64(n).ok_or(Error::DegreeTooLarge { degree: n, max: 20 })?;
    let den = alpha.factorial_exact().ok_or(Error::DegreeTooLarge { degree: n, max: 20 })?;
    Ok(num / den)
}

fn check_alpha(measure: &SpectralGaussian, alpha: &MultiIndex) -> Result<()> {
    if alpha.dim() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), found: alpha.dim() });
    }
    for (j, &a) in alpha.0.iter().enumerate() {
        if a > 0 && !measure.in_support(j) {
            return Err(Error::OffSupport { index: j });
        }
    }
    Ok(())
}

/// `Phi_alpha(x)` for the given measure.
pub fn phi_alpha(measure: &SpectralGaussian, alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
    check_alpha(measure, alpha)?;
    let lam = measure.eigenvalues();
    let mut value = alpha.factorial().sqrt();
    for (j, &a) in alpha.0.iter().enumerate() {
        if a > 0 {
            value *= hermite_phi(a as usize, x[j] / lam[j].sqrt())?;
        }
    }
    Ok(value)
}

/// Coefficients of an `L^2` function in the `Phi_alpha` basis, truncated at
/// total degree `max_degree`. Missing keys are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosExpansion {
    pub measure: SpectralGaussian,
    pub max_degree: usize,
    pub coeffs: BTreeMap<MultiIndex, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    pub alpha: MultiIndex,
    pub c: f64,
}

impl ChaosExpansion {
    pub fn zero(measure: SpectralGaussian, max_degree: usize) -> Self {
        ChaosExpansion { measure, max_degree, coeffs: BTreeMap::new() }
    }

    pub fn constant(measure: SpectralGaussian, max_degree: usize, c: f64) -> Self {
        let mut e = Self::zero(measure, max_degree);
        let d = e.measure.dim();
        e.coeffs.insert(MultiIndex::zero(d), c);
        e
    }

    /// Inserts `c` at `alpha`, rejecting degrees above `max_degree` and
    /// indices that charge kernel directions.
    pub fn insert(&mut self, alpha: MultiIndex, c: f64) -> Result<()> {
        check_alpha(&self.measure, &alpha)?;
        if alpha.degree() > self.max_degree {
            return Err(Error::DegreeTooLarge { degree: alpha.degree(), max: self.max_degree });
        }
        self.coeffs.insert(alpha, c);
        Ok(())
    }

    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lam = self.measure.eigenvalues();
        let n = self.max_degree;
        let tables: Vec<Vec<f64>> = (0..self.measure.dim())
            .map(|j| {
                if self.measure.in_support(j) {
                    hermite_phi_table(n, x[j] / lam[j].sqrt())
                } else {
                    let mut t = vec![0.0; n + 1];
                    t[0] = 1.0;
                    t
                }
            })
            .collect();
        self.coeffs
            .iter()
            .map(|(alpha, c)| {
                let mut v = c * alpha.factorial().sqrt();
                for (j, &a) in alpha.0.iter().enumerate() {
                    v *= tables[j][a as usize];
                }
                v
            })
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `L^2` inner product, via Parseval.
    pub fn dot(&self, other: &ChaosExpansion) -> f64 {
        self.coeffs.iter().map(|(a, c)| c * other.get(a)).sum()
    }

    pub fn degree_slice(&self, n: usize) -> ChaosExpansion {
        ChaosExpansion {
            measure: self.measure.clone(),
            max_degree: self.max_degree,
            coeffs: self.coeffs.iter().filter(|(a, _)| a.degree() == n).map(|(a, c)| (a.clone(), *c)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> ChaosExpansion {
        let mut out = self.clone();
        out.coeffs.values_mut().for_each(|c| *c *= s);
        out
    }

    /// `max_alpha |c_alpha - d_alpha|` over the union of supports.
    pub fn max_abs_diff(&self, other: &ChaosExpansion) -> f64 {
        let mut m = 0.0_f64;
        for (a, c) in &self.coeffs {
            m = m.max((c - other.get(a)).abs());
        }
        for (a, c) in &other.coeffs {
            m = m.max((c - self.get(a)).abs());
        }
        m
    }

    pub fn to_entries(&self) -> Vec<CoefficientEntry> {
        self.coeffs.iter().map(|(a, c)| CoefficientEntry { alpha: a.clone(), c: *c }).collect()
    }

    pub fn from_entries(measure: SpectralGaussian, max_degree: usize, entries: &[CoefficientEntry]) -> Result<Self> {
        let mut e = Self::zero(measure, max_degree);
        for entry in entries {
            e.insert(entry.alpha.clone(), entry.c)?;
        }
        Ok(e)
    }
}

/// Multi-indices of the measure up to `max_degree`, charging only support
/// directions.
pub fn support_indices(measure: &SpectralGaussian, max_degree: usize) -> Vec<MultiIndex> {
    (0..=max_degree).flat_map(|n| support_indices_of_degree(measure, n)).collect()
}

/// Degree-`degree` multi-indices of the measure charging only support directions.
pub fn support_indices_of_degree(measure: &SpectralGaussian, degree: usize) -> Vec<MultiIndex> {
    let d = measure.dim();
    let supp = measure.support();
    enumerate_indices(supp.len(), degree)
        .into_iter()
        .map(|a| {
            let mut full = vec![0; d];
            for (k, &j) in supp.iter().enumerate() {
                full[j] = a.0[k];
            }
            MultiIndex(full)
        })
        .collect()
}

/// Result of a chaos projection: the expansion and the `L^2` distance
/// between `f` and its truncated reconstruction under the same rule.
#[derive(Debug, Clone)]
pub struct Projection {
    pub expansion: ChaosExpansion,
    pub residual: f64,
}

/// `c_alpha = E[f Phi_alpha]` for all `|alpha| <= max_degree`.
pub fn project<F>(measure: &SpectralGaussian, f: F, max_degree: usize, scheme: &QuadScheme) -> Result<Projection>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let supp = measure.support().to_vec();
    let m = supp.len();
    let reduced = indices_up_to(m, max_degree);
    let scales: Vec<f64> = reduced.iter().map(|a| a.factorial().sqrt()).collect();
    let basis_at = |xi: &[f64], out: &mut [f64]| {
        let tables: Vec<Vec<f64>> = xi.iter().map(|&v| hermite_phi_table(max_degree, v)).collect();
        for (k, alpha) in reduced.iter().enumerate() {
            let mut v = scales[k];
            for (j, &a) in alpha.0.iter().enumerate() {
                v *= tables[j][a as usize];
            }
            out[k] = v;
        }
    };
    let nb = reduced.len();
    let raw = numerics::std_normal_expectation_vec(m, scheme, nb, |xi, out| {
        let fx = f(&measure.embed(xi));
        basis_at(xi, out);
        out.iter_mut().for_each(|v| *v *= fx);
    })?;
    let lifted = support_indices(measure, max_degree);
    let mut expansion = ChaosExpansion::zero(measure.clone(), max_degree);
    for (alpha, c) in lifted.into_iter().zip(&raw) {
        expansion.coeffs.insert(alpha, *c);
    }
    let residual_sq = numerics::std_normal_expectation_vec(m, scheme, 1, |xi, out| {
        let mut basis = vec![0.0; nb];
        basis_at(xi, &mut basis);
        let recon: f64 = basis.iter().zip(&raw).map(|(b, c)| b * c).sum();
        out[0] = (f(&measure.embed(xi)) - recon).powi(2);
    })?[0];
    Ok(Projection { expansion, residual: residual_sq.max(0.0).sqrt() })
}

/// [`project`] for inputs known to be polynomials of degree `<= max_degree`:
/// a residual above the scheme tolerance means the rule is too coarse.
pub fn project_polynomial<F>(
    measure: &SpectralGaussian,
    f: F,
    max_degree: usize,
    scheme: &QuadScheme,
) -> Result<ChaosExpansion>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let p = project(measure, f, max_degree, scheme)?;
    let tol = scheme.tol();
    if p.residual > tol {
        return Err(Error::SchemeTooCoarse { residual: p.residual, tol });
    }
    Ok(p.expansion)
}

/// Coefficients of `exp(W_z - |z|^2/2)`: `c_alpha = z^alpha / sqrt(alpha!)`
/// over the support.
pub fn exp_functional_coeffs(measure: &SpectralGaussian, z: &[f64], max_degree: usize) -> Result<ChaosExpansion> {
    if z.len() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), found: z.len() });
    }
    let mut e = ChaosExpansion::zero(measure.clone(), max_degree);
    for alpha in support_indices(measure, max_degree) {
        let mut c = 1.0 / alpha.factorial().sqrt();
        for (j, &a) in alpha.0.iter().enumerate() {
            c *= z[j].powi(a as i32);
        }
        e.coeffs.insert(alpha, c);
    }
    Ok(e)
}

/// Degree-`n` chaos component of `prod_j W_{h_j}`:
/// `c_alpha = perm(H_alpha) / sqrt(alpha!)` with `H_alpha[j][m] = h_j[i^alpha_m]`.
pub fn monomial_coeffs(measure: &SpectralGaussian, hs: &[Vec<f64>]) -> Result<ChaosExpansion> {
    let n = hs.len();
    if n > MAX_MONOMIAL_DEGREE {
        return Err(Error::DegreeTooLarge { degree: n, max: MAX_MONOMIAL_DEGREE });
    }
    for h in hs {
        if h.len() != measure.dim() {
            return Err(Error::DimensionMismatch { expected: measure.dim(), found: h.len() });
        }
    }
    let mut e = ChaosExpansion::zero(measure.clone(), n);
    for alpha in support_indices_of_degree(measure, n) {
        let pos = alpha.positions();
        let h = DMatrix::from_fn(n, n, |j, m| hs[j][pos[m]]);
        let c = permanent(&h)? / alpha.factorial().sqrt();
        e.coeffs.insert(alpha, c);
    }
    Ok(e)
}

/// Lookup from multi-index to its position in a degree block.
pub fn index_lookup(indices: &[MultiIndex]) -> HashMap<MultiIndex, usize> {
    indices.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(l: &[f64]) -> SpectralGaussian {
        SpectralGaussian::new(l.to_vec()).unwrap()
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_phi(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite_phi(2, 1.0).unwrap(), 0.0);
        assert!((hermite_phi(3, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(hermite_phi(61, 0.0), Err(Error::DegreeTooLarge { .. })));
    }

    #[test]
    fn hermite_matches_rodrigues_derivatives() {
        // He_n(x) from the explicit sum n! sum_m (-1)^m x^{n-2m} / (m! (n-2m)! 2^m)
        for n in 0..12 {
            for &x in &[-2.3f64, -0.4, 0.0, 0.9, 3.1] {
                let mut he = 0.0;
                for m in 0..=n / 2 {
                    he += (-1f64).powi(m as i32) * x.powi((n - 2 * m) as i32)
                        / (factorial_f64(m) * factorial_f64(n - 2 * m) * 2f64.powi(m as i32));
                }
                let phi = hermite_phi(n, x).unwrap();
                assert!((phi - he).abs() < 1e-12 * (1.0 + he.abs()), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn hermite_degree_sixty_is_finite() {
        let v = hermite_phi(60, 7.5).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_indices(1, 3), vec![mi(&[3])]);
        assert_eq!(enumerate_indices(3, 2).len(), 6);
        assert_eq!(enumerate_indices(2, 0), vec![mi(&[0, 0])]);
        assert_eq!(enumerate_indices(2, 2), vec![mi(&[2, 0]), mi(&[1, 1]), mi(&[0, 2])]);
    }

    #[test]
    fn enumeration_is_sorted_and_counts_match_binomials() {
        for d in 1..5 {
            for n in 0..7 {
                let idx = enumerate_indices(d, n);
                // C(n + d - 1, n)
                let expected = (1..=n).fold(1u64, |acc, k| acc * (d as u64 + k as u64 - 1) / k as u64);
                assert_eq!(idx.len() as u64, expected);
                assert!(idx.windows(2).all(|w| w[0] < w[1]));
                assert!(idx.iter().all(|a| a.degree() == n));
            }
        }
    }

    #[test]
    fn sigma_counts() {
        assert_eq!(sigma_class_count(&mi(&[5, 0, 0])).unwrap(), 1);
        assert_eq!(sigma_class_count(&mi(&[2, 1])).unwrap(), 3);
        assert_eq!(sigma_class_count(&mi(&[1, 1, 1])).unwrap(), 6);
        assert_eq!(sigma_class_count(&mi(&[10, 10])).unwrap(), 184_756);
        assert!(sigma_class_count(&mi(&[11, 10])).is_err());
    }

    #[test]
    fn phi_alpha_examples() {
        assert_eq!(phi_alpha(&g(&[2.0]), &mi(&[0]), &[1.3]).unwrap(), 1.0);
        assert!(phi_alpha(&g(&[1.0]), &mi(&[2]), &[1.0]).unwrap().abs() < 1e-15);
        assert!(matches!(
            phi_alpha(&g(&[1.0, 0.0]), &mi(&[0, 1]), &[0.0, 0.0]),
            Err(Error::OffSupport { index: 1 })
        ));
    }

    #[test]
    fn gram_matrix_is_identity() {
        let m = g(&[1.5, 0.4]);
        let idx = indices_up_to(2, 3);
        let k = idx.len();
        let gram = numerics::std_normal_expectation_vec(2, &QuadScheme::gauss_hermite(40), k * k, |xi, out| {
            let x = m.embed(xi);
            let vals: Vec<f64> = idx.iter().map(|a| phi_alpha(&m, a, &x).unwrap()).collect();
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] = vals[i] * vals[j];
                }
            }
        })
        .unwrap();
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * k + j] - target).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn projection_examples() {
        let s = QuadScheme::gauss_hermite(6);
        let one = project_polynomial(&g(&[1.0, 2.0]), |_| 1.0, 3, &s).unwrap();
        assert!((one.get(&mi(&[0, 0])) - 1.0).abs() < 1e-14);
        assert!(one.coeffs.iter().filter(|(a, _)| a.degree() > 0).all(|(_, c)| c.abs() < 1e-14));

        let lin = project_polynomial(&g(&[4.0]), |x| x[0], 3, &s).unwrap();
        assert!((lin.get(&mi(&[1])) - 2.0).abs() < 1e-14);

        let sq = project_polynomial(&g(&[1.0]), |x| x[0] * x[0], 3, &s).unwrap();
        assert!((sq.get(&mi(&[0])) - 1.0).abs() < 1e-14);
        assert!((sq.get(&mi(&[2])) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn projection_flags_non_polynomial_residual() {
        let err = project_polynomial(&g(&[1.0]), |x| x[0].powi(6), 3, &QuadScheme::gauss_hermite(8));
        assert!(matches!(err, Err(Error::SchemeTooCoarse { .. })));
    }

    #[test]
    fn projection_reconstructs_polynomials() {
        let m = g(&[0.7, 1.9]);
        let f = |x: &[f64]| 1.0 - 2.0 * x[0] + x[0] * x[1] * x[1] + 0.5 * x[1].powi(3);
        let p = project(&m, f, 3, &QuadScheme::gauss_hermite(5)).unwrap();
        assert!(p.residual < 1e-9);
        for x in [[0.3, -1.1], [2.0, 0.5]] {
            assert!((p.expansion.eval(&x) - f(&x)).abs() < 1e-11);
        }
    }

    #[test]
    fn parseval_for_polynomials() {
        let m = g(&[2.0, 0.5]);
        let f = |x: &[f64]| x[0].powi(2) * x[1] - 3.0 * x[1] + 0.25;
        let s = QuadScheme::gauss_hermite(5);
        let e = project_polynomial(&m, f, 3, &s).unwrap();
        let sq = m.expectation(&s, |x| f(x).powi(2)).unwrap().value;
        assert!((e.l2_norm().powi(2) - sq).abs() < 1e-9);
    }

    #[test]
    fn exp_coeff_examples() {
        let m = g(&[1.0]);
        let zero = exp_functional_coeffs(&m, &[0.0], 4).unwrap();
        assert_eq!(zero.get(&mi(&[0])), 1.0);
        assert!(zero.coeffs.iter().filter(|(a, _)| a.degree() > 0).all(|(_, c)| *c == 0.0));
        let e = exp_functional_coeffs(&m, &[1.0], 3).unwrap();
        let expected = [1.0, 1.0, 1.0 / 2f64.sqrt(), 1.0 / 6f64.sqrt()];
        for (n, v) in expected.iter().enumerate() {
            assert!((e.get(&mi(&[n as u32])) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_coeffs_match_quadrature_projection() {
        let m = g(&[1.3, 0.6]);
        let z = [0.4, -0.7];
        let closed = exp_functional_coeffs(&m, &z, 4).unwrap();
        let quad = project(&m, |x| m.exp_functional(&z, x), 4, &QuadScheme::gauss_hermite(40)).unwrap();
        assert!(closed.max_abs_diff(&quad.expansion) < 1e-9);
    }

    #[test]
    fn exp_coeff_norm_converges_to_sqrt_e() {
        let e = exp_functional_coeffs(&g(&[1.0]), &[1.0], 30).unwrap();
        assert!((e.l2_norm() - 0.5f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn exp_coeff_tail_is_monotone() {
        let m = g(&[1.0, 3.0]);
        let z = [0.8f64, 0.5];
        let total = (z[0] * z[0] + z[1] * z[1]).exp();
        let mut prev = f64::INFINITY;
        for n in 0..15 {
            let tail = total - exp_functional_coeffs(&m, &z, n).unwrap().l2_norm().powi(2);
            assert!(tail < prev && tail > -1e-12);
            prev = tail;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn monomial_examples() {
        let m2 = g(&[1.0, 1.0]);
        let e = monomial_coeffs(&m2, &[vec![1.0, 0.0]]).unwrap();
        assert!((e.get(&mi(&[1, 0])) - 1.0).abs() < 1e-15);
        assert!(e.get(&mi(&[0, 1])).abs() < 1e-15);
        let e2 = monomial_coeffs(&g(&[1.0]), &[vec![1.0], vec![1.0]]).unwrap();
        assert!((e2.get(&mi(&[2])) - 2f64.sqrt()).abs() < 1e-15);
        assert!(e2.coeffs.keys().all(|a| a.degree() == 2));
    }

    #[test]
    fn monomial_coeffs_match_projection() {
        let m = g(&[1.2, 0.5]);
        let hs = vec![vec![0.3, -1.0], vec![1.1, 0.4], vec![-0.6, 0.9]];
        let closed = monomial_coeffs(&m, &hs).unwrap();
        let f = |x: &[f64]| hs.iter().map(|h| m.white_noise(h, x)).product::<f64>();
        let quad = project_polynomial(&m, f, 3, &QuadScheme::gauss_hermite(6)).unwrap();
        assert!(closed.max_abs_diff(&quad.degree_slice(3)) < 1e-9);
    }

    #[test]
    fn empty_expansion() {
        let e = ChaosExpansion::zero(g(&[1.0]), 3);
        assert_eq!(e.eval(&[1.7]), 0.0);
        assert_eq!(e.l2_norm(), 0.0);
        let mut e = ChaosExpansion::zero(g(&[1.0]), 1);
        e.insert(mi(&[0]), 1.0).unwrap();
        e.insert(mi(&[1]), 1.0).unwrap();
        assert_eq!(e.eval(&[0.0]), 1.0);
        assert!(e.insert(mi(&[2]), 1.0).is_err());
    }

    #[test]
    fn entries_json() {
        let e = exp_functional_coeffs(&g(&[1.0, 2.0]), &[0.5, 0.1], 2).unwrap();
        let json = serde_json::to_string(&e.to_entries()).unwrap();
        assert!(json.starts_with(r#"[{"alpha":[0,0],"c":1.0}"#));
        let back: Vec<CoefficientEntry> = serde_json::from_str(&json).unwrap();
        let e2 = ChaosExpansion::from_entries(e.measure.clone(), 2, &back).unwrap();
        assert_eq!(e.coeffs.len(), e2.coeffs.len());
        assert!(e.max_abs_diff(&e2) < 1e-15);
    }
}
