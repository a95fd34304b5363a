//! Contractions between Cameron-Martin spaces and their second quantization.
//!
//! A [`CMContraction`] stores the matrix `M` of `T: H_mu -> H_nu` in the
//! orthonormal bases `sqrt(lambda_k) e_k`. On chaos coefficients `Gamma(T)`
//! acts degree by degree with
//!
//! ```text
//! <Gamma(T) Phi_alpha, Phi_beta> = perm(A) / sqrt(alpha! beta!),
//! A[l][m] = M[i^beta_l][i^alpha_m],
//! ```
//!
//! and pointwise as the Gaussian average
//! `Gamma(T) f(x) = E f(Q_mu^{1/2} (M^T eta + (I - M^T M)^{1/2} xi))`,
//! `eta = Q_nu^{-1/2} x`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chaos::{self, hermite_phi_table, ChaosExpansion, MultiIndex};
use crate::error::{Error, Result};
use crate::gaussian::SpectralGaussian;
use crate::linalg::{self, LinearMap};
use crate::numerics::{self, Estimate, QuadScheme};
use crate::permanent::{permanent, MAX_PERMANENT_SIZE};

/// Slack on `||T|| <= 1` for second-quantization operations.
pub const CONTRACTION_TOL: f64 = 1e-12;

/// Entries of a coordinate extension above this are treated as unbounded.
pub const UNBOUNDED_ENTRY: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CMContraction {
    mu: SpectralGaussian,
    nu: SpectralGaussian,
    m: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl CMContraction {
    /// `m` is `dim(nu) x dim(mu)`. Columns over the kernel of `mu` and rows
    /// over the kernel of `nu` are set to zero.
    pub fn new(mu: SpectralGaussian, nu: SpectralGaussian, m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: nu.dim(), found: m.nrows() });
        }
        if m.ncols() != mu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), found: m.ncols() });
        }
        let mut m = LinearMap::new(m)?.matrix;
        for k in 0..mu.dim() {
            if !mu.in_support(k) {
                m.column_mut(k).fill(0.0);
            }
        }
        for n in 0..nu.dim() {
            if !nu.in_support(n) {
                m.row_mut(n).fill(0.0);
            }
        }
        let singular_values = linalg::singular_values(&m);
        Ok(CMContraction { mu, nu, m, singular_values })
    }

    pub fn identity(mu: SpectralGaussian) -> Self {
        let d = mu.dim();
        Self::new(mu.clone(), mu, DMatrix::identity(d, d)).unwrap()
    }

    /// `c I` on `H_mu`.
    pub fn scalar(mu: SpectralGaussian, c: f64) -> Result<Self> {
        let d = mu.dim();
        Self::new(mu.clone(), mu, DMatrix::identity(d, d) * c)
    }

    pub fn zero(mu: SpectralGaussian, nu: SpectralGaussian) -> Self {
        let (r, c) = (nu.dim(), mu.dim());
        Self::new(mu, nu, DMatrix::zeros(r, c)).unwrap()
    }

    pub fn mu(&self) -> &SpectralGaussian {
        &self.mu
    }

    pub fn nu(&self) -> &SpectralGaussian {
        &self.nu
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn op_norm(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn adjoint(&self) -> Self {
        CMContraction {
            mu: self.nu.clone(),
            nu: self.mu.clone(),
            m: self.m.transpose(),
            singular_values: self.singular_values.clone(),
        }
    }

    /// `self o inner`, where `inner` maps into the source space of `self`.
    pub fn compose(&self, inner: &CMContraction) -> Result<Self> {
        same_measure(&self.mu, &inner.nu)?;
        Self::new(inner.mu.clone(), self.nu.clone(), &self.m * &inner.m)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.nu.clone(), &self.m * c)
    }

    fn require_contraction(&self) -> Result<()> {
        let norm = self.op_norm();
        if norm > 1.0 + CONTRACTION_TOL {
            return Err(Error::NotContraction { norm });
        }
        Ok(())
    }

    /// Canonical-coordinate matrix `Q_nu^{1/2} M Q_mu^{-1/2} (I - P_mu)`.
    pub fn x_extension(&self) -> Result<LinearMap> {
        let ln = self.nu.eigenvalues();
        let lm = self.mu.eigenvalues();
        let mut out = DMatrix::zeros(self.nu.dim(), self.mu.dim());
        for &k in self.mu.support() {
            for n in 0..self.nu.dim() {
                let v = self.m[(n, k)] * (ln[n] / lm[k]).sqrt();
                if !v.is_finite() || v.abs() > UNBOUNDED_ENTRY {
                    return Err(Error::Unbounded { entry: v });
                }
                out[(n, k)] = v;
            }
        }
        LinearMap::new(out)
    }

    /// `<Gamma(T) Phi_alpha^mu, Phi_beta^nu>`.
    pub fn gamma_matrix_element(&self, alpha: &MultiIndex, beta: &MultiIndex) -> Result<f64> {
        if alpha.dim() != self.mu.dim() {
            return Err(Error::DimensionMismatch { expected: self.mu.dim(), found: alpha.dim() });
        }
        if beta.dim() != self.nu.dim() {
            return Err(Error::DimensionMismatch { expected: self.nu.dim(), found: beta.dim() });
        }
        let n = alpha.degree();
        if beta.degree() != n {
            return Ok(0.0);
        }
        if n > MAX_PERMANENT_SIZE {
            return Err(Error::SizeTooLarge { size: n, max: MAX_PERMANENT_SIZE });
        }
        Ok(self.element_unchecked(&alpha.positions(), &beta.positions(), alpha, beta))
    }

    fn element_unchecked(&self, pa: &[usize], pb: &[usize], alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
        let n = pa.len();
        let a = DMatrix::from_fn(n, n, |l, m| self.m[(pb[l], pa[m])]);
        permanent(&a).expect("size checked") / (alpha.factorial() * beta.factorial()).sqrt()
    }

    /// The degree-`n` block: rows over `nu`-indices, columns over
    /// `mu`-indices, both restricted to the supports. Uses permanents for
    /// `n <= 12` and [`symmetric_power_block`](Self::symmetric_power_block)
    /// above.
    pub fn gamma_block(&self, n: usize) -> Result<GammaBlock> {
        if n > MAX_PERMANENT_SIZE {
            return self.symmetric_power_block(n);
        }
        let rows = chaos::support_indices_of_degree(&self.nu, n);
        let cols = chaos::support_indices_of_degree(&self.mu, n);
        let col_pos: Vec<Vec<usize>> = cols.iter().map(|a| a.positions()).collect();
        let entries: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|beta| {
                let pb = beta.positions();
                cols.iter()
                    .zip(&col_pos)
                    .map(|(alpha, pa)| self.element_unchecked(pa, &pb, alpha, beta))
                    .collect()
            })
            .collect();
        let matrix = DMatrix::from_fn(rows.len(), cols.len(), |i, j| entries[i][j]);
        Ok(GammaBlock { rows, cols, matrix })
    }

    /// The degree-`n` block from the expansion of `prod_j ((M z)_j)^{beta_j}`,
    /// whose `z^alpha` coefficient equals `perm(A) / alpha!`. No size limit.
    pub fn symmetric_power_block(&self, n: usize) -> Result<GammaBlock> {
        let rows = chaos::support_indices_of_degree(&self.nu, n);
        let cols = chaos::support_indices_of_degree(&self.mu, n);
        let supp_mu = self.mu.support().to_vec();
        let m = supp_mu.len();
        // reduced indices per degree and the position of alpha + e_j one degree up
        let levels: Vec<Vec<MultiIndex>> = (0..=n).map(|k| chaos::enumerate_indices(m, k)).collect();
        let lookups: Vec<HashMap<MultiIndex, usize>> = levels.iter().map(|l| chaos::index_lookup(l)).collect();
        let succ: Vec<Vec<Vec<usize>>> = (0..n)
            .map(|k| {
                levels[k]
                    .iter()
                    .map(|a| {
                        (0..m)
                            .map(|j| {
                                let mut b = a.clone();
                                b.0[j] += 1;
                                lookups[k + 1][&b]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let col_scale: Vec<f64> = levels[n].iter().map(|a| a.factorial().sqrt()).collect();
        let entries: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|beta| {
                let mut poly = vec![1.0];
                for (k, &row) in beta.positions().iter().enumerate() {
                    let lin: Vec<f64> = supp_mu.iter().map(|&c| self.m[(row, c)]).collect();
                    let mut next = vec![0.0; levels[k + 1].len()];
                    for (i, &v) in poly.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        for (j, &l) in lin.iter().enumerate() {
                            next[succ[k][i][j]] += v * l;
                        }
                    }
                    poly = next;
                }
                let bscale = beta.factorial().sqrt();
                poly.iter().zip(&col_scale).map(|(c, s)| c * s / bscale).collect()
            })
            .collect();
        // reduced enumeration order coincides with the lifted one
        let matrix = DMatrix::from_fn(rows.len(), cols.len(), |i, j| entries[i][j]);
        Ok(GammaBlock { rows, cols, matrix })
    }

    /// Applies `Gamma(T)` to a chaos expansion over `mu`; the result lives on
    /// `nu` with the same degree cap.
    pub fn gamma_series_apply(&self, e: &ChaosExpansion) -> Result<ChaosExpansion> {
        self.require_contraction()?;
        same_measure(&self.mu, &e.measure)?;
        if e.max_degree > MAX_PERMANENT_SIZE {
            return Err(Error::DegreeTooLarge { degree: e.max_degree, max: MAX_PERMANENT_SIZE });
        }
        let mut out = ChaosExpansion::zero(self.nu.clone(), e.max_degree);
        for n in 0..=e.max_degree {
            let input: Vec<(&MultiIndex, f64, Vec<usize>)> = e
                .coeffs
                .iter()
                .filter(|(a, c)| a.degree() == n && **c != 0.0)
                .map(|(a, c)| (a, *c, a.positions()))
                .collect();
            if input.is_empty() {
                continue;
            }
            let rows = chaos::support_indices_of_degree(&self.nu, n);
            let values: Vec<f64> = rows
                .par_iter()
                .map(|beta| {
                    let pb = beta.positions();
                    input.iter().map(|(a, c, pa)| c * self.element_unchecked(pa, &pb, a, beta)).sum()
                })
                .collect();
            for (beta, v) in rows.into_iter().zip(values) {
                out.coeffs.insert(beta, v);
            }
        }
        Ok(out)
    }

    /// Pointwise integral form of `Gamma(T) f` at `x`.
    pub fn gamma_integral_apply<F>(&self, f: F, x: &[f64], scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.integral_kernel()?.apply(&f, x, scheme)
    }

    fn integral_kernel(&self) -> Result<IntegralKernel> {
        self.require_contraction()?;
        let supp = self.mu.support().to_vec();
        let mt = self.m.transpose();
        let mts = DMatrix::from_fn(supp.len(), self.nu.dim(), |i, j| mt[(supp[i], j)]);
        let g = DMatrix::identity(supp.len(), supp.len()) - &mts * mts.transpose();
        let r = linalg::psd_sqrt(&g).map_err(|_| Error::NotContraction { norm: self.op_norm() })?;
        Ok(IntegralKernel { mu: self.mu.clone(), nu: self.nu.clone(), mts, r })
    }

    /// `B = (M^T M)^{1/2}` and a partial isometry `C` with `C B = M`.
    pub fn polar_factors(&self) -> Result<PolarFactors> {
        let svd = self.m.clone().svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
        let dm = self.mu.dim();
        let mut b = DMatrix::zeros(dm, dm);
        let mut c = DMatrix::zeros(self.nu.dim(), dm);
        for (k, &s) in svd.singular_values.iter().enumerate() {
            let v = vt.row(k).transpose();
            b += &v * v.transpose() * s;
            if s > linalg::RANK_TOL * smax && s > 0.0 {
                c += u.column(k) * v.transpose();
            }
        }
        Ok(PolarFactors {
            b: CMContraction::new(self.mu.clone(), self.mu.clone(), b)?,
            c: CMContraction::new(self.mu.clone(), self.nu.clone(), c)?,
        })
    }

    /// `1 + (p - 1) / ||T||^2`, infinite for `T = 0`.
    pub fn q0_threshold(&self, p: f64) -> Result<f64> {
        q0_from_norm(self.op_norm(), p)
    }

    /// `||Gamma(T) f||_{L^q(nu)}`, nesting the integral form inside the
    /// outer expectation; both use `scheme`.
    pub fn lq_norm_gamma<F>(&self, f: F, q: f64, scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let kernel = self.integral_kernel()?;
        let inner = match *scheme {
            QuadScheme::MonteCarlo { samples, seed, .. } => {
                QuadScheme::monte_carlo(samples, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))
            }
            other => other,
        };
        let failure = std::sync::Mutex::new(None);
        let est = self.nu.lq_norm(
            |x| match kernel.apply(&f, x, &inner) {
                Ok(e) => e.value,
                Err(err) => {
                    failure.lock().unwrap().get_or_insert(err);
                    0.0
                }
            },
            q,
            scheme,
        )?;
        if let Some(err) = failure.into_inner().unwrap() {
            return Err(err);
        }
        Ok(est)
    }

    /// The witness `f(x) = exp(alpha W_c(x)^2)`, `c = Q_mu^{-1/2} h`, and
    /// its closed-form image under `Gamma(T)`.
    pub fn hyper_witness(&self, p: f64, q: f64, h: &[f64], alpha: f64) -> Result<HyperWitness> {
        self.require_contraction()?;
        if !(p > 1.0 && q >= 1.0 && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("need p > 1, q >= 1, alpha >= 0; got {p}, {q}, {alpha}")));
        }
        let c = DVector::from_vec(self.mu.pinv_sqrt_apply(h)?);
        let h_norm2 = c.norm_squared();
        if 2.0 * alpha * p * h_norm2 >= 1.0 {
            return Err(Error::PreconditionViolated(format!(
                "witness not in L^p: 2 alpha p |h|^2 = {} >= 1",
                2.0 * alpha * p * h_norm2
            )));
        }
        let mc = &self.m * &c;
        let tau2 = mc.norm_squared();
        let sigma2 = (h_norm2 - tau2).max(0.0);
        Ok(HyperWitness {
            nu: self.nu.clone(),
            p,
            q,
            alpha,
            h_norm2,
            tau2,
            sigma2,
            image_direction: mc.iter().copied().collect(),
        })
    }

    /// For `q > q0`, a unit `h` along the top singular direction and the
    /// window `[1/(2(p + eps)), 1/(2p))` of exponents whose witnesses have
    /// images outside `L^q`.
    pub fn witness_window(&self, p: f64, q: f64) -> Result<WitnessWindow> {
        self.require_contraction()?;
        let q0 = self.q0_threshold(p)?;
        if !(q > q0) {
            return Err(Error::PreconditionViolated(format!("window needs q > q0 = {q0}, got q = {q}")));
        }
        let s1 = self.op_norm();
        let eps = 0.5 * ((q - 1.0) * s1 * s1 - (p - 1.0));
        let svd = self.m.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let top = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (k, &s)| if s > acc.1 { (k, s) } else { acc })
            .0;
        let h = self.mu.sqrt_apply(&vt.row(top).iter().copied().collect::<Vec<_>>());
        Ok(WitnessWindow { h, eps, alpha_lo: 1.0 / (2.0 * (p + eps)), alpha_hi: 1.0 / (2.0 * p) })
    }

    /// Infimum over admissible `alpha` of the exponent from which the
    /// top-direction witness leaves `L^q`.
    pub fn witness_diverges_at(&self, p: f64) -> Result<f64> {
        self.require_contraction()?;
        let s1 = self.op_norm();
        if s1 == 0.0 {
            return Ok(f64::INFINITY);
        }
        // |h| = 1, |Th| = s1, alpha -> 1 / (2p)
        let alpha = 1.0 / (2.0 * p);
        Ok(1.0 + (1.0 - 2.0 * alpha) / (2.0 * alpha * s1 * s1))
    }

    /// Hilbert-Schmidt norm of `Gamma(T)`: partial degree sum through `n_max`,
    /// the closed form `prod (1 - s_k^2)^{-1/2}`, the form `prod 1/(1 - t_k^2)`
    /// in the eigenvalues `t_k` of `T*T`, and a bound on the omitted tail.
    pub fn hs_norm_gamma(&self, n_max: usize) -> Result<HsNorm> {
        let s1 = self.op_norm();
        if s1 >= 1.0 - CONTRACTION_TOL {
            return Err(Error::NotStrictContraction { norm: s1 });
        }
        let mut sum = 0.0;
        for n in 0..=n_max {
            let block = self.symmetric_power_block(n)?;
            sum += block.matrix.iter().map(|v| v * v).sum::<f64>();
        }
        let closed_form = self.singular_values.iter().map(|s| (1.0 - s * s).powf(-0.5)).product();
        let product_form = self.singular_values.iter().map(|s| 1.0 / (1.0 - s.powi(4))).product();
        Ok(HsNorm { partial: sum.sqrt(), closed_form, product_form, tail_bound: hs_tail_bound(s1, self.mu.support().len(), n_max) })
    }

    /// Operator norm of the degree-`n` block by power iteration on `B^T B`.
    pub fn block_norm_power(&self, n: usize) -> Result<f64> {
        let block = self.gamma_block(n)?;
        let b = &block.matrix;
        if b.ncols() == 0 || b.nrows() == 0 {
            return Ok(0.0);
        }
        let btb = b.transpose() * b;
        let mut rng = ChaCha8Rng::seed_from_u64(0xb10c + n as u64);
        let mut v = DVector::from_fn(btb.ncols(), |_, _| rng.random_range(0.5..1.5));
        v /= v.norm();
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let w = &btb * &v;
            let next = w.norm();
            if next == 0.0 {
                return Ok(0.0);
            }
            v = w / next;
            if (next - lambda).abs() <= 1e-15 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        Ok(lambda.sqrt())
    }

    fn require_self_adjoint(&self) -> Result<()> {
        same_measure(&self.mu, &self.nu)?;
        let asym = linalg::max_abs_diff(&self.m, &self.m.transpose());
        if asym > SYMMETRY_TOL * (1.0 + self.op_norm()) {
            return Err(Error::NotSelfAdjoint { asym });
        }
        Ok(())
    }

    /// Eigenvalues `t_j` (descending) and orthonormal eigenvectors of a
    /// self-adjoint `T`.
    pub fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.require_self_adjoint()?;
        Ok(linalg::sym_eigen_sorted(&self.m))
    }

    /// `t_alpha = prod t_j^{alpha_j}` with `0^0 = 1`.
    pub fn gamma_eigen(&self, alpha: &MultiIndex) -> Result<f64> {
        let (t, _) = self.eigen()?;
        if alpha.dim() != t.len() {
            return Err(Error::DimensionMismatch { expected: t.len(), found: alpha.dim() });
        }
        Ok(t.iter().zip(&alpha.0).map(|(tj, &a)| if a == 0 { 1.0 } else { tj.powi(a as i32) }).product())
    }

    /// `psi_alpha(x) = sqrt(alpha!) prod_j phi_{alpha_j}(<v_j, Q^{-1/2} x>)`.
    pub fn eigenfunction(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
        let (_, v) = self.eigen()?;
        let eta = DVector::from_vec(self.mu.standardize_full(x));
        let y = v.transpose() * eta;
        let mut out = alpha.factorial().sqrt();
        for (j, &a) in alpha.0.iter().enumerate() {
            out *= *hermite_phi_table(a as usize, y[j]).last().unwrap();
        }
        Ok(out)
    }

    /// Chaos coefficients of `psi_alpha`, which is `Gamma(V) Phi_alpha` for
    /// the orthogonal eigenvector matrix `V`.
    pub fn eigenfunction_expansion(&self, alpha: &MultiIndex) -> Result<ChaosExpansion> {
        let (_, v) = self.eigen()?;
        let rot = CMContraction::new(self.mu.clone(), self.mu.clone(), v)?;
        let mut e = ChaosExpansion::zero(self.mu.clone(), alpha.degree());
        e.insert(alpha.clone(), 1.0)?;
        rot.gamma_series_apply(&e)
    }
}

fn same_measure(a: &SpectralGaussian, b: &SpectralGaussian) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let scale = a.eigenvalues().iter().chain(b.eigenvalues()).fold(0.0_f64, |m, v| m.max(*v));
    let close = a.eigenvalues().iter().zip(b.eigenvalues()).all(|(x, y)| (x - y).abs() <= 1e-12 * scale);
    if !close {
        return Err(Error::InvalidArgument("measures do not match".into()));
    }
    Ok(())
}

/// `1 + (p - 1) / norm^2`.
pub fn q0_from_norm(norm: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("hypercontractivity threshold needs p > 1, got {p}")));
    }
    if norm == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 + (p - 1.0) / (norm * norm))
}

/// `sum_{n > n_max} s1^{2n} C(n + d - 1, d - 1)`.
pub fn hs_tail_bound(s1: f64, d: usize, n_max: usize) -> f64 {
    if d == 0 || s1 == 0.0 {
        return 0.0;
    }
    let r = s1 * s1;
    // term_n = r^n C(n + d - 1, n); start at n = 0 and step up
    let mut term = 1.0;
    let mut total = 0.0;
    let mut n = 0usize;
    loop {
        if n > n_max {
            total += term;
            if term <= 1e-18 * total && (n as f64) * (1.0 - r) > d as f64 {
                break;
            }
        }
        term *= r * (n + d) as f64 / (n + 1) as f64;
        n += 1;
        if n > 10_000_000 {
            break;
        }
    }
    total
}

struct IntegralKernel {
    mu: SpectralGaussian,
    nu: SpectralGaussian,
    /// `M^T` restricted to the support rows of `mu`.
    mts: DMatrix<f64>,
    /// `(I - M^T M)^{1/2}` on the support of `mu`.
    r: DMatrix<f64>,
}

impl IntegralKernel {
    fn apply<F>(&self, f: &F, x: &[f64], scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if x.len() != self.nu.dim() {
            return Err(Error::DimensionMismatch { expected: self.nu.dim(), found: x.len() });
        }
        let eta = DVector::from_vec(self.nu.standardize_full(x));
        let mean = &self.mts * eta;
        let m = mean.len();
        numerics::std_normal_expectation(m, scheme, |xi| {
            let mut y = mean.clone();
            for (i, yi) in y.iter_mut().enumerate() {
                for (j, &z) in xi.iter().enumerate() {
                    *yi += self.r[(i, j)] * z;
                }
            }
            f(&self.mu.embed(y.as_slice()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaBlock {
    pub rows: Vec<MultiIndex>,
    pub cols: Vec<MultiIndex>,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarFactors {
    pub b: CMContraction,
    pub c: CMContraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HsNorm {
    pub partial: f64,
    pub closed_form: f64,
    pub product_form: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessWindow {
    pub h: Vec<f64>,
    pub eps: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

/// `f(x) = exp(alpha W_c(x)^2)` and `Gamma(T) f(x) = c0 exp(beta a(x)^2)`
/// with `c0 = (1 - 2 alpha sigma^2)^{-1/2}`, `beta = alpha / (1 - 2 alpha sigma^2)`,
/// `a(x) = <M c, Q_nu^{-1/2} x>`, `sigma^2 = |(I - M^T M)^{1/2} c|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperWitness {
    nu: SpectralGaussian,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    /// `|h|_{H_mu}^2`.
    pub h_norm2: f64,
    /// `|T h|_{H_nu}^2`.
    pub tau2: f64,
    pub sigma2: f64,
    image_direction: Vec<f64>,
}

impl HyperWitness {
    fn prefactor(&self) -> f64 {
        (1.0 - 2.0 * self.alpha * self.sigma2).powf(-0.5)
    }

    fn beta(&self) -> f64 {
        self.alpha / (1.0 - 2.0 * self.alpha * self.sigma2)
    }

    pub fn gamma_image(&self, x: &[f64]) -> f64 {
        let a = self.nu.white_noise(&self.image_direction, x);
        self.prefactor() * (self.beta() * a * a).exp()
    }

    /// `Gamma(T) f` leaves `L^q(nu)` iff `2 alpha |Th|^2 (q - 1) >= 1 - 2 alpha |h|^2`.
    pub fn lq_finite(&self) -> bool {
        2.0 * self.alpha * self.tau2 * (self.q - 1.0) < 1.0 - 2.0 * self.alpha * self.h_norm2
    }

    /// `||f||_{L^p(mu)} = (1 - 2 alpha p |h|^2)^{-1/(2p)}`.
    pub fn f_lp_norm(&self) -> f64 {
        (1.0 - 2.0 * self.alpha * self.p * self.h_norm2).powf(-0.5 / self.p)
    }

    /// `||Gamma(T) f||_{L^q(nu)}` in closed form; infinite when divergent.
    pub fn image_lq_norm(&self) -> f64 {
        if !self.lq_finite() {
            return f64::INFINITY;
        }
        let q = self.q;
        self.prefactor() * (1.0 - 2.0 * q * self.beta() * self.tau2).powf(-0.5 / q)
    }

    /// Monte Carlo estimate of `||Gamma(T) f||_{L^q(nu)}` from draws of `nu`.
    pub fn image_lq_norm_mc(&self, samples: usize, seed: u64) -> Result<Estimate> {
        self.nu.lq_norm(|x| self.gamma_image(x), self.q, &QuadScheme::monte_carlo(samples, seed))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionRepr {
    mu: SpectralGaussian,
    nu: SpectralGaussian,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
}

impl Serialize for CMContraction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = (0..self.m.nrows()).map(|i| self.m.row(i).iter().copied().collect()).collect();
        ContractionRepr { mu: self.mu.clone(), nu: self.nu.clone(), m: rows }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMContraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ContractionRepr::deserialize(d)?;
        let cols = repr.m.first().map_or(0, |r| r.len());
        if repr.m.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged matrix M"));
        }
        let m = DMatrix::from_fn(repr.m.len(), cols, |i, j| repr.m[i][j]);
        CMContraction::new(repr.mu, repr.nu, m).map_err(serde::de::Error::custom)
    }
}

/// Classical Ornstein-Uhlenbeck semigroup
/// `R_t f(x) = E f(e^{-t} x + sqrt(1 - e^{-2t}) y)`, `y ~ mu`.
pub fn mehler_classical<F>(mu: &SpectralGaussian, f: F, t: f64, x: &[f64], scheme: &QuadScheme) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("semigroup time must be >= 0, got {t}")));
    }
    let c = (-t).exp();
    let s = (1.0 - c * c).sqrt();
    mu.expectation(scheme, |y| {
        let z: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| c * xi + s * yi).collect();
        f(&z)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{exp_functional_coeffs, project_polynomial};
    use crate::permanent::oracle::naive_permanent;
    use crate::poly::Polynomial;

    fn g(l: &[f64]) -> SpectralGaussian {
        SpectralGaussian::new(l.to_vec()).unwrap()
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    fn random_contraction(rng: &mut ChaCha8Rng, mu: &SpectralGaussian, nu: &SpectralGaussian, norm: f64) -> CMContraction {
        let m = DMatrix::from_fn(nu.dim(), mu.dim(), |_, _| rng.random_range(-1.0..1.0));
        let n = linalg::op_norm(&m);
        CMContraction::new(mu.clone(), nu.clone(), m * (norm / n)).unwrap()
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(CMContraction::identity(g(&[1.0, 2.0])).op_norm(), 1.0);
        let t = CMContraction::new(g(&[1.0, 1.0]), g(&[1.0, 1.0]), DMatrix::from_diagonal_element(2, 2, 1.0) * 0.5).unwrap();
        assert!((t.op_norm() - 0.5).abs() < 1e-15);
        let t = CMContraction::new(
            g(&[1.0, 1.0]),
            g(&[1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]),
        )
        .unwrap();
        assert!((t.op_norm() - 0.5).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let t = CMContraction::new(g(&[1.0, 2.0, 3.0]), g(&[1.0, 1.0, 0.5]), m.clone()).unwrap();
        let (ev, _) = linalg::sym_eigen_sorted(&(m.transpose() * &m));
        assert!((t.op_norm().powi(2) - ev[0]).abs() < 1e-10);
    }

    #[test]
    fn kernel_rows_and_columns_are_zeroed() {
        let t = CMContraction::new(g(&[1.0, 0.0]), g(&[0.0, 1.0]), DMatrix::from_element(2, 2, 0.4)).unwrap();
        assert_eq!(t.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.4, 0.0]));
    }

    #[test]
    fn x_extension_examples() {
        let ext = CMContraction::identity(g(&[1.0, 1.0])).x_extension().unwrap();
        assert_eq!(ext.matrix, DMatrix::identity(2, 2));
        let t = CMContraction::new(g(&[4.0]), g(&[1.0]), DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((t.x_extension().unwrap().matrix[(0, 0)] - 0.25).abs() < 1e-15);
        let tiny = CMContraction::new(
            SpectralGaussian::with_kernel_tol(vec![1.0, 1e-30], 1e-40).unwrap(),
            g(&[1.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(matches!(tiny.x_extension(), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn x_extension_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b, c) = (g(&[1.0, 0.5, 2.0]), g(&[0.3, 1.2]), g(&[2.0, 1.0, 0.7]));
        for _ in 0..10 {
            let t = random_contraction(&mut rng, &a, &b, 0.9);
            let s = random_contraction(&mut rng, &b, &c, 0.8);
            let st = s.compose(&t).unwrap();
            let lhs = st.x_extension().unwrap().matrix;
            let rhs = s.x_extension().unwrap().matrix * t.x_extension().unwrap().matrix;
            assert!(linalg::max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn matrix_element_examples() {
        let t = CMContraction::new(g(&[1.0, 1.0]), g(&[1.0, 1.0]), DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4])).unwrap();
        assert!((t.gamma_matrix_element(&mi(&[1, 0]), &mi(&[1, 0])).unwrap() - 0.3).abs() < 1e-15);
        let d = CMContraction::new(g(&[1.0]), g(&[1.0]), DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((d.gamma_matrix_element(&mi(&[2]), &mi(&[2])).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(t.gamma_matrix_element(&mi(&[1, 0]), &mi(&[1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn matrix_element_matches_integral_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mu, nu) = (g(&[1.5, 0.6]), g(&[0.8, 2.0]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.85);
        let gh = QuadScheme::gauss_hermite(12);
        for alpha in chaos::enumerate_indices(2, 2) {
            for beta in chaos::enumerate_indices(2, 2) {
                let series = t.gamma_matrix_element(&alpha, &beta).unwrap();
                let kernel = t.integral_kernel().unwrap();
                let quad = nu
                    .expectation(&gh, |x| {
                        let img = kernel.apply(&|y: &[f64]| chaos::phi_alpha(&mu, &alpha, y).unwrap(), x, &gh).unwrap();
                        img.value * chaos::phi_alpha(&nu, &beta, x).unwrap()
                    })
                    .unwrap()
                    .value;
                assert!((series - quad).abs() < 1e-8, "{alpha:?} {beta:?}");
            }
        }
    }

    #[test]
    fn blocks_agree_across_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mu, nu) = (g(&[1.0, 0.5, 2.0]), g(&[0.3, 1.2]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.9);
        for n in 0..6 {
            let a = t.gamma_block(n).unwrap();
            let b = t.symmetric_power_block(n).unwrap();
            assert_eq!(a.rows, b.rows);
            assert_eq!(a.cols, b.cols);
            assert!(linalg::max_abs_diff(&a.matrix, &b.matrix) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn element_uses_repeated_rows_and_columns() {
        // direct n! sum as an independent check of the normalization
        let m = DMatrix::from_row_slice(2, 2, &[0.2, -0.5, 0.7, 0.1]);
        let t = CMContraction::new(g(&[1.0, 1.0]), g(&[1.0, 1.0]), m.clone()).unwrap();
        let (alpha, beta) = (mi(&[2, 1]), mi(&[1, 2]));
        let (pa, pb) = (alpha.positions(), beta.positions());
        let a = DMatrix::from_fn(3, 3, |l, k| m[(pb[l], pa[k])]);
        let expected = naive_permanent(&a) / (alpha.factorial() * beta.factorial()).sqrt();
        assert!((t.gamma_matrix_element(&alpha, &beta).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn series_identity_zero_and_exponential() {
        let mu = g(&[1.0, 2.0]);
        let e = exp_functional_coeffs(&mu, &[0.3, -0.4], 4).unwrap();
        let id = CMContraction::identity(mu.clone()).gamma_series_apply(&e).unwrap();
        assert!(id.max_abs_diff(&e) < 1e-15);
        let z = CMContraction::zero(mu.clone(), g(&[3.0])).gamma_series_apply(&e).unwrap();
        assert!((z.get(&mi(&[0])) - 1.0).abs() < 1e-15);
        assert!(z.coeffs.iter().filter(|(a, _)| a.degree() > 0).all(|(_, c)| *c == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nu = g(&[0.5, 1.0, 4.0]);
        let t = random_contraction(&mut rng, &mu, &nu, 0.95);
        let img = t.gamma_series_apply(&e).unwrap();
        let mz = t.matrix() * DVector::from_vec(vec![0.3, -0.4]);
        let expected = exp_functional_coeffs(&nu, mz.as_slice(), 4).unwrap();
        assert!(img.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn series_rejects_non_contraction() {
        let mu = g(&[1.0]);
        let t = CMContraction::scalar(mu.clone(), 1.5).unwrap();
        let e = ChaosExpansion::constant(mu, 2, 1.0);
        assert!(matches!(t.gamma_series_apply(&e), Err(Error::NotContraction { .. })));
    }

    #[test]
    fn integral_examples() {
        let mu = g(&[1.0, 3.0]);
        let gh = QuadScheme::gauss_hermite(8);
        let f = |x: &[f64]| x[0] * x[0] * x[1] + x[1].powi(3);
        let v = CMContraction::identity(mu.clone()).gamma_integral_apply(f, &[0.7, -1.2], &gh).unwrap();
        assert!((v.value - f(&[0.7, -1.2])).abs() < 1e-12);
        let t = CMContraction::scalar(g(&[1.0]), 0.6).unwrap();
        let v = t.gamma_integral_apply(|x| x[0], &[2.0], &gh).unwrap();
        assert!((v.value - 1.2).abs() < 1e-14);
    }

    #[test]
    fn series_matches_integral_on_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mu, nu) = (g(&[1.3, 0.4, 2.2]), g(&[0.9, 1.7]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.9);
        let p = Polynomial::random(&mut rng, 3, 4);
        let gh = QuadScheme::gauss_hermite(6);
        let e = project_polynomial(&mu, |x| p.eval(x), 4, &gh).unwrap();
        let img = t.gamma_series_apply(&e).unwrap();
        for x in [[0.3, -0.8], [1.9, 0.2]] {
            let direct = t.gamma_integral_apply(|y| p.eval(y), &x, &gh).unwrap().value;
            assert!((img.eval(&x) - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn adjoint_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mu, nu) = (g(&[1.0, 0.5]), g(&[2.0, 0.7, 1.1]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.8);
        let gh = QuadScheme::gauss_hermite(7);
        let f = Polynomial::random(&mut rng, 2, 5);
        let h = Polynomial::random(&mut rng, 3, 5);
        let fe = project_polynomial(&mu, |x| f.eval(x), 5, &gh).unwrap();
        let he = project_polynomial(&nu, |x| h.eval(x), 5, &gh).unwrap();
        let lhs = t.gamma_series_apply(&fe).unwrap().dot(&he);
        let rhs = fe.dot(&t.adjoint().gamma_series_apply(&he).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn composition_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, b, c) = (g(&[1.0, 0.5]), g(&[2.0, 0.7, 1.1]), g(&[0.4, 0.9]));
        let t = random_contraction(&mut rng, &a, &b, 0.9);
        let s = random_contraction(&mut rng, &b, &c, 0.7);
        let e = project_polynomial(&a, |x| Polynomial::random(&mut ChaCha8Rng::seed_from_u64(1), 2, 4).eval(x), 4, &QuadScheme::gauss_hermite(6)).unwrap();
        let lhs = s.compose(&t).unwrap().gamma_series_apply(&e).unwrap();
        let rhs = s.gamma_series_apply(&t.gamma_series_apply(&e).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn degreewise_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_contraction(&mut rng, &g(&[1.0, 2.0]), &g(&[1.0, 0.5, 3.0]), 0.8);
        for n in 0..=5 {
            let b = t.block_norm_power(n).unwrap();
            assert!((b - 0.8f64.powi(n as i32)).abs() < 1e-6, "n={n} {b}");
        }
    }

    #[test]
    fn mass_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (mu, nu) = (g(&[1.0, 2.0]), g(&[0.5, 3.0]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.9);
        let p = Polynomial::random(&mut rng, 2, 4);
        let gh = QuadScheme::gauss_hermite(6);
        let lhs = nu
            .expectation(&gh, |x| t.gamma_integral_apply(|y| p.eval(y), x, &gh).unwrap().value)
            .unwrap()
            .value;
        let rhs = mu.expectation(&gh, |x| p.eval(x)).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn mehler_consistency() {
        let mu = g(&[1.0, 0.4]);
        let gh = QuadScheme::gauss_hermite(8);
        let f = |x: &[f64]| x[0].powi(3) - x[0] * x[1] + 2.0;
        let t: f64 = 0.7;
        let gamma = CMContraction::scalar(mu.clone(), (-t).exp()).unwrap();
        for x in [[0.5, -1.0], [2.0, 0.1]] {
            let a = gamma.gamma_integral_apply(f, &x, &gh).unwrap().value;
            let b = mehler_classical(&mu, f, t, &x, &gh).unwrap().value;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mu = g(&[1.0, 0.6]);
        let t = random_contraction(&mut rng, &mu, &g(&[2.0, 1.0]), 0.9);
        let p = Polynomial::random(&mut rng, 2, 3);
        let gh = QuadScheme::gauss_hermite(10);
        for q in [1.0, 2.0, 4.0] {
            let lhs = t.lq_norm_gamma(|x| p.eval(x), q, &gh).unwrap().value;
            let rhs = mu.lq_norm(|x| p.eval(x), q, &gh).unwrap().value;
            assert!(lhs <= rhs * (1.0 + 1e-8), "q={q}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn lq_norm_examples() {
        let mu = g(&[1.0, 2.0]);
        let gh = QuadScheme::gauss_hermite(6);
        let t = CMContraction::scalar(mu.clone(), 0.5).unwrap();
        assert!((t.lq_norm_gamma(|_| 1.0, 3.0, &gh).unwrap().value - 1.0).abs() < 1e-14);
        let z = CMContraction::zero(mu.clone(), mu.clone());
        let f = |x: &[f64]| x[0] * x[0] - 3.0;
        assert!((z.lq_norm_gamma(f, 2.0, &gh).unwrap().value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn polar_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let t = CMContraction::new(g(&[1.0, 1.0]), g(&[1.0, 1.0]), r.clone()).unwrap();
        let pf = t.polar_factors().unwrap();
        assert!(linalg::max_abs_diff(pf.b.matrix(), &DMatrix::identity(2, 2)) < 1e-14);
        assert!(linalg::max_abs_diff(pf.c.matrix(), &r) < 1e-14);

        let t = CMContraction::new(g(&[1.0, 1.0]), g(&[1.0, 1.0]), DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).unwrap();
        let pf = t.polar_factors().unwrap();
        assert!(linalg::max_abs_diff(pf.b.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])) < 1e-14);
        assert!(linalg::max_abs_diff(pf.c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let t = random_contraction(&mut rng, &g(&[1.0, 2.0, 0.5]), &g(&[1.0, 3.0]), 0.7);
        let pf = t.polar_factors().unwrap();
        assert!(linalg::max_abs_diff(&(pf.c.matrix() * pf.b.matrix()), t.matrix()) < 1e-10);
        assert!(pf.c.singular_values().iter().all(|s| s.abs() < 1e-10 || (s - 1.0).abs() < 1e-10));
    }

    #[test]
    fn q0_examples() {
        let mu = g(&[1.0]);
        assert_eq!(CMContraction::identity(mu.clone()).q0_threshold(2.0).unwrap(), 2.0);
        assert!((CMContraction::scalar(mu.clone(), 0.5).unwrap().q0_threshold(2.0).unwrap() - 5.0).abs() < 1e-14);
        let t: f64 = 0.4;
        let q0 = CMContraction::scalar(mu.clone(), (-t).exp()).unwrap().q0_threshold(3.0).unwrap();
        assert!((q0 - (1.0 + 2.0 * (2.0 * t).exp())).abs() < 1e-12);
        assert_eq!(CMContraction::zero(mu.clone(), mu).q0_threshold(2.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn witness_examples() {
        let mu = g(&[1.0]);
        let t = CMContraction::scalar(mu.clone(), 0.5).unwrap();
        let tiny = t.hyper_witness(2.0, 4.0, &[1.0], 1e-12).unwrap();
        assert!(tiny.lq_finite());
        assert!((tiny.gamma_image(&[3.0]) - 1.0).abs() < 1e-10);

        let w = t.witness_window(2.0, 5.1).unwrap();
        assert!((w.h[0].abs() - 1.0).abs() < 1e-15);
        let above = t.hyper_witness(2.0, 5.1, &w.h, w.alpha_lo).unwrap();
        assert!(!above.lq_finite());
        assert_eq!(above.image_lq_norm(), f64::INFINITY);

        let below = t.hyper_witness(2.0, 4.9, &w.h, w.alpha_lo).unwrap();
        assert!(below.lq_finite());
        let closed = below.image_lq_norm();
        assert!(closed.is_finite() && closed <= below.f_lp_norm());
        let mc = below.image_lq_norm_mc(200_000, 7).unwrap();
        assert!(mc.value.is_finite() && mc.value <= below.f_lp_norm());

        assert!(matches!(t.hyper_witness(2.0, 3.0, &[1.0], 0.25), Err(Error::PreconditionViolated(_))));
        assert!(matches!(t.witness_window(2.0, 4.9), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn witness_image_matches_integral_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (mu, nu) = (g(&[1.0, 2.0]), g(&[0.5, 1.5]));
        let t = random_contraction(&mut rng, &mu, &nu, 0.7);
        let h = [0.4, -0.9];
        let w = t.hyper_witness(2.0, 3.0, &h, 0.1).unwrap();
        let c = mu.pinv_sqrt_apply(&h).unwrap();
        let f = |x: &[f64]| (0.1 * mu.white_noise(&c, x).powi(2)).exp();
        for x in [[0.2, -0.4], [1.0, 0.8]] {
            let quad = t.gamma_integral_apply(f, &x, &QuadScheme::gauss_hermite(60)).unwrap().value;
            assert!((quad - w.gamma_image(&x)).abs() < 1e-9 * quad);
        }
    }

    #[test]
    fn witness_closed_norm_matches_quadrature() {
        let t = CMContraction::scalar(g(&[2.0]), 0.6).unwrap();
        let w = t.hyper_witness(2.0, 3.0, &[2f64.sqrt() * 0.8], 0.15).unwrap();
        let quad = g(&[2.0]).lq_norm(|x| w.gamma_image(x), 3.0, &QuadScheme::gauss_hermite(100)).unwrap().value;
        assert!((quad - w.image_lq_norm()).abs() < 1e-8);
    }

    #[test]
    fn witness_threshold_equals_q0() {
        let mu = g(&[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_contraction(&mut rng, &mu, &mu, 0.6);
        assert!((t.witness_diverges_at(2.5).unwrap() - t.q0_threshold(2.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hs_examples() {
        let mu = g(&[1.0, 1.0]);
        let z = CMContraction::zero(mu.clone(), mu.clone()).hs_norm_gamma(10).unwrap();
        assert_eq!((z.partial, z.closed_form), (1.0, 1.0));
        let h = CMContraction::scalar(mu.clone(), 0.5).unwrap().hs_norm_gamma(40).unwrap();
        assert!((h.closed_form - 4.0 / 3.0).abs() < 1e-15);
        assert!((h.partial - h.closed_form).abs() < 1e-6);
        assert!(matches!(
            CMContraction::identity(mu).hs_norm_gamma(3),
            Err(Error::NotStrictContraction { .. })
        ));
    }

    #[test]
    fn hs_tail_bounds_the_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mu = g(&[1.0, 0.3]);
        let t = random_contraction(&mut rng, &mu, &mu, 0.8);
        let h = t.hs_norm_gamma(10).unwrap();
        let gap = h.closed_form.powi(2) - h.partial.powi(2);
        assert!(gap >= 0.0 && gap <= h.tail_bound * (1.0 + 1e-12));
    }

    #[test]
    fn eigen_examples() {
        let mu = g(&[1.0, 1.0]);
        let t = CMContraction::new(mu.clone(), mu.clone(), DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.2])).unwrap();
        assert_eq!(t.gamma_eigen(&mi(&[0, 0])).unwrap(), 1.0);
        assert!((t.gamma_eigen(&mi(&[1, 2])).unwrap() - 0.02).abs() < 1e-15);
        let ns = CMContraction::new(mu.clone(), mu, DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.2])).unwrap();
        assert!(matches!(ns.gamma_eigen(&mi(&[1, 0])), Err(Error::NotSelfAdjoint { .. })));
    }

    #[test]
    fn eigenfunctions_are_eigenvectors() {
        let mu = g(&[1.0, 2.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        let t = CMContraction::new(mu.clone(), mu.clone(), &s * (0.9 / linalg::op_norm(&s))).unwrap();
        for alpha in chaos::indices_up_to(3, 3) {
            let psi = t.eigenfunction_expansion(&alpha).unwrap();
            let img = t.gamma_series_apply(&psi).unwrap();
            let ev = t.gamma_eigen(&alpha).unwrap();
            assert!(img.max_abs_diff(&psi.scaled(ev)) < 1e-10);
            let x = [0.3, -1.1, 0.8];
            assert!((psi.eval(&x) - t.eigenfunction(&alpha, &x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn json_shape() {
        let t = CMContraction::scalar(g(&[1.0, 2.0]), 0.5).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains(r#""M":[[0.5,0.0],[0.0,0.5]]"#));
        let back: CMContraction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<CMContraction>(
            r#"{"mu":{"dim":1,"eigenvalues":[1.0]},"nu":{"dim":1,"eigenvalues":[1.0]},"M":[[1.0,2.0]]}"#
        )
        .is_err());
    }
}
