//! Centered Gaussian measures with diagonal covariance, and the
//! Cameron-Martin calculus attached to them.
//!
//! A measure is `N(0, diag(lambda))` on `R^d`. Directions with
//! `lambda_k <= kernel_tol * max(lambda)` form the numerical kernel; every
//! pseudo-inverse operation only touches the complementary support.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::{self, Estimate, QuadScheme};

pub const DEFAULT_KERNEL_TOL: f64 = 1e-12;

/// Relative size of kernel components tolerated in "range" arguments.
pub const OFF_RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGaussian {
    eigenvalues: Vec<f64>,
    kernel_tol: f64,
    support: Vec<usize>,
}

impl SpectralGaussian {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        Self::with_kernel_tol(eigenvalues, DEFAULT_KERNEL_TOL)
    }

    pub fn with_kernel_tol(eigenvalues: Vec<f64>, kernel_tol: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("a measure needs dimension >= 1".into()));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidArgument("covariance eigenvalues must be finite and >= 0".into()));
        }
        let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let support = eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| max > 0.0 && l > kernel_tol * max)
            .map(|(k, _)| k)
            .collect();
        Ok(SpectralGaussian { eigenvalues, kernel_tol, support })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kernel_tol(&self) -> f64 {
        self.kernel_tol
    }

    /// Indices of the numerical support, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn in_support(&self, k: usize) -> bool {
        self.support.binary_search(&k).is_ok()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(())
    }

    /// Errors with `OffRange` if the kernel part of `v` is not negligible.
    pub fn check_range(&self, v: &[f64]) -> Result<()> {
        self.check_dim(v)?;
        let total = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let off = (0..self.dim())
            .filter(|k| !self.in_support(*k))
            .map(|k| v[k] * v[k])
            .sum::<f64>()
            .sqrt();
        if off > OFF_RANGE_TOL * total {
            return Err(Error::OffRange { excess: if total > 0.0 { off / total } else { off } });
        }
        Ok(())
    }

    /// Cameron-Martin inner product `sum_j h_j k_j / lambda_j`.
    pub fn cm_inner(&self, h: &[f64], k: &[f64]) -> Result<f64> {
        self.check_range(h)?;
        self.check_range(k)?;
        Ok(self.support.iter().map(|&j| h[j] * k[j] / self.eigenvalues[j]).sum())
    }

    pub fn cm_norm(&self, h: &[f64]) -> Result<f64> {
        Ok(self.cm_inner(h, h)?.sqrt())
    }

    /// `Q^{-1/2} h` on the support, zero on the kernel.
    pub fn pinv_sqrt_apply(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_range(h)?;
        let mut out = vec![0.0; self.dim()];
        for &j in &self.support {
            out[j] = h[j] / self.eigenvalues[j].sqrt();
        }
        Ok(out)
    }

    /// `Q^{1/2} x`.
    pub fn sqrt_apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.eigenvalues).map(|(x, l)| x * l.sqrt()).collect()
    }

    /// Standardized coordinates `x_j / sqrt(lambda_j)` over the support; they
    /// are i.i.d. standard normal under the measure.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        self.support.iter().map(|&j| x[j] / self.eigenvalues[j].sqrt()).collect()
    }

    /// Full-length `Q^{-1/2} x` with zeros on the kernel.
    pub fn standardize_full(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &j in &self.support {
            out[j] = x[j] / self.eigenvalues[j].sqrt();
        }
        out
    }

    /// Inverse of [`standardize`](Self::standardize): places `sqrt(lambda_j) xi_j`
    /// on the support and zero on the kernel.
    pub fn embed(&self, xi: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (&j, v) in self.support.iter().zip(xi) {
            x[j] = self.eigenvalues[j].sqrt() * v;
        }
        x
    }

    /// `|(I - P) z|`, the norm of `z` with its kernel components removed.
    pub fn support_norm(&self, z: &[f64]) -> f64 {
        self.support.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt()
    }

    /// White-noise functional `W_z(x) = sum_{lambda_k > 0} x_k z_k / sqrt(lambda_k)`.
    pub fn white_noise(&self, z: &[f64], x: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|&k| x[k] * z[k] / self.eigenvalues[k].sqrt())
            .sum()
    }

    /// `exp(W_z(x) - |(I - P) z|^2 / 2)`; integrates to one.
    pub fn exp_functional(&self, z: &[f64], x: &[f64]) -> f64 {
        let n = self.support_norm(z);
        (self.white_noise(z, x) - 0.5 * n * n).exp()
    }

    /// Density of `N(h, Q)` with respect to this measure at `x`.
    pub fn cameron_martin_density(&self, h: &[f64], x: &[f64]) -> Result<f64> {
        let z = self.pinv_sqrt_apply(h)?;
        let hn = self.cm_norm(h)?;
        Ok((-0.5 * hn * hn + self.white_noise(&z, x)).exp())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.embed(&numerics::standard_normal_vec(rng, self.support.len()))
    }

    /// `n` independent draws; block `b` of the output comes from substream
    /// `b`, so the result depends only on `(seed, n)`.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut block = 0u64;
        while out.len() < n {
            let mut rng = numerics::substream(seed, block);
            let len = numerics::MC_BLOCK.min(n - out.len());
            for _ in 0..len {
                out.push(self.draw(&mut rng));
            }
            block += 1;
        }
        out
    }

    /// `E[f]` under the measure.
    pub fn expectation<F>(&self, scheme: &QuadScheme, f: F) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        numerics::std_normal_expectation(self.support.len(), scheme, |xi| f(&self.embed(xi)))
    }

    /// `||f||_{L^q}` under the measure. In Monte Carlo mode the standard
    /// error is propagated to first order.
    pub fn lq_norm<F>(&self, f: F, q: f64, scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if q < 1.0 {
            return Err(Error::InvalidArgument(format!("L^q norm needs q >= 1, got {q}")));
        }
        let m = self.expectation(scheme, |x| f(x).abs().powf(q))?;
        let value = m.value.max(0.0).powf(1.0 / q);
        let stderr = if m.value > 0.0 { value * m.stderr / (q * m.value) } else { 0.0 };
        Ok(Estimate { value, stderr })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRepr {
    dim: usize,
    eigenvalues: Vec<f64>,
}

impl Serialize for SpectralGaussian {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr { dim: self.dim(), eigenvalues: self.eigenvalues.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralGaussian {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(d)?;
        if repr.dim != repr.eigenvalues.len() {
            return Err(serde::de::Error::custom(format!(
                "dim {} does not match {} eigenvalues",
                repr.dim,
                repr.eigenvalues.len()
            )));
        }
        SpectralGaussian::new(repr.eigenvalues).map_err(serde::de::Error::custom)
    }
}
