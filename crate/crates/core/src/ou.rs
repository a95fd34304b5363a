//! Non-autonomous Ornstein-Uhlenbeck evolution with diagonal coefficients.
//!
//! Mode `k` evolves by `dX_k = a_k(t) X_k dt + b_k(t) dW_k`, so
//!
//! ```text
//! U(t, s)_k = exp(int_s^t a_k),
//! Q(t, s)_k = int_s^t exp(2 int_r^t a_k) b_k(r)^2 dr,
//! gamma_t   = N(0, Q(t, -inf)),
//! P_{s,t} f(x) = E f(U(t, s) x + Q(t, s)^{1/2} Z).
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::SpectralGaussian;
use crate::numerics::{self, Estimate, QuadScheme};
use crate::second_quant::{q0_from_norm, CMContraction};

/// Slack on `||U(t,s)||_{CM} <= 1`.
pub const CM_CONTRACTION_TOL: f64 = 1e-10;

/// Two-parameter evolution operators `U(t, s)`.
pub trait EvolutionFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn u(&self, t: f64, s: f64) -> DMatrix<f64>;
    /// `lambda_0`, an upper bound for the exponential growth rate.
    fn decay_rate(&self) -> f64;
}

/// Noise coefficients `B(t)`.
pub trait NoiseFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn b(&self, t: f64) -> DMatrix<f64>;
    /// `K >= sup_t ||B(t)||`.
    fn bound(&self) -> f64;
}

/// Rate `a(t)` of a single mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFn {
    Constant { value: f64 },
    /// `-scale (arctan|t| + c1)`.
    Arctan { scale: f64, c1: f64 },
    /// `a0 - amp sin^2(omega t)`.
    Oscillating { a0: f64, amp: f64, omega: f64 },
}

impl RateFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            RateFn::Constant { value } => value,
            RateFn::Arctan { scale, c1 } => -scale * (t.abs().atan() + c1),
            RateFn::Oscillating { a0, amp, omega } => a0 - amp * (omega * t).sin().powi(2),
        }
    }

    /// An antiderivative.
    pub fn primitive(&self, t: f64) -> f64 {
        match *self {
            RateFn::Constant { value } => value * t,
            RateFn::Arctan { scale, c1 } => {
                -scale * (t * t.abs().atan() - t.signum() * 0.5 * t.mul_add(t, 1.0).ln() + c1 * t)
            }
            RateFn::Oscillating { a0, amp, omega } => {
                let osc = if omega == 0.0 { 0.0 } else { (2.0 * omega * t).sin() / (4.0 * omega) };
                a0 * t - amp * (0.5 * t - osc)
            }
        }
    }

    /// `int_s^t a`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        match *self {
            RateFn::Constant { value } => value * (t - s),
            _ => self.primitive(t) - self.primitive(s),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            RateFn::Constant { value } => value,
            RateFn::Arctan { scale, c1 } => -scale * c1,
            RateFn::Oscillating { a0, amp, .. } => a0 + (-amp).max(0.0),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RateFn::Arctan { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateFn::Constant { value } => value.is_finite(),
            RateFn::Arctan { scale, c1 } => scale.is_finite() && c1.is_finite() && scale >= 0.0,
            RateFn::Oscillating { a0, amp, omega } => a0.is_finite() && amp.is_finite() && omega.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid rate {self:?}")));
        }
        Ok(())
    }
}

/// Noise amplitude `b(t)` of a single mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFn {
    Constant { value: f64 },
    /// `sin(freq t) + c2`, set to zero at `t = -m pi`, `m = 0, 1, ...`.
    ShiftedSine { freq: f64, c2: f64 },
    /// `b0 (c + sin(omega t))`.
    Modulated { b0: f64, c: f64, omega: f64 },
}

impl NoiseFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            NoiseFn::Constant { value } => value,
            NoiseFn::ShiftedSine { freq, c2 } => {
                let m = -t / PI;
                if t <= 0.0 && m == m.round() {
                    0.0
                } else {
                    (freq * t).sin() + c2
                }
            }
            NoiseFn::Modulated { b0, c, omega } => b0 * (c + (omega * t).sin()),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match *self {
            NoiseFn::Constant { value } => value.abs(),
            NoiseFn::ShiftedSine { c2, .. } => 1.0 + c2.abs(),
            NoiseFn::Modulated { b0, c, .. } => b0.abs() * (c.abs() + 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseFn::Constant { value } => value.is_finite(),
            NoiseFn::ShiftedSine { freq, c2 } => freq.is_finite() && c2.is_finite(),
            NoiseFn::Modulated { b0, c, omega } => b0.is_finite() && c.is_finite() && omega.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid noise {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalFamily {
    pub rates: Vec<RateFn>,
}

impl DiagonalFamily {
    pub fn u_diag(&self, t: f64, s: f64) -> Vec<f64> {
        self.rates.iter().map(|a| a.integral(s, t).exp()).collect()
    }

    /// `lambda_k = sup_t a_k(t)`.
    pub fn mode_rates(&self) -> Vec<f64> {
        self.rates.iter().map(RateFn::sup).collect()
    }
}

impl EvolutionFamily for DiagonalFamily {
    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn u(&self, t: f64, s: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.u_diag(t, s).into())
    }

    fn decay_rate(&self) -> f64 {
        self.mode_rates().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalNoise {
    pub modes: Vec<NoiseFn>,
}

impl DiagonalNoise {
    pub fn b_diag(&self, t: f64) -> Vec<f64> {
        self.modes.iter().map(|b| b.eval(t)).collect()
    }
}

impl NoiseFamily for DiagonalNoise {
    fn dim(&self) -> usize {
        self.modes.len()
    }

    fn b(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.b_diag(t).into())
    }

    fn bound(&self) -> f64 {
        self.modes.iter().map(NoiseFn::sup_abs).fold(0.0, f64::max)
    }
}

/// `Q(t, -inf)` truncated at `s_min`, with the analytic bound on the
/// omitted trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance {
    pub diag: Vec<f64>,
    pub s_min: f64,
    pub tail_cert: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BignaminiReport {
    pub s: f64,
    pub t: f64,
    /// `||U(t,s)||` between the Cameron-Martin spaces of `gamma_s`, `gamma_t`.
    pub cm_norm: f64,
    /// `||Q(t)^{-1/2} U(t,s) Q(s)^{1/2}||` between the noise ranges.
    pub h_norm: f64,
    /// `M e^{-omega (t - s)} / (t - s)^alpha`.
    pub bound: f64,
    pub margin_one: f64,
    pub margin_bound: f64,
}

type CacheKey = (u64, u64);

#[derive(Debug, Clone)]
pub struct OUModel {
    pub name: String,
    pub family: DiagonalFamily,
    pub noise: DiagonalNoise,
    /// Gauss-Legendre order per time panel.
    pub order: usize,
    pub max_refine: usize,
    /// Relative tolerance of the time quadrature.
    pub time_tol: f64,
    /// Bound on the omitted trace of `Q(t, -inf)`.
    pub tail_tol: f64,
    cache: Arc<Mutex<HashMap<CacheKey, StationaryCovariance>>>,
}

impl PartialEq for OUModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.family == other.family
            && self.noise == other.noise
            && self.order == other.order
            && self.max_refine == other.max_refine
            && self.time_tol == other.time_tol
            && self.tail_tol == other.tail_tol
    }
}

impl OUModel {
    pub fn new(name: impl Into<String>, rates: Vec<RateFn>, noise: Vec<NoiseFn>) -> Result<Self> {
        if rates.is_empty() || rates.len() != noise.len() {
            return Err(Error::DimensionMismatch { expected: rates.len().max(1), found: noise.len() });
        }
        rates.iter().try_for_each(RateFn::validate)?;
        noise.iter().try_for_each(NoiseFn::validate)?;
        Ok(OUModel {
            name: name.into(),
            family: DiagonalFamily { rates },
            noise: DiagonalNoise { modes: noise },
            order: 10,
            max_refine: 40,
            time_tol: 1e-13,
            tail_tol: 1e-13,
            cache: Arc::new(Mutex::new(HashMap::new())),
        })
    }

    /// Replaces the time-quadrature settings with those of a
    /// [`QuadScheme::TimePanels`] scheme.
    pub fn with_time_scheme(mut self, scheme: &QuadScheme) -> Result<Self> {
        match *scheme {
            QuadScheme::TimePanels { order, max_refine, tol } => {
                self.order = order;
                self.max_refine = max_refine;
                self.time_tol = tol;
                self.cache = Arc::new(Mutex::new(HashMap::new()));
                Ok(self)
            }
            _ => Err(Error::InvalidArgument("time quadrature needs a time_panels scheme".into())),
        }
    }

    pub fn dim(&self) -> usize {
        self.family.rates.len()
    }

    pub fn u_diag(&self, t: f64, s: f64) -> Vec<f64> {
        self.family.u_diag(t, s)
    }

    pub fn u(&self, t: f64, s: f64) -> DMatrix<f64> {
        self.family.u(t, s)
    }

    pub fn mode_rates(&self) -> Vec<f64> {
        self.family.mode_rates()
    }

    /// `lambda_0 = max_k sup_t a_k(t)`.
    pub fn decay_rate(&self) -> f64 {
        self.family.decay_rate()
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise.bound()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self.family.rates.iter().flat_map(RateFn::breakpoints).collect();
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp.dedup();
        bp
    }

    /// Diagonal of `Q(t, s)`.
    pub fn q_ts_diag(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        if !(s <= t) {
            return Err(Error::InvalidArgument(format!("Q(t, s) needs s <= t, got s = {s}, t = {t}")));
        }
        if s == t {
            return Ok(vec![0.0; self.dim()]);
        }
        let end: Vec<f64> = self.family.rates.iter().map(|a| a.primitive(t)).collect();
        let integrand = |r: f64| -> Vec<f64> {
            self.family
                .rates
                .iter()
                .zip(&self.noise.modes)
                .zip(&end)
                .map(|((a, b), e)| {
                    let g = match *a {
                        RateFn::Constant { value } => value * (t - r),
                        _ => e - a.primitive(r),
                    };
                    (2.0 * g).exp() * b.eval(r).powi(2)
                })
                .collect()
        };
        let v = numerics::adaptive_gauss_legendre(
            integrand,
            s,
            t,
            &self.breakpoints(),
            self.order,
            self.max_refine,
            self.time_tol,
        )
        .map_err(|e| match e {
            Error::QuadratureFailure { .. } => Error::QuadratureFailure { s, t },
            other => other,
        })?;
        Ok(v.into_iter().map(|q| q.max(0.0)).collect())
    }

    pub fn q_ts(&self, s: f64, t: f64) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&self.q_ts_diag(s, t)?.into()))
    }

    fn tail_bound(&self, len: f64) -> f64 {
        self.mode_rates()
            .iter()
            .zip(&self.noise.modes)
            .map(|(l, b)| b.sup_abs().powi(2) * (2.0 * l * len).exp() / (2.0 * l.abs()))
            .sum()
    }

    /// `Q(t, -inf)` with the integral cut where the analytic trace tail
    /// `sum_k ||b_k||^2 e^{2 lambda_k (t - s)} / (2 |lambda_k|)` drops below `tol`.
    pub fn q_t_inf_tol(&self, t: f64, tol: f64) -> Result<StationaryCovariance> {
        let l0 = self.decay_rate();
        if !(l0 < 0.0) {
            return Err(Error::NoDecay { rate: l0 });
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tail tolerance must be positive, got {tol}")));
        }
        let key = (t.to_bits(), tol.to_bits());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let total = self.tail_bound(0.0);
        let len = if total > tol { (total / tol).ln() / (2.0 * l0.abs()) } else { 0.0 };
        let s_min = t - len;
        let diag = self.q_ts_diag(s_min, t)?;
        let cov = StationaryCovariance { diag, s_min, tail_cert: self.tail_bound(len) };
        self.cache.lock().unwrap().insert(key, cov.clone());
        Ok(cov)
    }

    pub fn q_t_inf(&self, t: f64) -> Result<StationaryCovariance> {
        self.q_t_inf_tol(t, self.tail_tol)
    }

    /// `gamma_t = N(0, Q(t, -inf))`.
    pub fn measure_at(&self, t: f64) -> Result<SpectralGaussian> {
        SpectralGaussian::new(self.q_t_inf(t)?.diag)
    }

    /// `P_{s,t} f(x)`.
    pub fn pst_apply<F>(&self, f: F, s: f64, t: f64, x: &[f64], scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if s == t {
            return Ok(Estimate::exact(f(x)));
        }
        let q = self.q_ts_diag(s, t)?;
        let mean: Vec<f64> = self.u_diag(t, s).iter().zip(x).map(|(u, xi)| u * xi).collect();
        let active: Vec<usize> = (0..self.dim()).filter(|&k| q[k] > 0.0).collect();
        let sd: Vec<f64> = active.iter().map(|&k| q[k].sqrt()).collect();
        numerics::std_normal_expectation(active.len(), scheme, |z| {
            let mut y = mean.clone();
            for ((&k, s), zi) in active.iter().zip(&sd).zip(z) {
                y[k] += s * zi;
            }
            f(&y)
        })
    }

    /// `L = (U(t,s)|_{H_s})^*` as a contraction from `gamma_t` to `gamma_s`;
    /// its matrix is `V^T`, `V = Q(t,-inf)^{-1/2} U(t,s) Q(s,-inf)^{1/2}`.
    pub fn pst_contraction(&self, s: f64, t: f64) -> Result<CMContraction> {
        if !(s <= t) {
            return Err(Error::InvalidArgument(format!("P_(s,t) needs s <= t, got s = {s}, t = {t}")));
        }
        let gt = self.measure_at(t)?;
        let gs = self.measure_at(s)?;
        let u = self.u_diag(t, s);
        let (lt, ls) = (gt.eigenvalues(), gs.eigenvalues());
        let mut v = vec![0.0; self.dim()];
        for k in 0..self.dim() {
            if gt.in_support(k) && gs.in_support(k) {
                v[k] = u[k] * (ls[k] / lt[k]).sqrt();
            }
        }
        let norm = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if norm > 1.0 + CM_CONTRACTION_TOL {
            return Err(Error::NotContraction { norm });
        }
        // quadrature noise above 1 is within tolerance; clamp to an exact contraction
        let m = DMatrix::from_diagonal(&v.iter().map(|x| x.clamp(-1.0, 1.0)).collect::<Vec<_>>().into());
        CMContraction::new(gt, gs, m.transpose())
    }

    /// `P_{s,t} f(x)` computed as `Gamma(L) f(x)`.
    pub fn pst_via_second_quant<F>(&self, f: F, s: f64, t: f64, x: &[f64], scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.pst_contraction(s, t)?.gamma_integral_apply(f, x, scheme)
    }

    /// `q0 = 1 + (p - 1) / ||U(t,s)||_{CM}^2`.
    pub fn hyper_threshold(&self, s: f64, t: f64, p: f64) -> Result<f64> {
        q0_from_norm(self.pst_contraction(s, t)?.op_norm(), p)
    }

    /// `m_t(f) = int f d gamma_t`.
    pub fn mean_functional<F>(&self, f: F, t: f64, scheme: &QuadScheme) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.measure_at(t)?.expectation(scheme, f)
    }

    /// `||P_{s,t} f - m_t(f)||_{L^p(gamma_s)} / ||f||_{L^p(gamma_t)}`; zero
    /// when `f` vanishes `gamma_t`-almost everywhere.
    pub fn decay_ratio<F>(&self, f: F, p: f64, s: f64, t: f64, scheme: &QuadScheme) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("decay ratio needs p >= 1, got {p}")));
        }
        let gt = self.measure_at(t)?;
        let gs = self.measure_at(s)?;
        let m = gt.expectation(scheme, &f)?.value;
        let den = gt.lq_norm(&f, p, scheme)?.value;
        if den == 0.0 {
            return Ok(0.0);
        }
        let failure = Mutex::new(None);
        let num = gs.lq_norm(
            |x| match self.pst_apply(&f, s, t, x, scheme) {
                Ok(e) => e.value - m,
                Err(err) => {
                    failure.lock().unwrap().get_or_insert(err);
                    0.0
                }
            },
            p,
            scheme,
        )?;
        if let Some(err) = failure.into_inner().unwrap() {
            return Err(err);
        }
        Ok(num.value / den)
    }

    /// `||Q(t)^{-1/2} U(t,s) Q(s)^{1/2}||` with `Q(r) = B(r) B(r)^T`.
    pub fn noise_range_norm(&self, s: f64, t: f64) -> f64 {
        let u = self.u_diag(t, s);
        let (bs, bt) = (self.noise.b_diag(s), self.noise.b_diag(t));
        (0..self.dim())
            .map(|k| {
                if bs[k] == 0.0 {
                    0.0
                } else if bt[k] == 0.0 {
                    f64::INFINITY
                } else {
                    (u[k] * bs[k] / bt[k]).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Checks `||U(t,s)||_{CM} < 1` and `||U(t,s)||_{CM} <= M e^{-omega (t-s)} / (t-s)^alpha`,
    /// after checking the same bound for the noise-range norm.
    pub fn bignamini_check(&self, s: f64, t: f64, m: f64, omega: f64, alpha: f64) -> Result<BignaminiReport> {
        if !(s < t) {
            return Err(Error::InvalidArgument(format!("bound needs s < t, got s = {s}, t = {t}")));
        }
        let dt = t - s;
        let bound = m * (-omega * dt).exp() / dt.powf(alpha);
        let slack = 1.0 + CM_CONTRACTION_TOL;
        let h_norm = self.noise_range_norm(s, t);
        if !(h_norm <= bound * slack) {
            return Err(Error::HypothesisFailed {
                s,
                t,
                reason: format!("noise-range norm {h_norm} exceeds {bound}"),
            });
        }
        let cm_norm = self.pst_contraction(s, t)?.op_norm();
        if !(cm_norm < 1.0) {
            return Err(Error::HypothesisFailed { s, t, reason: format!("Cameron-Martin norm {cm_norm} is not < 1") });
        }
        if !(cm_norm <= bound * slack) {
            return Err(Error::HypothesisFailed {
                s,
                t,
                reason: format!("Cameron-Martin norm {cm_norm} exceeds {bound}"),
            });
        }
        Ok(BignaminiReport { s, t, cm_norm, h_norm, bound, margin_one: 1.0 - cm_norm, margin_bound: bound - cm_norm })
    }
}
