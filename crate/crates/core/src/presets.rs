//! Ready-made diagonal models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou::{BignaminiReport, NoiseFn, OUModel, RateFn};

/// Common rate `a(t)` of every mode in [`Preset::Malliavin`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarRate {
    Constant { lambda: f64 },
    /// `a0 - amp sin^2(omega t)`, `amp >= 0`.
    Oscillating { a0: f64, amp: f64, omega: f64 },
}

impl ScalarRate {
    fn rate_fn(&self) -> RateFn {
        match *self {
            ScalarRate::Constant { lambda } => RateFn::Constant { value: lambda },
            ScalarRate::Oscillating { a0, amp, omega } => RateFn::Oscillating { a0, amp, omega },
        }
    }

    /// `a0 = sup_t a(t)`.
    pub fn sup(&self) -> f64 {
        self.rate_fn().sup()
    }
}

/// Per-mode noise of [`Preset::Malliavin`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeNoise {
    Constant { b: Vec<f64> },
    /// `b_k(t) = b0_k (c + sin(omega t))`, `c > 1`.
    Modulated { b0: Vec<f64>, c: f64, omega: f64 },
}

impl ModeNoise {
    fn len(&self) -> usize {
        match self {
            ModeNoise::Constant { b } => b.len(),
            ModeNoise::Modulated { b0, .. } => b0.len(),
        }
    }

    /// `C` with `|B(s) x| <= C |B(t) x|` for all `s, t`.
    pub fn monotone_constant(&self) -> f64 {
        match *self {
            ModeNoise::Constant { .. } => 1.0,
            ModeNoise::Modulated { c, .. } => (c + 1.0) / (c - 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    /// `a_k = -k^2 (arctan|t| + c1)`, `b_k = sin(kt) + c2`.
    DiagArctan { c1: f64, c2: f64, d: usize },
    /// `A(t) = a(t) I` with per-mode noise.
    Malliavin { d: usize, rate: ScalarRate, noise: ModeNoise },
    /// `a_k = -k^2`, `b_k = k^{-2 gamma_exp}`.
    Heat1d { gamma_exp: f64, d: usize },
    ConstantDiagonal { rates: Vec<f64>, noise: Vec<f64> },
    Inline { rates: Vec<RateFn>, noise: Vec<NoiseFn> },
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::DiagArctan { .. } => "diag_arctan",
            Preset::Malliavin { .. } => "malliavin",
            Preset::Heat1d { .. } => "heat1d",
            Preset::ConstantDiagonal { .. } => "constant_diagonal",
            Preset::Inline { .. } => "inline",
        }
    }

    pub fn build(&self) -> Result<OUModel> {
        match self {
            Preset::DiagArctan { c1, c2, d } => diag_arctan_preset(*c1, *c2, *d),
            Preset::Malliavin { d, rate, noise } => malliavin_preset(rate, noise, *d),
            Preset::Heat1d { gamma_exp, d } => heat1d_preset(*gamma_exp, *d),
            Preset::ConstantDiagonal { rates, noise } => constant_diagonal(rates, noise),
            Preset::Inline { rates, noise } => OUModel::new("inline", rates.clone(), noise.clone()),
        }
    }

    /// `(M, omega, alpha)` with `||U(t,s)||_{L(H_s, H_t)} <= M e^{-omega (t-s)} / (t-s)^alpha`
    /// for the noise ranges `H_r = B(r)(X)`.
    pub fn hypothesis_constants(&self) -> Option<(f64, f64, f64)> {
        match self {
            Preset::DiagArctan { c1, c2, .. } => Some(((c2 + 1.0) / (c2 - 1.0), *c1, 0.0)),
            Preset::Malliavin { rate, noise, .. } => Some((noise.monotone_constant(), -rate.sup(), 0.0)),
            Preset::Heat1d { .. } => Some((1.0, 1.0, 0.0)),
            Preset::ConstantDiagonal { rates, .. } => {
                let l0 = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Some((1.0, -l0, 0.0))
            }
            Preset::Inline { .. } => None,
        }
    }

    /// The decay bound on `||U(t,s)||_{CM}` with this preset's constants.
    pub fn verify_bound(&self, model: &OUModel, s: f64, t: f64) -> Result<BignaminiReport> {
        let (m, omega, alpha) = self
            .hypothesis_constants()
            .ok_or_else(|| Error::InvalidArgument("inline models carry no decay constants".into()))?;
        model.bignamini_check(s, t, m, omega, alpha)
    }
}

pub fn diag_arctan_preset(c1: f64, c2: f64, d: usize) -> Result<OUModel> {
    if !(c1 > 0.0 && c2 > 1.0 && d >= 1) {
        return Err(Error::InvalidArgument(format!("diag_arctan needs c1 > 0, c2 > 1, d >= 1; got {c1}, {c2}, {d}")));
    }
    let rates = (1..=d).map(|k| RateFn::Arctan { scale: (k * k) as f64, c1 }).collect();
    let noise = (1..=d).map(|k| NoiseFn::ShiftedSine { freq: k as f64, c2 }).collect();
    OUModel::new("diag_arctan", rates, noise)
}

pub fn malliavin_preset(rate: &ScalarRate, noise: &ModeNoise, d: usize) -> Result<OUModel> {
    if noise.len() != d || d == 0 {
        return Err(Error::DimensionMismatch { expected: d, found: noise.len() });
    }
    if !(rate.sup() < 0.0) {
        return Err(Error::NoDecay { rate: rate.sup() });
    }
    if let ScalarRate::Oscillating { amp, .. } = *rate {
        if amp < 0.0 {
            return Err(Error::InvalidArgument(format!("oscillation amplitude must be >= 0, got {amp}")));
        }
    }
    let modes = match noise {
        ModeNoise::Constant { b } => b.iter().map(|&value| NoiseFn::Constant { value }).collect(),
        ModeNoise::Modulated { b0, c, omega } => {
            if !(*c > 1.0) {
                return Err(Error::InvalidArgument(format!("modulated noise needs c > 1, got {c}")));
            }
            b0.iter().map(|&b0| NoiseFn::Modulated { b0, c: *c, omega: *omega }).collect()
        }
    };
    OUModel::new("malliavin", vec![rate.rate_fn(); d], modes)
}

pub fn heat1d_preset(gamma_exp: f64, d: usize) -> Result<OUModel> {
    if !((0.0..1.0).contains(&gamma_exp) && d >= 1) {
        return Err(Error::InvalidArgument(format!("heat1d needs 0 <= gamma_exp < 1, d >= 1; got {gamma_exp}, {d}")));
    }
    let rates = (1..=d).map(|k| RateFn::Constant { value: -((k * k) as f64) }).collect();
    let noise = (1..=d).map(|k| NoiseFn::Constant { value: (k as f64).powf(-2.0 * gamma_exp) }).collect();
    OUModel::new("heat1d", rates, noise)
}

pub fn constant_diagonal(rates: &[f64], noise: &[f64]) -> Result<OUModel> {
    OUModel::new(
        "constant_diagonal",
        rates.iter().map(|&value| RateFn::Constant { value }).collect(),
        noise.iter().map(|&value| NoiseFn::Constant { value }).collect(),
    )
}

/// `sum_k ||b_k||_inf^2 / |lambda_k|`, finite exactly when the stationary
/// covariances have uniformly bounded trace.
pub fn trace_series(model: &OUModel) -> f64 {
    model
        .mode_rates()
        .iter()
        .zip(&model.noise.modes)
        .map(|(l, b)| b.sup_abs().powi(2) / l.abs())
        .sum()
}
