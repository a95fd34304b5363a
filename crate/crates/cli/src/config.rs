use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use secquant::{CMContraction, Polynomial, Preset, QuadScheme};

/// Largest degree cap accepted for Hilbert-Schmidt partial sums.
pub const MAX_HS_DEGREE: usize = 60;

const DEFAULT_CONFIG: &str = r#"{
  "model": {"preset": "diag_arctan", "c1": 1.0, "c2": 2.0, "d": 3},
  "sweep": {"s": [0.0], "t": [0.0, 0.25, 0.5, 1.0, 2.0], "p": [2.0]},
  "scheme": {"kind": "tensor_gauss_hermite", "nodes": 6},
  "contractions": [
    {"mu": {"dim": 2, "eigenvalues": [1.0, 1.0]},
     "nu": {"dim": 2, "eigenvalues": [1.0, 1.0]},
     "M": [[0.5, 0.0], [0.0, 0.5]]},
    {"mu": {"dim": 2, "eigenvalues": [1.0, 2.0]},
     "nu": {"dim": 3, "eigenvalues": [1.5, 0.5, 1.0]},
     "M": [[0.5, 0.2], [-0.1, 0.6], [0.3, 0.0]]}
  ],
  "mehler": {"eigenvalues": [1.0, 0.5], "times": [0.1, 0.5, 1.0, 2.0], "degree": 4, "points": 5},
  "hs_degree": 20,
  "seed": 20240601
}"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
}

fn default_p() -> Vec<f64> {
    vec![2.0]
}

impl Sweep {
    /// `(s, t)` pairs with `s <= t`, `s` outermost.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.s.iter().flat_map(|&s| self.t.iter().filter(move |&&t| s <= t).map(move |&t| (s, t))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MehlerSpec {
    pub eigenvalues: Vec<f64>,
    pub times: Vec<f64>,
    pub degree: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Preset,
    pub sweep: Sweep,
    pub scheme: QuadScheme,
    /// Time quadrature for covariance integrals; `time_panels` only.
    #[serde(default)]
    pub time_scheme: Option<QuadScheme>,
    #[serde(default)]
    pub contractions: Vec<CMContraction>,
    /// Test function on the model's state space; a seeded random
    /// polynomial of degree 3 when absent.
    #[serde(default)]
    pub test_function: Option<Polynomial>,
    pub mehler: MehlerSpec,
    pub hs_degree: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("built-in config parses")
    }
}

impl ExperimentConfig {
    /// Missing top-level keys are filled from the built-in defaults.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut base = serde_json::to_value(ExperimentConfig::default()).map_err(|e| e.to_string())?;
        let user: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = user.as_object().ok_or("config must be a JSON object")?;
        let target = base.as_object_mut().unwrap();
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let cfg: ExperimentConfig = serde_json::from_value(base).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let model = self.model.build().map_err(|e| format!("model: {e}"))?;
        if self.sweep.cells().is_empty() {
            return Err("sweep has no (s, t) pair with s <= t".into());
        }
        if self.sweep.p.iter().any(|&p| !(p > 1.0)) {
            return Err("sweep.p entries must exceed 1".into());
        }
        if matches!(self.scheme, QuadScheme::TimePanels { .. }) {
            return Err("scheme must be a Gaussian rule, not time_panels".into());
        }
        if let Some(ts) = &self.time_scheme {
            if !matches!(ts, QuadScheme::TimePanels { .. }) {
                return Err("time_scheme must be a time_panels scheme".into());
            }
        }
        if let Some(f) = &self.test_function {
            if f.dim != model.dim() {
                return Err(format!("test_function has dim {}, model has {}", f.dim, model.dim()));
            }
        }
        if self.hs_degree > MAX_HS_DEGREE {
            return Err(format!("hs_degree {} exceeds {MAX_HS_DEGREE}", self.hs_degree));
        }
        if self.mehler.degree > 12 || self.mehler.eigenvalues.is_empty() || self.mehler.times.iter().any(|&t| t < 0.0) {
            return Err("mehler needs degree <= 12, a nonempty measure and times >= 0".into());
        }
        Ok(())
    }

    pub fn test_function(&self, dim: usize) -> Polynomial {
        match &self.test_function {
            Some(f) if f.dim == dim => f.clone(),
            _ => Polynomial::random(&mut ChaCha8Rng::seed_from_u64(self.seed), dim, 3),
        }
    }
}
