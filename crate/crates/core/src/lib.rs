//! Gaussian chaos, second quantization of Cameron-Martin contractions and
//! non-autonomous Ornstein-Uhlenbeck evolution operators, at finite
//! truncation dimension.

pub mod chaos;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod numerics;
pub mod ou;
pub mod permanent;
pub mod poly;
pub mod presets;
pub mod second_quant;
pub mod verify;

pub use chaos::{ChaosExpansion, MultiIndex};
pub use error::{Error, Result};
pub use gaussian::SpectralGaussian;
pub use numerics::{Estimate, QuadScheme};
pub use ou::OUModel;
pub use poly::Polynomial;
pub use presets::Preset;
pub use second_quant::CMContraction;
