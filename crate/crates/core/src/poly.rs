//! Sparse multivariate polynomials, used as test functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub c: f64,
    pub powers: Vec<u32>,
}

/// `sum_i c_i prod_j x_j^{p_ij}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if t.powers.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.powers.len() });
            }
            if !t.c.is_finite() {
                return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
            }
        }
        Ok(Polynomial { dim, terms })
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Polynomial { dim, terms: vec![Term { c, powers: vec![0; dim] }] }
    }

    pub fn monomial(powers: Vec<u32>) -> Self {
        Polynomial { dim: powers.len(), terms: vec![Term { c: 1.0, powers }] }
    }

    /// `sum_j a_j x_j`.
    pub fn linear(a: &[f64]) -> Self {
        let d = a.len();
        let terms = a
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let mut powers = vec![0; d];
                powers[j] = 1;
                Term { c, powers }
            })
            .collect();
        Polynomial { dim: d, terms }
    }

    /// Every monomial of degree `<= degree` with a uniform coefficient in `[-1, 1]`.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, degree: usize) -> Self {
        let terms = crate::chaos::indices_up_to(dim, degree)
            .into_iter()
            .map(|a| Term { c: rng.random_range(-1.0..1.0), powers: a.0 })
            .collect();
        Polynomial { dim, terms }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.c != 0.0)
            .map(|t| t.powers.iter().map(|&p| p as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.c * t.powers.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_degree() {
        let p = Polynomial::new(
            2,
            vec![Term { c: 2.0, powers: vec![1, 2] }, Term { c: -1.0, powers: vec![0, 0] }],
        )
        .unwrap();
        assert_eq!(p.degree(), 3);
        assert_eq!(p.eval(&[3.0, 2.0]), 23.0);
        assert!(Polynomial::constant(3, 4.0).is_constant());
        assert_eq!(Polynomial::linear(&[1.0, -2.0]).eval(&[1.0, 1.0]), -1.0);
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(Polynomial::new(2, vec![Term { c: 1.0, powers: vec![1] }]).is_err());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let ok: Polynomial = serde_json::from_str(r#"{"dim":1,"terms":[{"c":1.0,"powers":[2]}]}"#).unwrap();
        assert_eq!(ok.eval(&[3.0]), 9.0);
        assert!(serde_json::from_str::<Polynomial>(r#"{"dim":1,"terms":[],"x":1}"#).is_err());
    }
}
