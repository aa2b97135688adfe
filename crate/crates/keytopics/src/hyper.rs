use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior hyperparameters shared across model variants.
///
/// `gamma1`/`gamma2` set the Beta prior on the keyword-use probability,
/// `beta`/`beta_tilde` the symmetric Dirichlet concentrations of the general
/// and keyword word distributions, the `eta` pairs the Gamma priors (shape,
/// rate) on the document-topic concentrations, and `mu`/`sigma` the Normal
/// prior on regression coefficients in the covariate variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta: f64,
    pub beta_tilde: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta1_tilde: f64,
    pub eta2_tilde: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma1: 1.0,
            gamma2: 1.0,
            beta: 0.01,
            beta_tilde: 0.1,
            eta1: 2.0,
            eta2: 1.0,
            eta1_tilde: 1.0,
            eta2_tilde: 1.0,
            mu: 0.0,
            sigma: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("beta", self.beta),
            ("beta_tilde", self.beta_tilde),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta1_tilde", self.eta1_tilde),
            ("eta2_tilde", self.eta2_tilde),
            ("sigma", self.sigma),
        ];
        for (name, value) in positives {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(format!(
                    "hyperparameter {name} must be strictly positive, got {value}"
                )));
            }
        }
        if !self.mu.is_finite() {
            return Err(Error::config(format!("hyperparameter mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }

    /// Gamma prior (shape, rate) for topic k's concentration.
    pub fn alpha_prior(&self, k: usize, k_keyword: usize) -> (f64, f64) {
        if k < k_keyword {
            (self.eta1_tilde, self.eta2_tilde)
        } else {
            (self.eta1, self.eta2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        HyperParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive() {
        let hp = HyperParams { beta: 0.0, ..Default::default() };
        assert!(hp.validate().is_err());
        let hp = HyperParams { sigma: -1.0, ..Default::default() };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn mu_zero_is_fine() {
        let hp = HyperParams { mu: 0.0, ..Default::default() };
        hp.validate().unwrap();
    }
}
