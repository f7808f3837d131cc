//! Priors, the Gibbs sampler and convergence diagnostics.

pub mod chain;
pub mod diagnostics;
pub mod pg;
pub mod sampler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{run_chain, run_chains, DrawMatrix, PosteriorChain};
pub use diagnostics::{ess, psrf, split_psrf, DiagnosticsReport};
pub use pg::{pg_draw, PgMethod};
pub use sampler::{gibbs_step, posterior_prob_h1, GibbsSampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Upper bound on the number of mixture components.
    pub h_max: usize,
    /// Upper bound on the latent dimension.
    pub r_max: usize,
    pub beta_a: f64,
    pub beta_b: f64,
    pub z_mean: f64,
    pub z_var: f64,
    pub mig_a1: f64,
    pub mig_a2: f64,
    pub prior_h1: f64,
    /// Dirichlet concentration per component; `None` means `1 / h_max`.
    pub dirichlet_conc: Option<f64>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            h_max: 10,
            r_max: 10,
            beta_a: 0.5,
            beta_b: 0.5,
            z_mean: 0.0,
            z_var: 10.0,
            mig_a1: 2.5,
            mig_a2: 3.5,
            prior_h1: 0.5,
            dirichlet_conc: None,
        }
    }
}

impl Hyperparameters {
    pub fn concentration(&self) -> f64 {
        self.dirichlet_conc.unwrap_or(1.0 / self.h_max as f64)
    }

    /// Copy with `dirichlet_conc` made explicit.
    pub fn resolved(&self) -> Self {
        Self { dirichlet_conc: Some(self.concentration()), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_max == 0 || self.r_max == 0 {
            return Err(Error::Config("h_max and r_max must be positive".into()));
        }
        for (name, x) in [
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("z_var", self.z_var),
            ("mig_a1", self.mig_a1),
            ("mig_a2", self.mig_a2),
            ("dirichlet_conc", self.concentration()),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.prior_h1 > 0.0 && self.prior_h1 < 1.0) {
            return Err(Error::Config(format!("prior_h1 must lie in (0, 1), got {}", self.prior_h1)));
        }
        if !self.z_mean.is_finite() {
            return Err(Error::Config("z_mean must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub pg_method: PgMethod,
    /// Keep every stored draw's component probabilities (needed for prediction).
    pub store_snapshots: bool,
    /// Keep the snapshot of every `snapshot_every`-th stored draw.
    pub snapshot_every: usize,
    /// Simulate one network per group per stored draw and record its summaries.
    pub posterior_predictive: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            burn_in: 1000,
            thin: 1,
            seed: 0,
            n_chains: 1,
            pg_method: PgMethod::Exact,
            store_snapshots: false,
            snapshot_every: 1,
            posterior_predictive: true,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Hyperparameters::default().validate().unwrap();
        GibbsConfig::default().validate().unwrap();
        assert_eq!(GibbsConfig::default().n_stored(), 4000);
        assert!((Hyperparameters::default().concentration() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        let h = Hyperparameters { prior_h1: 1.0, ..Default::default() };
        assert!(h.validate().is_err());
        let h = Hyperparameters { z_var: 0.0, ..Default::default() };
        assert!(h.validate().is_err());
        let c = GibbsConfig { burn_in: 10, n_iter: 10, ..Default::default() };
        assert!(c.validate().is_err());
        let c = GibbsConfig { thin: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let h: Hyperparameters = serde_json::from_str(r#"{"h_max": 15}"#).unwrap();
        assert_eq!(h.h_max, 15);
        assert_eq!(h.r_max, 10);
    }
}
