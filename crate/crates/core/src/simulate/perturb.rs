use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::NoiseEmbedding;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { sigma: 2.0, seed: 0 }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma {} must be a finite value >= 0", self.sigma)));
        }
        Ok(())
    }
}

/// `n + eps`, `eps ~ N(0, sigma^2 I)`, drawn from `r`. `sigma = 0` returns
/// `n` unchanged without consuming randomness.
pub fn perturb_embedding_with(n: &NoiseEmbedding, sigma: f64, r: &mut impl Rng) -> Result<NoiseEmbedding> {
    PerturbationConfig { sigma, seed: 0 }.validate()?;
    if sigma == 0.0 {
        return Ok(n.clone());
    }
    let d = Normal::new(0.0, sigma).expect("validated sigma");
    let v = n.vector().iter().map(|&x| (x as f64 + d.sample(r)) as f32).collect();
    n.with_vector(v)
}

/// Perturbation drawn from the stream keyed by `cfg.seed`.
pub fn perturb_embedding(n: &NoiseEmbedding, cfg: &PerturbationConfig) -> Result<NoiseEmbedding> {
    perturb_embedding_with(n, cfg.sigma, &mut rng::stream(cfg.seed, &[rng::tag("perturb")]))
}
