use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-length summary of an utterance's background noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEmbedding {
    vector: Vec<f32>,
    source_utterance_id: String,
}

impl NoiseEmbedding {
    pub fn new(vector: Vec<f32>, source_utterance_id: impl Into<String>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidInput("empty embedding".into()));
        }
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("embedding entry {i} is not finite")));
        }
        Ok(Self {
            vector,
            source_utterance_id: source_utterance_id.into(),
        })
    }

    pub fn zeros(dim: usize, source_utterance_id: impl Into<String>) -> Self {
        Self {
            vector: vec![0.0; dim],
            source_utterance_id: source_utterance_id.into(),
        }
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn source_utterance_id(&self) -> &str {
        &self.source_utterance_id
    }

    pub fn with_vector(&self, vector: Vec<f32>) -> Result<Self> {
        if vector.len() != self.vector.len() {
            return Err(Error::Shape(format!(
                "embedding dimension {} vs {}",
                vector.len(),
                self.vector.len()
            )));
        }
        Self::new(vector, self.source_utterance_id.clone())
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.vector.iter().zip(&other.vector).map(|(&a, &b)| a as f64 * b as f64).sum();
        let na: f64 = self.vector.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = other.vector.iter().map(|&b| (b as f64).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
