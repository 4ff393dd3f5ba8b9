//! Clean-to-target conversion with a trained bundle, embedding
//! perturbation, and paired dataset generation.

mod dataset;
mod perturb;
mod utterance;

pub use dataset::{generate_dataset, sigma_sweep, DatasetOptions, OutputPolicy, SimulatedPair, PAIRS_FILE};
pub use perturb::{perturb_embedding, perturb_embedding_with, PerturbationConfig};
pub use utterance::{embed_utterance, simulate_utterance, SimulationOutput};
