//! Corpus manifests, the unpaired sampling protocol and synthetic corpora.

mod batch;
mod manifest;
mod sampling;
pub mod synth;

pub use batch::{batches_per_epoch, epoch_batches, next_batch, SegmentPool, UnpairedBatch};
pub use manifest::{build_manifest, Domain, DomainRules, Manifest, ManifestEntry};
pub use sampling::{exclude_from_test, sample_training_subset};
