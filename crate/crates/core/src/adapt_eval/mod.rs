//! Downstream adaptation and measurement: enhancement backends and their
//! fine-tuning, metrics bucketed by SNR, ablations, and analysis outputs.

mod ablation;
mod histogram;
mod metrics;
mod projection;
mod se;

pub use ablation::{
    generated_segments, pool_segments, profile_distance, run_ablation, spectral_profile, target_spectral_distance,
    AblationResult, AblationVariant,
};
pub use histogram::{histogram, manifest_snrs, Bins, Histogram, HistogramSeries};
pub use metrics::{
    bucket_of, evaluate, si_snr, BucketSummary, ExternalMetric, Metric, MetricRegistry, MetricReport, SiSnr,
    UtteranceScore, DEFAULT_BUCKETS, SI_SNR_CEILING_DB,
};
pub use projection::{embedding_projection, pool_embeddings, silhouette, Pca, Projection, Projector};
pub use se::{
    finetune_se, finetune_se_waveforms, oracle_mixtures, CausalUNet, CommandBackend, SeBackend, SeFinetuneConfig,
    SeTrainReport, UNetSpec,
};
