use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("spectrogram has no phase; synthesis needs it")]
    PhaseRequired,
    #[error("corpus at {0} produced no usable utterances")]
    EmptyCorpus(PathBuf),
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("not enough utterances for `{group}`: need {needed}, have {available}")]
    InsufficientUtterances {
        group: String,
        needed: usize,
        available: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("scores outside (0, 1): {0}")]
    NumericalDomain(String),
    #[error("training diverged at step {step}: `{component}` is not finite")]
    Divergence { component: String, step: u64 },
    #[error("checkpoint corrupted: {0}")]
    Corrupt(String),
    #[error("checkpoint format {found} is incompatible with {expected}")]
    Version { found: String, expected: String },
    #[error("output directory {0} already holds results (pass force to overwrite)")]
    OutputExists(PathBuf),
    #[error("silhouette undefined: {0}")]
    SilhouetteUndefined(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] noisesim_autodiff::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
