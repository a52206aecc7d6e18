use std::path::PathBuf;

/// Errors produced by the classification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("no GNSS values")]
    NoGnssValues,

    #[error("missing GNSS modality")]
    MissingGnss,

    #[error("missing accelerometry modality")]
    MissingAccel,

    #[error("no labeled data")]
    NoLabeledData,

    #[error("feature dimension mismatch: expected F = {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("FC requires all features")]
    FcRequiresAllFeatures,

    #[error("no valid sensor data")]
    NoValidSensorData,

    #[error("length mismatch: {0} truth labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cross-validation needs at least 2 animals, found {0}")]
    TooFewAnimals(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
