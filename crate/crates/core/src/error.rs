use std::path::PathBuf;

/// Errors produced anywhere in the ranking toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed image header: {0}")]
    MalformedHeader(String),
    #[error("truncated image payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported bit depth {0} (only 8-bit images are supported)")]
    UnsupportedBitDepth(u32),
    #[error("images with an alpha channel are not supported")]
    AlphaUnsupported,
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("grid {width}x{height} is too small: {reason}")]
    TooSmall {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("degenerate samples: {0}")]
    DegenerateSamples(&'static str),
    #[error("one-sided samples: AGGD fit needs both negative and positive values")]
    OneSidedSamples,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("missing saliency map for sample {0}")]
    MissingSaliency(usize),
    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("untrained ranker: {0}")]
    UntrainedRanker(String),

    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("manifest line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("duplicate set id `{0}`")]
    DuplicateSet(String),
    #[error("set `{set_id}` image {index}: file not found: {}", path.display())]
    MissingImage {
        set_id: String,
        index: usize,
        path: PathBuf,
    },
    #[error("set `{set_id}` has {got} annotations, need at least {needed}")]
    TooFewAnnotations {
        set_id: String,
        needed: usize,
        got: usize,
    },
    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
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
