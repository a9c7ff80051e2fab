use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {left}, expected {right}")]
    Dimension {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("degenerate basis: vector {index} is numerically dependent on its predecessors (relative norm {ratio:.3e})")]
    DegenerateBasis { index: usize, ratio: f64 },

    #[error("basis completion exhausted after {tried} candidates with {found} of {wanted} functions")]
    BasisExhausted {
        tried: usize,
        found: usize,
        wanted: usize,
    },

    #[error("theta {theta:?} outside parameter box")]
    Domain { theta: Vec<f64> },

    #[error("non-finite value in {what} at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("singular system in {what}; consider regularizing Sigma")]
    Singular { what: &'static str },

    #[error("evaluation failed at theta {theta:?}: {reason}")]
    Evaluation { theta: Vec<f64>, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("sampler aborted: {0}")]
    Sampler(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
