use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("hypothesis {hypothesis} violated: {detail}")]
    Hypothesis { hypothesis: &'static str, detail: String },
    #[error("threshold detection failed: {0}")]
    Threshold(String),
    #[error("root search diverged: {0}")]
    Divergence(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("circulant embedding failed: {0} (try doubling n)")]
    Embedding(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn hypothesis(hypothesis: &'static str, detail: impl Into<String>) -> Self {
        Error::Hypothesis { hypothesis, detail: detail.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
