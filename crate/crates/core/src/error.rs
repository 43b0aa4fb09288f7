use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform. `node` is the tape index the op would
    /// have occupied, or `None` for checks outside a tape.
    #[error("dimension mismatch in {op} (node {node:?}): {detail}")]
    Dimension {
        op: &'static str,
        node: Option<usize>,
        detail: String,
    },

    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { op: &'static str, node: usize },

    #[error("dense jacobian needs {required} entries, ceiling is {allowed}")]
    Capacity { required: usize, allowed: usize },

    #[error("degenerate tangent space: singular values {spectrum:?}")]
    DegenerateTangent { spectrum: Vec<f64> },

    #[error("alignment score undefined for a zero gradient")]
    ZeroGradient,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("decoder held-out reconstruction MSE {mse:.3e} above threshold {threshold:.3e}")]
    DecoderUnderfit { mse: f64, threshold: f64 },

    #[error("decoder jacobian rank-deficient at {failed} of {total} points")]
    DegenerateDecoder { failed: usize, total: usize },

    #[error("inversion aborted at step {step}: non-finite loss")]
    InversionDiverged { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            node: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
