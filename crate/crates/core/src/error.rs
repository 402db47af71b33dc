use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input to {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },
    #[error("insufficient samples: have {have}, need at least {need}")]
    InsufficientSamples { have: u64, need: u64 },
    #[error("sample count mismatch: caller claims {expected}, accumulator saw {seen}")]
    SampleCountMismatch { expected: u64, seen: u64 },

    #[error("data node `{0}` appears in more than one partition group")]
    DuplicateNode(String),
    #[error("data node `{0}` is missing from the partition")]
    IncompletePartition(String),
    #[error("unknown data node `{0}` referenced by partition")]
    UnknownNode(String),
    #[error("partition must contain at least one nonempty group")]
    EmptyPartition,
    #[error("block size must be at least 1")]
    BadBlockSize,

    #[error("duplicate node name `{0}` in model graph")]
    DuplicateName(String),
    #[error("node `{node}` has no assigned value")]
    MissingAssignment { node: String },
    #[error("log density at node `{node}` evaluated to NaN")]
    DensityNan { node: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("inner Monte Carlo count K must be at least 1 (got {0})")]
    BadInnerCount(u32),
    #[error("h-vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite log predictive density at fraction {fraction}, element {element}: {value}")]
    NonFiniteH { fraction: usize, element: usize, value: f64 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("stream error at line {line}: {msg}")]
    Stream { line: usize, msg: String },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("unknown model `{0}` (known models: H, F, S, P, Z, I)")]
    UnknownModel(String),
    #[error("model {model} expects a {expected} dataset")]
    DatasetMismatch { model: &'static str, expected: &'static str },
    #[error(
        "model {0} declares no latent nodes, so marginal WAIC is identical to conditional WAIC; \
         run it in conditional mode"
    )]
    NoLatentNodes(String),
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for data/format problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::DensityNan { .. } | Error::NonFiniteH { .. } => 3,
            _ => 2,
        }
    }
}
