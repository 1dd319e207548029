use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("invalid student id {0:?}: must be non-empty without whitespace or commas")]
    InvalidId(String),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("fan-out k={k} exceeds n-1 for n={n}")]
    FanOutTooLarge { n: usize, k: usize },

    #[error("tree with depth {depth} and fan-out {k} exceeds the node limit {limit}")]
    NodeLimitExceeded { depth: u32, k: u32, limit: usize },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("unknown student {0}")]
    UnknownStudent(String),

    #[error("seed set is empty")]
    EmptySeeds,

    #[error("view of {viewer} references unknown post {post_id}")]
    DanglingView { viewer: String, post_id: String },

    #[error("duplicate post id {0}")]
    DuplicatePost(String),

    #[error("post {0} has no quality label")]
    MissingLabel(String),

    #[error("post log is empty")]
    EmptyLog,

    #[error("k must be positive")]
    ZeroK,

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("expected 1 or 3 fields, found {0}")]
    FieldCount(usize),
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("probability {0} out of range [0, 1]")]
    ProbabilityOutOfRange(String),
    #[error("unparseable probability {0:?}")]
    BadNumber(String),
    #[error("invalid student id {0:?}")]
    BadId(String),
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn parse(line: usize, kind: ParseErrorKind) -> Self {
        Error::Parse { line, kind }
    }
}
