use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node id {id} out of range (n_nodes = {n})")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("node {0} has no cluster")]
    MissingCluster(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("subset member {0} is not a neighbor of the ego")]
    NotANeighbor(usize),

    #[error("missing-data policy leaves {0}")]
    Policy(String),

    #[error("unknown axis {0}")]
    UnknownAxis(String),

    #[error("no members in partition")]
    NoMembers,

    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("bad tensor cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
