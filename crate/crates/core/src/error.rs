use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model:\n{0}")]
    InvalidModel(ValidationReport),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),

    #[error("cpd of node `{node}` expects {expected} parent(s) of cardinality {cards:?}, node has {actual:?}")]
    CpdMismatch {
        node: String,
        expected: usize,
        cards: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("node `{0}` has no cpd")]
    MissingCpd(String),

    #[error("network contains a directed cycle")]
    Cyclic,

    #[error("network node `{0}` is not part of the network graph")]
    NotInNetwork(String),

    #[error("{what} needs {required} table entries, limit is {limit}")]
    ResourceLimit {
        what: String,
        required: f64,
        limit: f64,
    },

    #[error("model has {count} probabilistic components, enumeration limit is {limit}")]
    TooManyWorlds { count: usize, limit: usize },

    #[error("replicated service needs at least two instances, model has {0}")]
    TooFewInstances(usize),

    #[error("model has no gateway")]
    NoGateway,

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this error: 2 for resource exhaustion, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ResourceLimit { .. } | Error::TooManyWorlds { .. } => 2,
            _ => 1,
        }
    }
}
