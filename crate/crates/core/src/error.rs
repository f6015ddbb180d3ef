use crate::overlay::{LinkId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid entanglement level {0}, levels start at 1")]
    InvalidLevel(u32),
    #[error("{0} not found")]
    NotFound(String),
    #[error("lattice with {cells} cells cannot hold {nodes} nodes")]
    TooSmallLattice { cells: u128, nodes: usize },
    #[error("invalid lattice parameters: {0}")]
    LatticeParams(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("coordinate dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("node {0} has no entangled contacts")]
    NoContacts(NodeId),
    #[error("no entangled link between {0} and {1}")]
    NotConnected(NodeId, NodeId),
    #[error("node {0} is not mapped into the base-graph")]
    UnmappedNode(NodeId),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("instance has {variables} assignment variables, cap is {cap}")]
    TooLarge { variables: usize, cap: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("impossible generator parameters: {0}")]
    ImpossibleParams(String),
    #[error("invalid failure event: {0}")]
    InvalidFailure(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("link {0} is not part of the adapted link set")]
    NotAdapted(LinkId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
