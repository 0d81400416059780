use thiserror::Error;

/// Errors raised while building or querying graphs and hierarchies.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {edge} references unknown vertex {vertex}")]
    UnknownVertex { edge: usize, vertex: usize },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("edge {0} duplicates an earlier edge")]
    DuplicateEdge(usize),
    #[error("base graph is not connected")]
    Disconnected,
    #[error("graph has no vertices")]
    Empty,
    #[error("population vector has {got} entries, expected {expected}")]
    PopulationLength { expected: usize, got: usize },
    #[error("oriented neighbor list of vertex {0} does not match its adjacency")]
    BadOrientation(usize),
    #[error("partition map for level {level} has {got} entries, expected {expected}")]
    PartialMap {
        level: usize,
        expected: usize,
        got: usize,
    },
    #[error("partition map for level {level} leaves block label {block} empty")]
    EmptyBlock { level: usize, block: usize },
    #[error("block {block} at level {level} does not induce a connected subgraph")]
    DisconnectedBlock { level: usize, block: usize },
    #[error("level {level} is outside the hierarchy (top level {top})")]
    LevelOutOfRange { level: usize, top: usize },
    #[error("vertex {vertex} does not exist at level {level}")]
    UnknownNode { level: usize, vertex: usize },
}

/// Errors from spanning-tree counting and sampling.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("multigraph has no vertices")]
    Empty,
    #[error("multigraph is disconnected")]
    Disconnected,
    #[error("induced hierarchy is disconnected at level {0}")]
    DisconnectedAtLevel(usize),
}

/// Errors from state construction and manipulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("node ({level}, {node}) is already resolved for district {district}")]
    AlreadyResolved {
        district: usize,
        level: usize,
        node: usize,
    },
    #[error("node ({level}, {node}) does not intersect district {district}")]
    NotInDistrict {
        district: usize,
        level: usize,
        node: usize,
    },
    #[error("assignment has {got} entries, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("district label {0} out of range")]
    BadDistrict(usize),
    #[error("invalid state: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Errors raised when validating measure parameters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("beta must be nonnegative, got {0}")]
    Beta(f64),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("pop_tol must be nonnegative, got {0}")]
    PopTol(f64),
    #[error("number of districts must be positive")]
    Districts,
    #[error("max_districts_per_top_node must be 1 or 2, got {0}")]
    DistrictsPerNode(usize),
    #[error(
        "fixed-count-strict linking with links spanning coarse nodes requires gamma = 0 \
         (counting such fixed-size linking edge sets is intractable)"
    )]
    SpanningLinksNeedGammaZero,
    #[error("spanning links are only meaningful with the fixed-count-strict scheme")]
    SpanningLinksNeedStrict,
    #[error("proposal weights must be nonnegative with a positive sum")]
    ProposalWeights,
    #[error("dynamic hierarchy block bounds are invalid: min {min}, max {max}")]
    BlockBounds { min: usize, max: usize },
    #[error("{0}")]
    Other(String),
}

/// Errors raised by the proposal machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProposalError {
    #[error("state has no linking edges to pick from")]
    NoLinks,
    #[error("edge {0} is not in the cut set")]
    NotACandidate(usize),
    #[error("node degree {degree} exceeds the exhaustive search bound {bound} and no clockwise order is known")]
    DegreeTooLarge { degree: usize, bound: usize },
    #[error("rebuilt hierarchy is invalid: {0}")]
    Hierarchy(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    State(#[from] StateError),
}
