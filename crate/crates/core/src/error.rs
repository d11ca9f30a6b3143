use thiserror::Error;

/// Everything that can go wrong while building decompositions, extensions and reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown gallery tag `{0}`")]
    UnknownTag(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("point {0:?} is not in the domain")]
    NotInDomain([f64; 3]),
    #[error("no Whitney decomposition available: {0}")]
    NoDecomposition(String),
    #[error("domain membership inconsistent at probe resolution: {0}")]
    InconsistentMembership(String),
    #[error("cubes are not connected in the touching-cube graph")]
    Disconnected,
    #[error("reflected cubes lie in different components of W1")]
    ChainDisconnected,
    #[error("no W1 cube in the admissible size band near cube {0}; max_level too coarse")]
    NoReflection(String),
    #[error("W3 is empty at this max_level")]
    EmptyW3,
    #[error("region has no grid nodes: {0}")]
    EmptyRegion(String),
    #[error("{} isolated nodes without neighbours in the region", .0.len())]
    IsolatedNodes(Vec<usize>),
    #[error("insufficient radii: at least two distinct radii are needed to fit a slope")]
    InsufficientRadii,
    #[error("too few boundary samples: mean count {mean_count:.1} at radius {radius}")]
    Undersampled { radius: f64, mean_count: f64 },
    #[error("collar width {collar} exceeds the domain inradius {inradius}")]
    CollarTooWide { collar: f64, inradius: f64 },
    #[error("grid does not match the domain frame: {0}")]
    GridMismatch(String),
    #[error("singular constraint space: {0}")]
    SingularConstraint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
