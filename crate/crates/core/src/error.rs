use thiserror::Error;

/// Errors produced by model construction, evaluation and fitting.
#[derive(Debug, Error)]
pub enum TsiError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field values do not match the grid: {0}")]
    InvalidField(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid node set: {0}")]
    InvalidNodes(String),
    #[error("expected {expected} snapshots, got {got}")]
    SnapshotCountMismatch { expected: usize, got: usize },
    #[error("parameter {0} is not a source node of the transform set")]
    UnknownSourceNode(f64),
    #[error("chain endpoints do not match: step ends at {left} but next starts at {right}")]
    ChainEndpointMismatch { left: f64, right: f64 },
    #[error("parameter {mu} lies outside the cell [{a}, {b}]")]
    OutsideCell { mu: f64, a: f64, b: f64 },
    #[error("realized transform is not monotone (folds) at grid index {0}")]
    FoldingTransform(usize),
    #[error("singular parameter {mu_bar} lies inside the integration range [{lo}, {hi}]")]
    SingularInsideRange { mu_bar: f64, lo: f64, hi: f64 },
    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),
    #[error("initial data does not consist of exactly two entropy shocks")]
    NotTwoShocks,
    #[error("non-finite objective during transform fit: {0}")]
    DegenerateObjective(String),
    #[error("transform fit kept folding after {0} restarts")]
    FitFolded(usize),
    #[error("cell [{a}, {b}] has no fitted model")]
    UnfittedCell { a: f64, b: f64 },
    #[error("refinement parameter {mu_bar} lies outside the domain [{a}, {b}]")]
    MuBarOutsideDomain { mu_bar: f64, a: f64, b: f64 },
    #[error("interface curve touches the boundary of the parameter interval at {0}")]
    MuBarOnBoundary(f64),
    #[error("invalid schedule configuration: {0}")]
    InvalidSchedule(String),
    #[error("error history is unusable: {0}")]
    BadErrorHistory(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TsiError>;
