use thiserror::Error;

/// Errors raised by the checkers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("resolution too coarse: generator produced {points} points (need at least 3)")]
    Resolution { points: usize },

    #[error("no catalogued geodesic from point {from} to point {to}")]
    MissingGeodesic { from: usize, to: usize },

    #[error("instance too large for brute-force search: {0}")]
    TooLarge(String),

    #[error("transport solver failure: {0}")]
    Solver(String),

    #[error("empty point set")]
    EmptySet,

    #[error("degenerate ball: m(B(x, r)) = 0 at x = {x}, r = {r}")]
    DegenerateBall { x: usize, r: f64 },

    #[error("grid point {index:?} is closer than 2 cells to the field boundary")]
    Boundary { index: Vec<usize> },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("density vanishes inside its support at grid index {0}")]
    Support(usize),

    #[error("no curvature bound accepted: even K = {k_lo} fails")]
    NoAcceptedK { k_lo: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
