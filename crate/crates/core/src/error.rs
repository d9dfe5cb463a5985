use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("contour degenerate: a root lies within {distance:e} of the contour after {retries} perturbation retries")]
    ContourDegenerate { distance: f64, retries: usize },

    #[error("root search diverged after {0} rectangles")]
    SearchDiverged(usize),

    #[error("multiplicity inconsistent: |h_m| = {0:e} at the claimed root")]
    MultiplicityInconsistent(f64),

    #[error("information diverges: v* = {0} is not negative")]
    InformationDiverges(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate path: integral of Y^2 is {0:e}")]
    DegeneratePath(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("regime is UNCLASSIFIED (incommensurable frequencies {0:?}); pass a regime override")]
    Unclassified(Vec<f64>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
