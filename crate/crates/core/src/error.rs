use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid set representation: {0}")]
    InvalidSet(String),
    #[error("not a boundary point (signed distance {0:e})")]
    NotBoundaryPoint(f64),
    #[error("set is empty")]
    EmptySet,
    #[error("set not uniformly wedged at scale {0}")]
    NotUniformlyWedged(f64),
    #[error("divergence: state norm exceeded {0:e}")]
    Divergence(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("(S2) violated at {point:?}: best inward margin {margin}")]
    InwardViolated { point: Vec<f64>, margin: f64 },
    #[error("not wedged along w(x) at {0:?}")]
    NotWedged(Vec<f64>),
    #[error("boundary cover incomplete: {} uncovered witness points", .0.len())]
    CoverIncomplete(Vec<Vec<f64>>),
    #[error("coverage incomplete: {} uncovered sample points", .0.len())]
    CoverageIncomplete(Vec<Vec<f64>>),
    #[error("tube radius too small ({0:e})")]
    TubeTooThin(f64),
    #[error("outside feedback domain at {0:?}")]
    OutsideDomain(Vec<f64>),
    #[error("no plan found from seeds {0:?}")]
    Unreachable(Vec<Vec<f64>>),
    #[error("empty grid")]
    EmptyGrid,
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("render supports d=2 only")]
    RenderDimension,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
