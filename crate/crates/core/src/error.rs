use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular point: evaluation at pole {pole}")]
    SingularPoint { pole: usize },
    #[error("coincident poles {0} and {1}")]
    CoincidentPoles(usize, usize),
    #[error("dimension below 3 (got {0})")]
    DimensionBelowThree(usize),
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no poles given")]
    NoPoles,
    #[error("single pole requires an explicit default radius")]
    MissingDefaultRadius,
    #[error("invalid radius {0}")]
    InvalidRadius(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no samples")]
    NoSamples,
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("needs two poles")]
    NeedsTwoPoles,
    #[error("violates k2 > 2 - N (k2 = {k2}, N = {dimension})")]
    HardyShiftOutOfRange { k2: f64, dimension: usize },
    #[error("c out of admissible range for this epsilon (c = {c}, max = {max})")]
    CoefficientOutOfRange { c: f64, max: f64 },
    #[error("k0 outside the localization range [0, pi^2): {0}")]
    K0OutOfRange(f64),
    #[error("constant out of range: {0}")]
    ConstantOutOfRange(String),
    #[error("truncation box too small: ball around pole {pole} leaves the box")]
    BoxTooSmall { pole: usize },
    #[error("singular evaluation at quadrature node {node} (x = {point:?})")]
    SingularEvaluation { node: usize, point: Vec<f64> },
    #[error("pole cells overlap: poles {0} and {1} share a coarse cell")]
    PoleCellsOverlap(usize, usize),
    #[error("indefinite shift retry exceeded after {0} attempts")]
    ShiftRetryExceeded(usize),
    #[error("witness requires c > c_o (c = {c}, c_o = {c_o})")]
    WitnessRequiresSupercritical { c: f64, c_o: f64 },
    #[error("sweep requires supercritical c (c = {c}, c_o = {c_o})")]
    SweepRequiresSupercritical { c: f64, c_o: f64 },
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}
