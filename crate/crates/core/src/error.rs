use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max|A - A^H| = {defect:e} against scale {scale:e}")]
    NonHermitianInput { defect: f64, scale: f64 },

    #[error("matrix dimension {0} is below 2")]
    DimensionTooSmall(usize),

    #[error("eigenvector matching is ambiguous for column {column}")]
    AmbiguousMatching { column: usize },

    #[error("normalized time {s} outside [0, 1]")]
    OutOfRange { s: f64 },

    #[error("operation needs a {expected} pulse family")]
    WrongFamily { expected: &'static str },

    #[error("invalid pulse parameters: {0}")]
    InvalidPulse(String),

    #[error("invalid system model: {0}")]
    InvalidModel(String),

    #[error("total Rabi frequency {omega:e} at s = {s} is below the mixing-angle threshold")]
    VanishingRabiNorm { s: f64, omega: f64 },

    #[error("energy gap {gap:e} between levels {n} and {l} at s = {s} collapsed")]
    GapCollapse { s: f64, n: usize, l: usize, gap: f64 },

    #[error("no closed form for level {n}; only the dark level has one")]
    UnsupportedLevel { n: usize },

    #[error("level index {n} out of range for a {levels}-level system")]
    InvalidLevel { n: usize, levels: usize },

    #[error("{steps} steps is too coarse (minimum {min}, norm drift {drift:e})")]
    StepTooCoarse { steps: usize, min: usize, drift: f64 },

    #[error("initial state has norm {norm}, expected 1")]
    NonUnitInitialState { norm: f64 },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("sweep point {index} ({parameter} = {value}): {source}")]
    SweepPoint {
        index: usize,
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}
