use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is not a power of two >= 8")]
    InvalidGrid(usize),

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("field is not zero-mean: coeff(0) = {0:e}")]
    NonZeroMean(f64),

    #[error("multiplier breaks Hermitian symmetry at mode ({0}, {1})")]
    SymmetryViolation(i64, i64),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("block index {j} outside -1..={j_max}")]
    BlockOutOfRange { j: i32, j_max: i32 },

    #[error("ratio has zero denominator")]
    ZeroDenominator,

    #[error("invalid exponents: {0}")]
    InvalidExponents(String),

    #[error("k_cut = {k_cut} does not cover the mollifier support 1/eps = {radius}")]
    CutoffTooSmall { k_cut: i64, radius: f64 },

    #[error("frequency out of range: {0}")]
    FrequencyOutOfRange(String),

    #[error("renormalization constant c_n = {c_n} is smaller than a = {a}")]
    ConstantTooSmall { c_n: f64, a: f64 },

    #[error("bandwidth violation: {0}")]
    Bandwidth(String),

    #[error("Picard iteration does not contract (factor {factor:.3}) on window starting at t = {time}")]
    NonContraction { time: f64, factor: f64 },

    #[error("solution became non-finite at t = {0}")]
    Explosion(f64),

    #[error("annihilation check failed: residual {0:e}")]
    Annihilation(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
