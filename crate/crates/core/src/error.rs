use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight for element {element:?} must be finite and > 0, got {weight}")]
    InvalidWeight { element: String, weight: f64 },

    #[error("weight {weight} for element {element:?} is too large to round exactly (limit 2^53)")]
    WeightTooLarge { element: String, weight: f64 },

    #[error("duplicate element {0:?}")]
    DuplicateElement(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("bit layout needs {0} bits, more than the 64 available")]
    LayoutOverflow(u32),

    #[error("sketches are not comparable: {0}")]
    Incomparable(String),

    #[error("cannot sketch an empty weighted set")]
    EmptyInput,

    #[error("malformed sketch data: {0}")]
    Decode(String),

    #[error("could not generate a pair at target {target} (closest {achieved})")]
    GenerationFailed { target: f64, achieved: f64 },
}
