use alloc::string::String;

/// Error cases surfaced by the pipeline. IO-side failures (file formats,
/// missing paths) live in the companion crate; everything here is about data
/// and configuration handed to the in-memory pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions disagree (maps of different sizes, bad batch shape).
    Shape(String),
    /// A shape/skeleton pair has mismatched dimensions.
    PairShape { id: String, detail: String },
    /// An operation that needs at least one sample got none.
    EmptyDataset(String),
    /// Augmentation target below the current set size.
    InvalidTarget { target: usize, available: usize },
    /// Configuration value out of range or inconsistent.
    Config(String),
    /// Non-finite value where a finite one is required (training aborts).
    Numerical(String),
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::PairShape { id, detail } => write!(f, "pair {id}: {detail}"),
            Error::EmptyDataset(what) => write!(f, "empty dataset: {what}"),
            Error::InvalidTarget { target, available } => {
                write!(f, "target count {target} is below the {available} pairs already present")
            }
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
