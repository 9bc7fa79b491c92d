use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout width mismatch: 1 + {b_basic} + {tier_sum} != {total_bits}")]
    WidthMismatch { total_bits: u32, b_basic: u32, tier_sum: u32 },
    #[error("field width out of bounds: {0}")]
    FieldBounds(String),
    #[error("tier index {tier} out of range (layout has {tiers} subdivision tiers)")]
    TierOutOfRange { tier: usize, tiers: usize },
    #[error("code does not match layout: {0}")]
    CodeMismatch(String),
    #[error("invalid code word: {0}")]
    InvalidCode(String),
    #[error("truncated payload: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("tensor has no nonzero element")]
    DegenerateTensor,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("empty tensor")]
    EmptyTensor,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("unsupported memory layout: {0}")]
    UnsupportedLayout(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
