use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not a supported prime (need 3 <= p < 2^20)")]
    InvalidModulus(u64),
    #[error("residue {value} out of range for modulus {p}")]
    ResidueOutOfRange { value: u32, p: u32 },
    #[error("expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("coefficient of term {index} is zero mod p")]
    ZeroCoefficient { index: usize },
    #[error("polynomial has no terms")]
    EmptyPolynomial,
    #[error("a sum task needs at least two terms, got {0}")]
    TooFewTerms(usize),
    #[error("table {name} is malformed: {reason}")]
    MalformedTable { name: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("width {width} is below the modulus {p}; not every frequency class can be covered")]
    WidthTooSmall { width: usize, p: u32 },
    #[error("exponent {name} must be nonzero")]
    ZeroExponent { name: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("network weights contain a non-finite value")]
    NonFinite,
    #[error("modulus mismatch: network has p={net}, context has p={ctx}")]
    ModulusMismatch { net: u32, ctx: u32 },
    #[error("operation needs a {expected} network, got {got}")]
    WrongKind { expected: &'static str, got: &'static str },
    #[error("weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpectralError {
    #[error("spectrum needs at least 2 samples, got {0}")]
    TooShort(usize),
}
