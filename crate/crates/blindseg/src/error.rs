use thiserror::Error;

/// Crate-wide error type. Protocol violations abort the session rather than
/// producing a wrong-but-accepted output.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("length or modulus mismatch: {0}")]
    Mismatch(String),
    #[error("missing rotation key for step {0}")]
    MissingRotationKey(usize),
    #[error("correlated randomness exhausted or reused: {0}")]
    Correlation(String),
    #[error("layout violation: {0}")]
    Layout(String),
    #[error("quantization overflow in layer {layer}: {detail}")]
    QuantOverflow { layer: String, detail: String },
    #[error("network spec invalid: {0}")]
    Spec(String),
    #[error("protocol abort: {0}")]
    Abort(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("garbled circuit decode failure: {0}")]
    GcDecode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
