use alloc::string::String;

/// Errors raised by kernels and model assembly.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Operand shapes or channel counts that do not fit together.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    /// A layer or graph was configured with invalid parameters.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An input tensor does not satisfy a model-level requirement.
    #[error("invalid input: {0}")]
    Input(String),
    /// An internal index escaped its valid range.
    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn mismatch(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}
