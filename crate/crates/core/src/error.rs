use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocab { id: usize, size: usize },
    #[error("class index {target} out of range for {classes} classes")]
    Target { target: usize, classes: usize },
    #[error("layer norm over {0} features is degenerate (need at least 2)")]
    DegenerateNorm(usize),
    #[error("loss requested over zero unmasked positions")]
    EmptyLoss,
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("sequence of length {len} exceeds max_len {max}")]
    Length { len: usize, max: usize },
    #[error("alignment error: source has {source_len} tokens, target has {target_len}")]
    Alignment { source_len: usize, target_len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
