use thiserror::Error;

pub type Result<T> = std::result::Result<T, IsacError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("element index ({n_x}, {n_y}) outside a {size_x}x{size_y} array")]
    IndexOutOfBounds {
        n_x: usize,
        n_y: usize,
        size_x: usize,
        size_y: usize,
    },

    #[error("{what}: {total} is not divisible by {parts}")]
    Indivisible {
        what: &'static str,
        total: usize,
        parts: usize,
    },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("analog precoder Gram matrix is singular (rank-deficient analog stage)")]
    SingularGram,

    #[error("failed to bracket the power multiplier: {0}")]
    Bracket(String),

    #[error("degenerate factorisation targets: A^H C vanishes")]
    DegenerateTargets,

    #[error("structure violated: {0}")]
    StructureViolation(String),
}

impl IsacError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        IsacError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        IsacError::ShapeMismatch {
            context,
            expected: expected.into(),
            found: found.into(),
        }
    }
}
