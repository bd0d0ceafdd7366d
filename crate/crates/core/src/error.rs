use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (dimension mismatch,
    /// point outside the domain, sign constraint on a gain, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative or finite-difference computation failed to produce a
    /// usable value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A matrix that must be invertible was (numerically) singular.
    #[error("singular matrix in {context} (condition estimate {cond:.3e})")]
    Singular { context: String, cond: f64 },

    /// A quadrature segment left the valid region of the coordinate change.
    #[error("integration segment leaves the domain: {0}")]
    Domain(String),

    /// A hypothesis required for the energy-shaping construction does not
    /// hold (e.g. the eta-block Jacobian of rho is not positive definite).
    #[error("shapeability hypothesis violated: {0}")]
    Shapeability(String),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn singular(context: impl Into<String>, cond: f64) -> Self {
        Error::Singular {
            context: context.into(),
            cond,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
