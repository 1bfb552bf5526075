use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("operation requires a differentiable spectrum, got {0}")]
    UnsupportedSpectrum(&'static str),
    #[error("operation is not defined for the {0} loss model")]
    UnsupportedModel(&'static str),
    #[error("target kind does not match the loss model")]
    TargetMismatch,
    #[error("spectrum has no finite Lipschitz constant")]
    UnboundedLipschitz,
    #[error("sample source exhausted after {drawn} draws")]
    BudgetExhausted { drawn: usize },
    #[error("budget of {budget} samples is too small: {reason}")]
    BudgetTooSmall { budget: usize, reason: &'static str },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("root finding did not converge")]
    NonConvergence,
    #[error("split of {n} examples at fraction {fraction} leaves an empty side")]
    DegenerateSplit { n: usize, fraction: f64 },
}

/// Checks `0 < value < 1`.
pub(crate) fn open_unit(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "0 < x < 1",
        })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}
