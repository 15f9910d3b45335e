use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A predictor or assignment returned a non-finite value, or could not be
    /// evaluated at all for the given sample.
    #[error("evaluation failed at sample {sample}, subject {subject}: {reason}")]
    Evaluation {
        sample: String,
        subject: usize,
        reason: String,
    },

    #[error("degenerate assignment: every raw weight is zero for sample {sample}")]
    DegenerateAssignment { sample: String },

    #[error("hypothesis class is empty")]
    EmptyClass,

    #[error("distribution is empty")]
    EmptyDistribution,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("assignment was normalized against a different subject set: {0}")]
    SubjectMismatch(String),

    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size limit exceeded: {what} is {size}, limit {limit}{hint}")]
    SizeLimit {
        what: &'static str,
        size: u128,
        limit: u128,
        hint: &'static str,
    },

    #[error("alternating minimization diverged at iteration {iteration}: risk {risk}")]
    Divergence { iteration: usize, risk: f64 },

    #[error("target eta = {eta} is not achievable for eps <= {eps_max} (bound there is {bound})")]
    Infeasible { eta: f64, eps_max: f64, bound: f64 },

    #[error("level set is empty: c = {c} exceeds the largest true risk {max_risk}")]
    EmptyLevelSet { c: f64, max_risk: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
