use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reachable state count exceeds cap {cap} ({context})")]
    CapExceeded { cap: usize, context: String },

    #[error("value iteration did not converge within {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("policy undefined on reachable state {0}")]
    UndefinedPolicyState(String),

    #[error("policy action {action} is not available in state {state}")]
    IllegalPolicyAction { state: String, action: String },

    #[error("no value for successor state {0}")]
    MissingSuccessorValue(String),

    #[error("malformed action: {0}")]
    MalformedAction(String),

    #[error("slot {0} is outside the vocabulary")]
    InvalidSlot(String),

    #[error("observation {observed} of slot {slot} has zero probability under the posterior")]
    ZeroProbabilityObservation { slot: String, observed: String },

    #[error("posterior supports differ at slot {0}")]
    SupportMismatch(String),

    #[error("no legal action in state {0}")]
    NoLegalAction(String),

    #[error("unknown paradigm `{0}` (expected kg-only, llm-only, llm-oplus-kg or llm-otimes-kg)")]
    UnknownParadigm(String),

    #[error("cannot fit a power law: {0}")]
    NonPositiveRegret(String),

    #[error("fit needs at least {needed} horizon points in range, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("no eligible steps for the information coefficient")]
    NoEligibleSteps,

    #[error("prior sample space is not oracle-feasible: {0}")]
    OracleInfeasible(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }
}
