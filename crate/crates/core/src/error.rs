use alloc::boxed::Box;
use alloc::string::String;

use crate::exploration::ExplorationTrace;

/// Which budget ran out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    Steps(usize),
    Nodes(usize),
    Depth(usize),
    Points(usize),
    Layers(usize),
    /// The frontier is non-empty but the queried sites carry no events
    /// (every rate is zero): the exploration can never terminate.
    NoEvents,
}

impl core::fmt::Display for Budget {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Budget::Steps(n) => write!(f, "exploration steps > {n}"),
            Budget::Nodes(n) => write!(f, "tree nodes > {n}"),
            Budget::Depth(n) => write!(f, "tree depth > {n}"),
            Budget::Points(n) => write!(f, "ambiguity points > {n}"),
            Budget::Layers(n) => write!(f, "ambiguity layers > {n}"),
            Budget::NoEvents => f.write_str("no events on a non-empty frontier"),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("events are not sorted by increasing time")]
    UnsortedEvents,
    #[error("the unperturbed rules lack the positive-rates property")]
    PositiveRatesMissing,
    #[error("total rate is zero")]
    ZeroTotalRate,
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("budget exceeded: {budget}")]
    BudgetExceeded {
        budget: Budget,
        /// Partial trace of a failed unperturbed exploration.
        partial: Option<Box<ExplorationTrace>>,
    },
    #[error("model shape mismatch: {0}")]
    ModelShapeMismatch(String),
    #[error("coupling violation: {0}")]
    CouplingViolation(String),
    #[error("no value supplied for ambiguous event at time {0}")]
    MissingEValue(f64),
    #[error("ambiguity point at time {0} resolved before its dependencies")]
    ScheduleIncomplete(f64),
    #[error("state count {states} exceeds cap {cap}")]
    CapExceeded { states: u128, cap: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("support mismatch: {0} vs {1} outcomes")]
    SupportMismatch(usize, usize),
    #[error("perturbative event met by an unperturbed exploration")]
    PerturbativeEvent,
    #[error("frontier left the box of radius {beta} after {steps} steps")]
    FrontierEscape { beta: i64, steps: usize },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    pub fn budget(budget: Budget) -> Self {
        Error::BudgetExceeded { budget, partial: None }
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
