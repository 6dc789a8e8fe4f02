use thiserror::Error;

use crate::statespace::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("instance failed validation with {} diagnostic(s); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Validation(Vec<Diagnostic>),

    #[error("operation requires the {expected} objective, instance has {found}")]
    WrongVariant {
        expected: &'static str,
        found: &'static str,
    },

    #[error("arm `{arm}` state `{state}` has non-integer cost {cost}; scale costs to integers first")]
    NonIntegerCost {
        arm: String,
        state: String,
        cost: f64,
    },

    #[error("estimated joint state count {estimated} exceeds the oracle limit {limit}")]
    StateSpaceTooLarge { estimated: f64, limit: usize },

    #[error("linear program: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("relaxation for instance `{instance}` is {status:?}")]
    RelaxationNotOptimal {
        instance: String,
        status: crate::lp::LpStatus,
    },

    #[error("LP solution violates x + z <= w at arm `{arm}` state `{state}` by {excess:e}")]
    InconsistentSolution {
        arm: String,
        state: String,
        excess: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
