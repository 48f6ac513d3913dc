/// Errors raised across the crate.
#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy is improper")]
    ImproperPolicy,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("power iteration did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("iteration limit of {0} reached before convergence")]
    MaxIterExceeded(usize),
    #[error("policy iteration revisited a policy without improving")]
    CycleDetected,
    #[error("not every stationary policy is proper (stalled with {uncovered} states uncovered)")]
    NotAllProper { uncovered: usize },
    #[error("occupancy flow residual {0:e} exceeds tolerance")]
    InvalidOccupancy(f64),
    #[error("input must be nonnegative")]
    NegativeInput,
    #[error("weights must be strictly positive")]
    NonPositiveWeight,
    #[error("argument must be strictly positive, got {0}")]
    NonPositiveInput(f64),
    #[error("lambda {lambda} is below the admissible bound {required}")]
    LambdaTooSmall { lambda: f64, required: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("modification requires n(s,a) >= 1 at ({s},{a})")]
    ZeroCounts { s: usize, a: usize },
    #[error("no exact CB_min for divergence {0}")]
    UnsupportedDivergence(String),
    #[error("value vector has negative entries")]
    NonNegativityViolated,
    #[error("grid oracle supports at most {max} states, got {got}")]
    TooManyStates { max: usize, got: usize },
    #[error("bound variant {0} needs a Plus-modified centre")]
    MissingModification(String),
    #[error("no candidate fixed point survived the procedure")]
    NoCandidate,
    #[error("program is infeasible")]
    Infeasible,
    #[error("all policies must be proper for the greedy baseline")]
    ImproperRisk,
    #[error("planning failed in episode {episode}: {source}")]
    PlanningFailed { episode: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
