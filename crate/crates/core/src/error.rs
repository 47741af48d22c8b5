use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("permutation is reducible (splits at position {0})")]
    ReduciblePermutation(usize),
    #[error("invalid lengths: {0}")]
    InvalidLengths(String),
    #[error("point {x} lies on a discontinuity of the exchange")]
    DiscontinuityHit { x: f64 },
    #[error("point {x} is outside the domain [0, {total})")]
    OutOfDomain { x: f64, total: f64 },
    #[error("saddle connection: last lengths tie ({top} vs {bottom})")]
    ConnectionDetected { top: f64, bottom: f64 },
    #[error("invalid suspension datum: {0}")]
    InvalidSuspension(String),
    #[error("orbit hits a singularity at time {time}")]
    SingularityHit { time: f64 },
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("empty time sequence")]
    EmptyTimes,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("quadrature budget exceeded: {required} > {budget}")]
    QuadratureBudgetExceeded { required: u64, budget: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
