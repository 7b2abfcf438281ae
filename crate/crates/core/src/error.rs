//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cyclic network: no link ordering makes every route increasing")]
    CyclicNetwork,
    #[error("route of class {class} visits link {link} more than once")]
    DuplicateLinkInRoute { class: u32, link: u32 },
    #[error("route of class {class} is empty")]
    EmptyRoute { class: u32 },
    #[error("parameter {name} of {entity} must be positive, got {value}")]
    NonPositiveParameter {
        entity: String,
        name: &'static str,
        value: f64,
    },
    #[error("duplicate link id {0}")]
    DuplicateLinkId(u32),
    #[error("duplicate class id {0}")]
    DuplicateClassId(u32),
    #[error("route of class {class} references unknown link {link}")]
    UnknownLink { class: u32, link: u32 },

    #[error("not an upstream tree: {0}")]
    NotUpstreamTree(String),
    #[error("classes {0} and {1} have the same route")]
    DuplicatePath(u32, u32),
    #[error("link {0} can never be saturated; remove it or adjust capacities")]
    UnsaturableLink(u32),

    #[error("rate vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("operation requires unit link capacities, link {link} has capacity {capacity}")]
    NonUnitCapacity { link: u32, capacity: f64 },
    #[error("operation requires a linear network: {0}")]
    NotLinear(String),

    #[error("class {class} is not ergodic: rho = {rho} >= 1")]
    NotErgodic { class: u32, rho: f64 },
    #[error("truncation at {n_max} leaves tail mass {mass:.3e} above the threshold")]
    TruncationTooSmall { n_max: usize, mass: f64 },
    #[error("empty sample grid")]
    EmptyGrid,

    #[error("trajectory too short to classify ({samples} post-burn-in samples)")]
    TooShort { samples: usize },
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate fluid start: z0 + z1 = 0")]
    DegenerateStart,
    #[error("quasi-stationary fluid start requires z_k = 0 for k >= 2")]
    NonzeroLocalClasses,

    #[error("no child satisfies the capacity-share inequality at link {link}")]
    NoEligibleChild { link: u32 },
    #[error("no remaining class is stable in the saturated worst case")]
    NoStableClass,
    #[error("drift never balances for class {class} within the bracketing interval")]
    NoRoot { class: u32 },
    #[error("fixed-point iteration did not converge within {0} rounds")]
    NoConvergence(usize),

    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable name, printed by the CLI on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::CyclicNetwork => "CyclicNetwork",
            Error::DuplicateLinkInRoute { .. } => "DuplicateLinkInRoute",
            Error::EmptyRoute { .. } => "EmptyRoute",
            Error::NonPositiveParameter { .. } => "NonPositiveParameter",
            Error::DuplicateLinkId(_) => "DuplicateLinkId",
            Error::DuplicateClassId(_) => "DuplicateClassId",
            Error::UnknownLink { .. } => "UnknownLink",
            Error::NotUpstreamTree(_) => "NotUpstreamTree",
            Error::DuplicatePath(_, _) => "DuplicatePath",
            Error::UnsaturableLink(_) => "UnsaturableLink",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::AlphaOutOfRange(_) => "AlphaOutOfRange",
            Error::NonUnitCapacity { .. } => "NonUnitCapacity",
            Error::NotLinear(_) => "NotLinear",
            Error::NotErgodic { .. } => "NotErgodic",
            Error::TruncationTooSmall { .. } => "TruncationTooSmall",
            Error::EmptyGrid => "EmptyGrid",
            Error::TooShort { .. } => "TooShort",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DegenerateStart => "DegenerateStart",
            Error::NonzeroLocalClasses => "NonzeroLocalClasses",
            Error::NoEligibleChild { .. } => "NoEligibleChild",
            Error::NoStableClass => "NoStableClass",
            Error::NoRoot { .. } => "NoRoot",
            Error::NoConvergence(_) => "NoConvergence",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}
