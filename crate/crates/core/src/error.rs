use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported dimension {0}; gridded computation supports n = 1 or n = 2")]
    UnsupportedDimension(usize),

    #[error("grid too coarse: h = {h} exceeds R/2 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },

    #[error("point at distance {distance} is outside the open ball of radius {radius}")]
    OutsideBall { distance: f64, radius: f64 },

    #[error("subdomain is empty or not contained in the grid ball")]
    EmptySubdomain,

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("solution magnitude reached the overflow clamp at node {node}")]
    Overflow { node: usize },

    #[error("Hamiltonian does not carry the constants required by `{0}`")]
    MissingConstants(&'static str),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("radius {r} exceeds the configured smallness threshold {r_max}")]
    RadiusTooLarge { r: f64, r_max: f64 },

    #[error("ABP smallness condition violated: {lhs} >= {delta_hat}")]
    SmallnessViolated { lhs: f64, delta_hat: f64 },

    #[error("inputs rejected: {0}")]
    Rejected(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
