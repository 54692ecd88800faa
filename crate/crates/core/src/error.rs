use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// One entry per violated invariant of an [`EnsembleSpec`](crate::EnsembleSpec).
    #[error("invalid spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("empty domain: E ≤ ε₁")]
    EmptyDomain,

    #[error("degeneracy schedule yields G({n}) = {total} < m = {levels}")]
    TooFewDegeneracies { n: u64, total: u64, levels: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration needs ~{estimate} states, above the budget of {budget}; use the sampler")]
    BudgetExceeded { estimate: f64, budget: u64 },

    #[error("x is not representable on the lattice at N = {0}")]
    NotRepresentable(u64),

    #[error("wrong maximum kind: expected {expected}")]
    WrongKind { expected: &'static str },

    #[error("solver did not converge: {method} (residuals {residuals:?})")]
    NoConvergence { method: &'static str, residuals: [f64; 2] },

    #[error("all level energies coincide; the energy normal is degenerate")]
    DegenerateNormal,

    #[error("invalid chain config: {0}")]
    InvalidChain(String),
}
