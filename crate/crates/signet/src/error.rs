use thiserror::Error;

/// Errors surfaced by graph ingestion, analysis, and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: usize, dst: usize },

    #[error("leader {leader} has incoming edge from {src}")]
    LeaderIncoming { leader: usize, src: usize },

    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("condensing map produces a cycle among supernodes")]
    NotAcyclic,

    #[error("budget d = {d} exceeds the {roots} roots of the follower condensation")]
    BudgetExceedsRoots { d: usize, roots: usize },

    #[error("control realization requires a non-empty leader set")]
    NoLeaders,

    #[error("trace has not converged; contained set is undefined")]
    NotConverged,

    #[error("eigenvector iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    PerronNoConvergence { iters: usize, residual: f64 },

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { residual: f64, tol: f64 },

    #[error("generator spec error: {0}")]
    Spec(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
