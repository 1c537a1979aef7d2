use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid signature (p={p}, q={q}): p must be at least 1")]
    InvalidSignature { p: usize, q: usize },

    #[error("invalid latent configuration: {0}")]
    InvalidConfig(String),

    #[error("edge probability {value} at ({i}, {j}) lies outside [0, 1]")]
    ProbabilityOutOfRange { i: usize, j: usize, value: f64 },

    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("eigenvalue selection is ambiguous: |lambda_d| = {at_d} and |lambda_(d+1)| = {next} tie")]
    AmbiguousSelection { at_d: f64, next: f64 },

    #[error("selected eigenvalue {k} is zero")]
    ZeroEigenvalue { k: usize },

    #[error("eigensolver did not converge (worst residual {residual:e})")]
    EigenNoConvergence { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton iteration did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("plug-in information matrix is singular")]
    SingularInformation,

    #[error("plug-in edge probability at column {j} is exactly {value}")]
    DegenerateProbability { j: usize, value: f64 },

    #[error("zero variance of paired differences")]
    ZeroVariance,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("vertex {vertex}: {source}")]
    Vertex {
        vertex: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_vertex(self, vertex: usize) -> Self {
        Error::Vertex { vertex, source: alloc::boxed::Box::new(self) }
    }
}
