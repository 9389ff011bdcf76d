use thiserror::Error;

pub type Result<T, E = HjbError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HjbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("exponent constraint violated: {0}")]
    Constraint(String),

    #[error("non-finite value in {field} at {point:?}")]
    NonFinite { field: String, point: Vec<f64> },

    #[error("negative kernel value {value} for control {control} at x={x:?}, y={y:?}")]
    NegativeKernel {
        control: String,
        x: Vec<f64>,
        y: Vec<f64>,
        value: f64,
    },

    #[error("monotonicity violated at node {node}, control {control}, offset {offset:?}: weight {weight}")]
    Monotonicity {
        node: usize,
        control: String,
        offset: Vec<i32>,
        weight: f64,
    },

    #[error("diffusion matrix for control {control} at node {node} is not diagonally dominant")]
    NotDiagonallyDominant { control: String, node: usize },

    #[error("unknown control {0}")]
    UnknownControl(String),

    #[error("grid function has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("problem carries no Lyapunov data")]
    MissingLyapunov,

    #[error("Lyapunov function not evaluable at {0:?}")]
    LyapunovDomain(Vec<f64>),

    #[error("oracle size cap exceeded: {nodes} nodes > {cap}")]
    OracleCap { nodes: usize, cap: usize },

    #[error("damped iteration is not contractive (factor {0})")]
    NotContractive(f64),

    #[error("unknown reference function {0:?}")]
    UnknownReference(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("expression {expr:?}: {reason}")]
    Expression { expr: String, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HjbError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            HjbError::InvalidGrid(_) => "invalid_grid",
            HjbError::InvalidQuadrature(_) => "invalid_quadrature",
            HjbError::InvalidProblem(_) => "invalid_problem",
            HjbError::Constraint(_) => "constraint",
            HjbError::NonFinite { .. } => "non_finite",
            HjbError::NegativeKernel { .. } => "negative_kernel",
            HjbError::Monotonicity { .. } => "monotonicity",
            HjbError::NotDiagonallyDominant { .. } => "not_diagonally_dominant",
            HjbError::UnknownControl(_) => "unknown_control",
            HjbError::LengthMismatch { .. } => "length_mismatch",
            HjbError::MissingLyapunov => "missing_lyapunov",
            HjbError::LyapunovDomain(_) => "lyapunov_domain",
            HjbError::OracleCap { .. } => "oracle_cap",
            HjbError::NotContractive(_) => "not_contractive",
            HjbError::UnknownReference(_) => "unknown_reference",
            HjbError::Schedule(_) => "schedule",
            HjbError::Expression { .. } => "expression",
            HjbError::Config(_) => "config",
            HjbError::Io(_) => "io",
            HjbError::Json(_) => "json",
            HjbError::Csv(_) => "csv",
        }
    }
}
