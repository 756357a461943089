use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("behavior {behavior}: {rule}")]
    Validation { behavior: String, rule: String },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("empty action sequence")]
    EmptySequence,
    #[error("cut index {cut} outside the allowed range {lo}..={hi}")]
    CutOutOfRange { cut: usize, lo: usize, hi: usize },
    #[error("states are not similar: distance {distance} > {epsilon}")]
    NotSimilar { distance: f64, epsilon: f64 },
    #[error("result would contain reward-sequence action {action} of {behavior}")]
    RewardLeak { behavior: String, action: String },
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("unknown behavior {0}")]
    UnknownBehavior(String),
    #[error("invalid timing window: t_B1 = {t_b1} must be < t_B2 = {t_b2}")]
    InvalidWindow { t_b1: i64, t_b2: i64 },
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("state is not visited by both occupancy measures")]
    UnsupportedState,
    #[error("evaluation failed for ({row}, {col}): {message}")]
    EvaluationFailure {
        row: String,
        col: String,
        message: String,
    },
    #[error("game has an empty or unbounded strategy space")]
    UnboundedGame,
    #[error("policy pool is empty")]
    EmptyPool,
    #[error("invalid mixed strategy: {0}")]
    InvalidProfile(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("snapshot failure: {0}")]
    Snapshot(String),
    #[error("linear program failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake-case name of the variant, for machine-readable records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Validation { .. } => "validation",
            Error::Dimension { .. } => "dimension",
            Error::EmptySequence => "empty_sequence",
            Error::CutOutOfRange { .. } => "cut_out_of_range",
            Error::NotSimilar { .. } => "not_similar",
            Error::RewardLeak { .. } => "reward_leak",
            Error::UnknownAction(_) => "unknown_action",
            Error::UnknownBehavior(_) => "unknown_behavior",
            Error::InvalidWindow { .. } => "invalid_window",
            Error::WindowMismatch(_) => "window_mismatch",
            Error::UnsupportedState => "unsupported_state",
            Error::EvaluationFailure { .. } => "evaluation_failure",
            Error::UnboundedGame => "unbounded_game",
            Error::EmptyPool => "empty_pool",
            Error::InvalidProfile(_) => "invalid_profile",
            Error::Config(_) => "config",
            Error::UnknownAgent(_) => "unknown_agent",
            Error::Snapshot(_) => "snapshot",
            Error::Solver(_) => "solver",
        }
    }
}
