use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The previous objective value was exactly zero, so the relative change is undefined.
    #[error("singular objective: previous objective value is zero")]
    SingularObjective,

    #[error("rank-deficient normal equations for a degree-{degree} fit")]
    RankDeficient { degree: usize },

    #[error("degenerate component {component}: total responsibility is zero")]
    DegenerateComponent { component: usize },

    #[error("unknown instance type '{name}' (available: {available})")]
    UnknownInstance { name: String, available: String },

    #[error("training failed for groups {groups:?}: {reason}")]
    Training { groups: Vec<usize>, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::UnknownInstance { .. } => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Numeric(_)
            | Error::SingularObjective
            | Error::RankDeficient { .. }
            | Error::DegenerateComponent { .. }
            | Error::Training { .. } => 4,
        }
    }
}
