use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A query point sits on top of a radiating element, where the
    /// free-space amplitude is unbounded.
    #[error("singular geometry: point {point:?} coincides with element {element}")]
    SingularGeometry { point: [f64; 3], element: usize },

    #[error("degenerate channel: all gains are zero")]
    DegenerateChannel,

    #[error("index {index} out of range for {len} users")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("scenario shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{kind} at `{path}`: {message}")]
    Scenario {
        kind: ScenarioErrorKind,
        path: String,
        message: String,
    },

    #[error("empty search range [{start}, {stop}]")]
    EmptySearchRange { start: f64, stop: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioErrorKind {
    MissingKey,
    UnknownKey,
    OutOfRange,
    Malformed,
}

impl std::fmt::Display for ScenarioErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioErrorKind::MissingKey => "missing key",
            ScenarioErrorKind::UnknownKey => "unknown key",
            ScenarioErrorKind::OutOfRange => "range error",
            ScenarioErrorKind::Malformed => "malformed document",
        };
        f.write_str(s)
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn range(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            kind: ScenarioErrorKind::OutOfRange,
            path: path.into(),
            message: message.into(),
        }
    }

    /// Kind of a scenario error, if this is one.
    pub fn scenario_kind(&self) -> Option<ScenarioErrorKind> {
        match self {
            Error::Scenario { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
