use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("integration failed at t = {t:.6} s: {reason}")]
    Integration { t: f64, reason: String },

    #[error("discretization failed: {0}")]
    Discretization(String),

    #[error("stability margins undefined: {0}")]
    Margins(String),

    #[error("unsupported operating quadrant: p_ref = {p_ref} W (charging requires p_ref > 0)")]
    UnsupportedQuadrant { p_ref: f64 },

    #[error("singular grid voltage: v_rms = {0} V")]
    SingularVoltage(f64),

    #[error("time went backwards: {t} s after {last} s")]
    Sequencing { t: f64, last: f64 },

    #[error("voltage threshold unavailable: {0}")]
    ThresholdUnavailable(String),

    #[error("feeder topology error: {0}")]
    Topology(String),

    #[error("power flow diverged after {iterations} iterations (last max |dV| = {last_change:.3e} pu)")]
    Divergence { iterations: usize, last_change: f64 },

    #[error("grid collapse at t = {t} s: {source}")]
    GridCollapse { t: f64, source: Box<Error> },

    #[error("controller fault at t = {t:.6} s: {reason}")]
    ControllerFault { t: f64, reason: String },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), reason: err.to_string() }
    }

    /// Process exit status for the CLI: 1 configuration, 2 numerical
    /// divergence, 3 controller fault.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Integration { .. } | Error::Divergence { .. } | Error::GridCollapse { .. } => 2,
            Error::ControllerFault { .. } => 3,
            _ => 1,
        }
    }
}
