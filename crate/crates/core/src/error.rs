use thiserror::Error;

/// Errors raised by model construction, stepping and the experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration error at t = {t:.6} s: {detail}")]
    Integration { t: f64, detail: String },

    #[error("step size {dt:e} s exceeds the stability limit {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("initial state not settled: {0}; use a longer warm-up")]
    Unsettled(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(
        "calibration failed: worst anchor `{anchor}` residual {residual:.4} exceeds {tolerance:.4}"
    )]
    Calibration {
        anchor: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("calibration `{id}` not found: {hint}")]
    CalibrationMissing { id: String, hint: String },

    #[error("no feasible design: {0}")]
    Infeasible(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
