use thiserror::Error;

/// Errors raised by the numerical kernels and the file/config layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("table range exceeded: requested b = {requested}, table covers [{lo}, {hi}]")]
    TableRange { requested: f64, lo: f64, hi: f64 },
    #[error("table covers |b| in [{lo}, {hi}] but the scan needs [{need_lo}, {need_hi}]")]
    TableCoverage { need_lo: f64, need_hi: f64, lo: f64, hi: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
