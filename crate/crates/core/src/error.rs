use thiserror::Error;

/// Errors raised while building flows or running checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is not on the grid [{t_start}, {t_end}] with step {dt}")]
    OffGrid {
        t: f64,
        t_start: f64,
        t_end: f64,
        dt: f64,
    },

    #[error("times out of order: expected s < t, got s = {s}, t = {t}")]
    Ordering { s: f64, t: f64 },

    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("d_t is not a metric at t = {t}: d({x},{z}) = {dxz} > d({x},{y}) + d({y},{z}) = {via}")]
    Triangle {
        t: f64,
        x: usize,
        y: usize,
        z: usize,
        dxz: f64,
        via: f64,
    },

    #[error("invalid structure: {0}")]
    Structure(String),

    #[error("circle discretization needs at least 16 points, got {0}")]
    Resolution(usize),

    #[error("marginals are unbalanced: masses {0} and {1}")]
    Marginals(f64, f64),

    #[error("time window violated: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("transport solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
