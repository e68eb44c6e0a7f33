use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate schedule at row {row}: L_n^a = {power:.4} < 5 gives ell_n = {ell}")]
    DegenerateSchedule { row: usize, power: f64, ell: u128 },

    #[error("schedule overflow: L_{row} does not fit in 128 bits")]
    ScheduleOverflow { row: usize },

    #[error("1/epsilon = {inverse} outside the schedule span [{lower}, {upper})")]
    OutOfRange { inverse: f64, lower: f64, upper: f64 },

    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("invalid enlargement delta {delta}: must satisfy 0 < delta < {limit}")]
    InvalidDelta { delta: f64, limit: f64 },

    #[error("invalid radii: {0}")]
    InvalidRadii(String),

    #[error("path not recorded on the required grid: {0}")]
    NotRecorded(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("{fraction:.4} of paths hit the horizon before exiting")]
    HorizonDominated { fraction: f64 },

    #[error("rate fit unstable: {0}")]
    FitUnstable(String),

    #[error("need at least {needed} chains, got {got}")]
    TooFewChains { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
