use thiserror::Error;

/// Errors produced by the forecasting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-positive demand {value} for series {id} at {year}-{month:02}")]
    NonPositiveDemand {
        id: String,
        year: i32,
        month: u32,
        value: f64,
    },
    #[error("calendar gap in series {id}: expected {expected}, found {found}")]
    CalendarGap {
        id: String,
        expected: String,
        found: String,
    },
    #[error("duplicate observation for series {id} at {year}-{month:02}")]
    DuplicateObservation { id: String, year: i32, month: u32 },
    #[error("series {id} does not end at the common end month {common_end}")]
    MisalignedEnd { id: String, common_end: String },
    #[error("invalid month {0} (expected 1-12)")]
    InvalidMonth(u32),
    #[error("series {id} is too short: {len} months, need at least {required}")]
    SeriesTooShort {
        id: String,
        len: usize,
        required: usize,
    },
    #[error("duplicate series id {0}")]
    DuplicateSeries(String),
    #[error("empty collection")]
    EmptyCollection,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("variable does not belong to this tape")]
    ForeignVariable,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-positive argument: {0}")]
    NonPositive(String),
    #[error("percentage error undefined for a zero actual value in {0}")]
    ZeroActual(String),
    #[error("unknown series {0}")]
    UnknownSeries(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("training failed in run {run}, pool {pool}: {source}")]
    Member {
        run: usize,
        pool: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
