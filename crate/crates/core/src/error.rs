use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("population must be at least 2, got {0}")]
    InvalidPopulation(f64),

    #[error("invalid epidemiological parameters: {0}")]
    InvalidParams(String),

    #[error("transmission denominator N-D-Q-H is non-positive ({value}) on day {day}")]
    DenominatorNonpositive { day: i64, value: f64 },

    #[error("simulation failed on day {day}: {source}")]
    Simulation {
        day: i64,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("date {date} (day {day}) lies outside the parameter schedule")]
    DateOutOfSchedule { date: NaiveDate, day: i64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("control sequence has {got} entries but {needed} days were requested")]
    ControlTooShort { got: usize, needed: usize },

    #[error("malformed mobility CSV: {0}")]
    MalformedCsv(String),

    #[error("region {0:?} not found in mobility data")]
    RegionNotFound(String),

    #[error("mobility series has a gap: {after} is followed by {next}")]
    GapInDates { after: NaiveDate, next: NaiveDate },

    #[error("regression needs at least {needed} observations, got {got}")]
    InsufficientObservations { got: usize, needed: usize },

    #[error("normal-equations matrix is rank deficient (pivot {pivot:e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("ratio objective requires the uncontrolled companion ensemble")]
    UncontrolledRunMissing,

    #[error("invalid MPC configuration: {0}")]
    InvalidMpcConfig(String),

    #[error("no feasible policy found in window {window}; best violation {violation:e}")]
    NoFeasiblePoint { window: usize, violation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps `self` with the day on which a trajectory aborted.
    pub fn at_day(self, day: i64) -> Self {
        Error::Simulation {
            day,
            source: Box::new(self),
        }
    }

    pub fn in_scenario(self, scenario: usize) -> Self {
        Error::Scenario {
            scenario,
            source: Box::new(self),
        }
    }

    pub fn in_window(self, window: usize) -> Self {
        Error::Window {
            window,
            source: Box::new(self),
        }
    }

    /// The innermost error, with day/scenario/window context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Simulation { source, .. }
            | Error::Scenario { source, .. }
            | Error::Window { source, .. } => source.root(),
            other => other,
        }
    }
}
