use std::fmt;

use rankprop::coec::CoecError;
use rankprop::estimator::EstimatorError;
use rankprop::ips::IpsError;
use rankprop::log::LogError;
use rankprop::power::PowerError;
use rankprop::scenario::ScenarioError;
use rankprop::sim::SimError;
use rankprop::TableError;

/// A failure with a stable, machine-parseable class.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub class: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Self { class, message: message.into() }
    }

    /// `error[<class>]: <message>` on one line.
    pub fn line(&self) -> String {
        let msg: String = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.class)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for Failure {}

pub type CliResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn class(self, class: &'static str) -> CliResult<T>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn class(self, class: &'static str) -> CliResult<T> {
        self.map_err(|e| Failure::new(class, e.to_string()))
    }
}

impl From<LogError> for Failure {
    fn from(e: LogError) -> Self {
        let class = match e {
            LogError::Io { .. } => "io",
            LogError::RejectRate { .. } => "reject_rate",
        };
        Failure::new(class, e.to_string())
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        Failure::new(e.class(), e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::new("config", e.to_string())
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        Failure::new("artifact", e.to_string())
    }
}

impl From<CoecError> for Failure {
    fn from(e: CoecError) -> Self {
        let class = match e {
            CoecError::UncoveredPosition(_) => "uncovered_position",
            _ => "precondition",
        };
        Failure::new(class, e.to_string())
    }
}

impl From<IpsError> for Failure {
    fn from(e: IpsError) -> Self {
        let class = match e {
            IpsError::MissingScore { .. } => "missing_score",
            IpsError::UncoveredPosition(_) => "uncovered_position",
            IpsError::NoQueries => "empty_log",
            IpsError::Precondition(_) => "precondition",
        };
        Failure::new(class, e.to_string())
    }
}

impl From<PowerError> for Failure {
    fn from(e: PowerError) -> Self {
        Failure::new("precondition", e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::new(e.class(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new("csv", e.to_string())
    }
}
