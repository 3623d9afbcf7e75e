//! Rank-change contact forecasts. Under the position-based model relevance
//! does not depend on position, so contacts scale by the propensity ratio.
//! No competitive displacement is modeled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{InterfaceId, Position, PropensityTable};

pub const MODEL: &str = "pbm-separable";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRequest {
    pub interface: InterfaceId,
    pub current_position: Position,
    pub candidate_position: Position,
    /// Contacts per period at the current position.
    pub observed_contacts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResponse {
    pub forecast_contacts: f64,
    pub multiplier: f64,
    /// Interval on `forecast_contacts`.
    pub ci: (f64, f64),
    pub model: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("propensity table for {interface} does not cover position {position}")]
    UncoveredPosition { interface: String, position: Position },
    #[error("observed_contacts must be a finite value >= 0, got {0}")]
    NegativeContacts(f64),
    #[error("table is for interface {table}, request names {request}")]
    InterfaceMismatch { table: String, request: String },
}

impl ScenarioError {
    /// HTTP status class of the error.
    pub fn status(&self) -> u16 {
        match self {
            ScenarioError::UncoveredPosition { .. } | ScenarioError::InterfaceMismatch { .. } => 404,
            ScenarioError::NegativeContacts(_) => 400,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            ScenarioError::UncoveredPosition { .. } => "uncovered_position",
            ScenarioError::NegativeContacts(_) => "invalid_contacts",
            ScenarioError::InterfaceMismatch { .. } => "unknown_interface",
        }
    }
}

/// `multiplier = theta[candidate] / theta[current]`. The interval pairs the
/// lowest candidate bound with the highest current bound and vice versa.
pub fn forecast(req: &ScenarioRequest, table: &PropensityTable) -> Result<ScenarioResponse, ScenarioError> {
    if req.interface != table.interface {
        return Err(ScenarioError::InterfaceMismatch {
            table: table.interface.to_string(),
            request: req.interface.to_string(),
        });
    }
    if !(req.observed_contacts.is_finite() && req.observed_contacts >= 0.0) {
        return Err(ScenarioError::NegativeContacts(req.observed_contacts));
    }
    let lookup = |position| {
        let theta = table.get(position);
        let ci = table.interval(position);
        theta
            .zip(ci)
            .ok_or_else(|| ScenarioError::UncoveredPosition { interface: table.interface.to_string(), position })
    };
    let (t_cur, (lo_cur, hi_cur)) = lookup(req.current_position)?;
    let (t_cand, (lo_cand, hi_cand)) = lookup(req.candidate_position)?;
    let multiplier = t_cand / t_cur;
    let forecast_contacts = req.observed_contacts * multiplier;
    let ci = if req.current_position == req.candidate_position {
        (forecast_contacts, forecast_contacts)
    } else {
        (req.observed_contacts * lo_cand / hi_cur, req.observed_contacts * hi_cand / lo_cur)
    };
    Ok(ScenarioResponse { forecast_contacts, multiplier, ci, model: MODEL.to_string() })
}
