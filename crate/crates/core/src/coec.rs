//! Historical contact-rate features per document: the raw rate and clicks
//! over expected clicks (COEC), which divides contacts by the propensity mass
//! of the positions the document was shown at.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::types::{DocumentId, Position, ProfessionalHistory, PropensityTable, SearchSession};

#[derive(Debug, Error, PartialEq)]
pub enum CoecError {
    #[error("history for {0} is empty")]
    EmptyHistory(String),
    #[error("propensity table does not cover position {0}")]
    UncoveredPosition(Position),
    #[error("zero propensity mass for {0}")]
    ZeroMass(String),
}

pub fn raw_rate(history: &ProfessionalHistory) -> Result<f64, CoecError> {
    let events = history.events();
    if events.is_empty() {
        return Err(CoecError::EmptyHistory(history.doc.to_string()));
    }
    Ok(events.iter().filter(|e| e.contacted).count() as f64 / events.len() as f64)
}

/// `sum(contacts) / sum(theta[position])` over the document's impressions.
pub fn coec(history: &ProfessionalHistory, theta: &PropensityTable) -> Result<f64, CoecError> {
    let events = history.events();
    if events.is_empty() {
        return Err(CoecError::EmptyHistory(history.doc.to_string()));
    }
    let mut mass = 0.0;
    let mut contacts = 0u64;
    for e in events {
        mass += theta.get(e.position).ok_or(CoecError::UncoveredPosition(e.position))?;
        contacts += e.contacted as u64;
    }
    if mass <= 0.0 {
        return Err(CoecError::ZeroMass(history.doc.to_string()));
    }
    Ok(contacts as f64 / mass)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub doc: DocumentId,
    pub raw_rate: f64,
    pub coec: f64,
    pub n_impressions: u64,
    pub contacts: u64,
    pub sum_theta: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DocTally {
    n: u64,
    contacts: u64,
    sum_theta: f64,
}

/// Folds sessions into per-document tallies. Impressions are counted at the
/// displayed position.
#[derive(Debug, Clone)]
pub struct FeatureAccumulator<'t> {
    theta: &'t PropensityTable,
    docs: BTreeMap<DocumentId, DocTally>,
}

impl<'t> FeatureAccumulator<'t> {
    pub fn new(theta: &'t PropensityTable) -> Self {
        Self { theta, docs: BTreeMap::new() }
    }

    pub fn add(&mut self, session: &SearchSession) -> Result<(), CoecError> {
        for s in session.slots() {
            let t = self.theta.get(s.displayed_position).ok_or(CoecError::UncoveredPosition(s.displayed_position))?;
            let e = self.docs.entry(s.doc.clone()).or_default();
            e.n += 1;
            e.contacts += s.contacted as u64;
            e.sum_theta += t;
        }
        Ok(())
    }

    /// Rows sorted by document id.
    pub fn finish(self) -> Vec<FeatureRow> {
        self.docs
            .into_iter()
            .map(|(doc, t)| FeatureRow {
                doc,
                raw_rate: t.contacts as f64 / t.n as f64,
                coec: t.contacts as f64 / t.sum_theta,
                n_impressions: t.n,
                contacts: t.contacts,
                sum_theta: t.sum_theta,
            })
            .collect()
    }
}

/// One row per document appearing in the log.
pub fn build_features<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    theta: &PropensityTable,
) -> Result<Vec<FeatureRow>, CoecError> {
    let mut acc = FeatureAccumulator::new(theta);
    for s in sessions {
        acc.add(s)?;
    }
    Ok(acc.finish())
}
