//! Behavior diagnostics over a log: contact rates by position, multi-contact
//! and reverse-order contact rates, and the cost of the randomization program.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::stats::two_proportion_pooled;
use crate::types::{Position, SearchSession, VisitorId};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PositionStats {
    pub impressions: u64,
    pub views: u64,
    pub contacts: u64,
}

impl PositionStats {
    pub fn contact_rate(&self) -> f64 {
        self.contacts as f64 / self.impressions.max(1) as f64
    }

    pub fn view_rate(&self) -> f64 {
        self.views as f64 / self.impressions.max(1) as f64
    }
}

/// Streaming tallies for the observations that refute a literal cascade model.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BehaviorDiagnostics {
    pub sessions: u64,
    pub sessions_with_contact: u64,
    /// Sessions with at least two contacts.
    pub multi_contact: u64,
    /// Sessions with exactly two contacts.
    pub two_contact: u64,
    /// Two-contact sessions where the lower displayed slot was contacted first.
    pub lower_first: u64,
    /// Sessions with no contact that nevertheless left part of the list unviewed.
    pub abandoned_partial_view: u64,
    /// Sessions with at least one view but no contact.
    pub viewed_without_contact: u64,
    /// Contacted sessions whose last contact was not on the last viewed slot.
    pub contact_above_last_view: u64,
    pub by_position: BTreeMap<Position, PositionStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversalRate {
    /// `None` when the log has no two-contact session.
    pub rate: Option<f64>,
    pub two_contact_sessions: u64,
    pub lower_first: u64,
}

impl BehaviorDiagnostics {
    pub fn add(&mut self, session: &SearchSession) {
        self.sessions += 1;
        let slots = session.slots();
        let contacts: Vec<_> = slots.iter().filter(|s| s.contacted).collect();
        let any_view = slots.iter().any(|s| s.viewed);
        match contacts.len() {
            0 => {
                if slots.iter().any(|s| !s.viewed) {
                    self.abandoned_partial_view += 1;
                }
                if any_view {
                    self.viewed_without_contact += 1;
                }
            }
            n => {
                self.sessions_with_contact += 1;
                if n >= 2 {
                    self.multi_contact += 1;
                }
                if n == 2 {
                    self.two_contact += 1;
                    // slots are sorted by displayed position, so contacts[1] is the lower one
                    if contacts[1].contact_order == Some(1) {
                        self.lower_first += 1;
                    }
                }
                let last_contact = contacts.last().unwrap().displayed_position;
                let last_view = slots.iter().rev().find(|s| s.viewed).map(|s| s.displayed_position);
                if last_view.is_some_and(|v| v > last_contact) {
                    self.contact_above_last_view += 1;
                }
            }
        }
        for s in slots {
            let e = self.by_position.entry(s.displayed_position).or_default();
            e.impressions += 1;
            e.views += s.viewed as u64;
            e.contacts += s.contacted as u64;
        }
    }

    pub fn merge(mut self, other: BehaviorDiagnostics) -> Self {
        self.sessions += other.sessions;
        self.sessions_with_contact += other.sessions_with_contact;
        self.multi_contact += other.multi_contact;
        self.two_contact += other.two_contact;
        self.lower_first += other.lower_first;
        self.abandoned_partial_view += other.abandoned_partial_view;
        self.viewed_without_contact += other.viewed_without_contact;
        self.contact_above_last_view += other.contact_above_last_view;
        for (k, v) in other.by_position {
            let e = self.by_position.entry(k).or_default();
            e.impressions += v.impressions;
            e.views += v.views;
            e.contacts += v.contacts;
        }
        self
    }

    pub fn reversal_rate(&self) -> ReversalRate {
        ReversalRate {
            rate: (self.two_contact > 0).then(|| self.lower_first as f64 / self.two_contact as f64),
            two_contact_sessions: self.two_contact,
            lower_first: self.lower_first,
        }
    }
}

/// Among sessions with exactly two contacts, the share where the lower
/// displayed contact came first.
pub fn reversal_rate<'a>(sessions: impl IntoIterator<Item = &'a SearchSession>) -> ReversalRate {
    let mut d = BehaviorDiagnostics::default();
    sessions.into_iter().for_each(|s| d.add(s));
    d.reversal_rate()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMetric {
    pub metric: &'static str,
    pub treated_rate: f64,
    pub holdout_rate: f64,
    /// `(treated - holdout) / holdout`.
    pub relative_delta: f64,
    /// Pooled two-proportion two-sided z-test.
    pub p_value: f64,
    pub n_treated: u64,
    pub n_holdout: u64,
}

/// Visitor-level outcome tallies, treated (any swap arm, applied or not) vs holdout.
#[derive(Debug, Clone, Default)]
pub struct ProgramCostAccumulator {
    /// visitor -> (treated, contacted at least once)
    visitors: HashMap<VisitorId, (bool, bool)>,
}

impl ProgramCostAccumulator {
    /// A visitor keeps the population of their first session.
    pub fn add(&mut self, session: &SearchSession) {
        let e = self.visitors.entry(session.visitor().clone()).or_insert((session.arm().arm.is_swap(), false));
        e.1 |= session.any_contact();
    }

    pub fn merge(mut self, other: ProgramCostAccumulator) -> Self {
        for (v, (treated, contacted)) in other.visitors {
            let e = self.visitors.entry(v).or_insert((treated, false));
            e.1 |= contacted;
        }
        self
    }

    pub fn finish(&self) -> Result<Vec<CostMetric>, EstimatorError> {
        let (mut nt, mut xt, mut nh, mut xh) = (0u64, 0u64, 0u64, 0u64);
        for &(treated, contacted) in self.visitors.values() {
            if treated {
                nt += 1;
                xt += contacted as u64;
            } else {
                nh += 1;
                xh += contacted as u64;
            }
        }
        if nt == 0 {
            return Err(EstimatorError::MissingPopulation("treated"));
        }
        if nh == 0 {
            return Err(EstimatorError::MissingPopulation("holdout"));
        }
        let treated_rate = xt as f64 / nt as f64;
        let holdout_rate = xh as f64 / nh as f64;
        let relative_delta = if holdout_rate > 0.0 { (treated_rate - holdout_rate) / holdout_rate } else { 0.0 };
        let (_, p_value) = two_proportion_pooled(xt, nt, xh, nh);
        Ok(vec![CostMetric {
            metric: "visitors_with_contact",
            treated_rate,
            holdout_rate,
            relative_delta,
            p_value,
            n_treated: nt,
            n_holdout: nh,
        }])
    }
}

/// Relative change and significance of the rate of visitors with at least
/// one contact, randomized traffic vs holdout.
pub fn program_cost<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
) -> Result<Vec<CostMetric>, EstimatorError> {
    let mut acc = ProgramCostAccumulator::default();
    sessions.into_iter().for_each(|s| acc.add(s));
    acc.finish()
}
