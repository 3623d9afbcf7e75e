//! Counterfactual ranker evaluation with inverse propensity scoring.
//!
//! For a challenger's scores, each logged contact contributes
//! `lambda(rank of the doc under the challenger) / theta[displayed position]`,
//! averaged over queries (sessions). Under the position-based model this is
//! an unbiased estimate of the challenger's relevance-weighted metric.

use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{derive_seed, Exec};
use crate::types::{DocumentId, Position, PropensityTable, QueryId, SearchSession};

#[derive(Debug, Error, PartialEq)]
pub enum IpsError {
    #[error("no score for query {query}, document {doc}")]
    MissingScore { query: String, doc: String },
    #[error("propensity table does not cover position {0}")]
    UncoveredPosition(Position),
    #[error("log has no queries")]
    NoQueries,
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaKind {
    /// Average relevance position: `lambda(k) = k`.
    Arp,
    /// Discounted cumulative gain: `lambda(k) = 1 / log2(k + 1)`.
    Dcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

impl LambdaKind {
    pub fn weight(self, rank: Position) -> f64 {
        match self {
            LambdaKind::Arp => rank as f64,
            LambdaKind::Dcg => 1.0 / (rank as f64 + 1.0).log2(),
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            LambdaKind::Arp => Direction::LowerIsBetter,
            LambdaKind::Dcg => Direction::HigherIsBetter,
        }
    }
}

/// Challenger scores per (query, document).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankerScores {
    scores: HashMap<(QueryId, DocumentId), f64>,
}

impl RankerScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: QueryId, doc: DocumentId, score: f64) {
        self.scores.insert((query, doc), score);
    }

    pub fn get(&self, query: &QueryId, doc: &DocumentId) -> Option<f64> {
        // avoids cloning the key on every lookup
        self.scores.get(&(query.clone(), doc.clone())).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rank (1-based) of each slot's document when the session's documents
    /// are re-sorted by descending score; ties break by document id.
    pub fn ranks(&self, session: &SearchSession) -> Result<Vec<Position>, IpsError> {
        let scored = session
            .slots()
            .iter()
            .map(|s| {
                self.get(session.query(), &s.doc).ok_or_else(|| IpsError::MissingScore {
                    query: session.query().to_string(),
                    doc: s.doc.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let slots = session.slots();
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by(|&a, &b| scored[b].total_cmp(&scored[a]).then_with(|| slots[a].doc.cmp(&slots[b].doc)));
        let mut ranks = vec![0; slots.len()];
        for (r, i) in order.into_iter().enumerate() {
            ranks[i] = r as Position + 1;
        }
        Ok(ranks)
    }
}

impl FromIterator<(QueryId, DocumentId, f64)> for RankerScores {
    fn from_iter<T: IntoIterator<Item = (QueryId, DocumentId, f64)>>(iter: T) -> Self {
        Self { scores: iter.into_iter().map(|(q, d, s)| ((q, d), s)).collect() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpsOptions {
    /// Propensities below this floor are raised to it. Off by default.
    pub clip_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub lambda: LambdaKind,
    pub direction: Direction,
    pub n_queries: u64,
    pub n_contacts: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl MetricValue {
    fn from_sum(sum: f64, lambda: LambdaKind, n_queries: u64, n_contacts: u64) -> Result<Self, IpsError> {
        if n_queries == 0 {
            return Err(IpsError::NoQueries);
        }
        let warning = (n_contacts == 0).then(|| "log contains no contacts".to_string());
        if warning.is_some() {
            tracing::warn!("evaluating a log with no contacts");
        }
        Ok(Self {
            value: sum / n_queries as f64,
            lambda,
            direction: lambda.direction(),
            n_queries,
            n_contacts,
            warning,
        })
    }
}

/// Sum of IPS terms for one query, and its number of contacts.
pub fn ips_query_term(
    session: &SearchSession,
    scores: &RankerScores,
    theta: &PropensityTable,
    lambda: LambdaKind,
    opts: &IpsOptions,
) -> Result<(f64, u64), IpsError> {
    if !session.any_contact() {
        return Ok((0.0, 0));
    }
    let ranks = scores.ranks(session)?;
    let mut sum = 0.0;
    let mut contacts = 0;
    for (slot, rank) in session.slots().iter().zip(ranks) {
        if !slot.contacted {
            continue;
        }
        let k = slot.displayed_position;
        let mut t = theta.get(k).ok_or(IpsError::UncoveredPosition(k))?;
        if let Some(floor) = opts.clip_floor {
            t = t.max(floor);
        }
        sum += lambda.weight(rank) / t;
        contacts += 1;
    }
    Ok((sum, contacts))
}

/// IPS estimate of the challenger's metric over a log. Terms are added in
/// log order, so the result is bit-stable for a given log.
pub fn ips_loss<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    scores: &RankerScores,
    theta: &PropensityTable,
    lambda: LambdaKind,
) -> Result<MetricValue, IpsError> {
    ips_loss_with(sessions, scores, theta, lambda, &IpsOptions::default())
}

pub fn ips_loss_with<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    scores: &RankerScores,
    theta: &PropensityTable,
    lambda: LambdaKind,
    opts: &IpsOptions,
) -> Result<MetricValue, IpsError> {
    let mut acc = MetricAccumulator::default();
    for s in sessions {
        let (term, contacts) = ips_query_term(s, scores, theta, lambda, opts)?;
        acc.push(term, contacts);
    }
    acc.finish(lambda)
}

/// Running sum for streamed evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricAccumulator {
    sum: f64,
    queries: u64,
    contacts: u64,
}

impl MetricAccumulator {
    pub fn push(&mut self, term: f64, contacts: u64) {
        self.sum += term;
        self.queries += 1;
        self.contacts += contacts;
    }

    pub fn finish(&self, lambda: LambdaKind) -> Result<MetricValue, IpsError> {
        MetricValue::from_sum(self.sum, lambda, self.queries, self.contacts)
    }
}

/// Unweighted lambda of each contact at its displayed position.
pub fn on_policy_term(session: &SearchSession, lambda: LambdaKind) -> (f64, u64) {
    session
        .slots()
        .iter()
        .filter(|s| s.contacted)
        .fold((0.0, 0), |(sum, n), s| (sum + lambda.weight(s.displayed_position), n + 1))
}

/// The metric of the policy that actually produced the log.
pub fn on_policy_metric<'a>(
    sessions: impl IntoIterator<Item = &'a SearchSession>,
    lambda: LambdaKind,
) -> Result<MetricValue, IpsError> {
    let mut acc = MetricAccumulator::default();
    for s in sessions {
        let (term, contacts) = on_policy_term(s, lambda);
        acc.push(term, contacts);
    }
    acc.finish(lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub estimate_a: MetricValue,
    pub estimate_b: MetricValue,
    /// `estimate_a - estimate_b`.
    pub delta: f64,
    /// Two-sided paired-bootstrap p-value for `delta = 0`.
    pub p_value: f64,
    pub replications: usize,
}

/// Paired bootstrap over queries of the difference between two challengers.
///
/// Each replication resamples query indices with replacement and recomputes
/// the mean difference; the p-value is
/// `min(1, 2 * min(#{delta* <= 0} + 1, #{delta* >= 0} + 1) / (B + 1))`.
#[allow(clippy::too_many_arguments)]
pub fn compare_rankers(
    sessions: &[SearchSession],
    scores_a: &RankerScores,
    scores_b: &RankerScores,
    theta: &PropensityTable,
    lambda: LambdaKind,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Comparison, IpsError> {
    if replications < 100 {
        return Err(IpsError::Precondition(format!("need at least 100 replications, got {replications}")));
    }
    let opts = IpsOptions::default();
    let terms = |scores: &RankerScores| {
        exec.map_slice(sessions, |s| ips_query_term(s, scores, theta, lambda, &opts))
            .into_iter()
            .collect::<Result<Vec<(f64, u64)>, IpsError>>()
    };
    let a = terms(scores_a)?;
    let b = terms(scores_b)?;
    let summarize = |t: &[(f64, u64)]| {
        let mut acc = MetricAccumulator::default();
        t.iter().for_each(|&(x, c)| acc.push(x, c));
        acc.finish(lambda)
    };
    let estimate_a = summarize(&a)?;
    let estimate_b = summarize(&b)?;
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.0 - y.0).collect();
    let n = diffs.len();
    let boot = exec.map_indexed(replications, |r| {
        let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(seed, r as u64));
        let total: f64 = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum();
        total / n as f64
    });
    let le = boot.iter().filter(|&&d| d <= 0.0).count();
    let ge = boot.iter().filter(|&&d| d >= 0.0).count();
    let p_value = (2.0 * (le.min(ge) + 1) as f64 / (replications + 1) as f64).min(1.0);
    Ok(Comparison { delta: estimate_a.value - estimate_b.value, estimate_a, estimate_b, p_value, replications })
}
