//! Synthetic search logs under parameterized user-behavior models.
//!
//! Every model works on the displayed list and a catalog whose relevance is
//! the position-invariant probability that a document matches:
//!
//! * `pbm`: slot `k` is examined with probability `theta[k]`; an examined
//!   slot is contacted with probability `R(d)`. Contact order is a uniform
//!   random permutation of the contacted slots.
//! * `cascade`: top-down; every slot up to the first contact is viewed and
//!   the session ends at that contact.
//! * `dbn`: top-down; each slot is viewed and contacted with probability
//!   `R(d)`; after a contact the visitor stops with probability
//!   `satisfaction(d)`.
//! * `ubm`: top-down; slot `k` is examined with probability
//!   `gamma(k, k - last_contact)` (`last_contact = 0` before any contact),
//!   by default `theta[k] * delta^distance`.
//! * `trust_pbm`: like `pbm`, but an examined slot is contacted with
//!   probability `eps_plus[k]` when the relevance draw succeeds and
//!   `eps_minus[k]` otherwise, so perceived relevance depends on position.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{derive_seed, Exec};
use crate::log::serialize_session;
use crate::randpair::{apply_swap, assign_arm, AllocationPlan, PlanError};
use crate::types::*;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{param} does not cover position {position}")]
    UncoveredPosition { param: &'static str, position: Position },
    #[error("{param} value {value} is not a probability")]
    Probability { param: &'static str, value: f64 },
    #[error("no satisfaction probability for document {0}")]
    UnknownSatisfaction(String),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("document {0} listed twice")]
    DuplicateDoc(String),
    #[error("ranker references unknown or missing document {0}")]
    RankerDoc(String),
    #[error("n_sessions must be positive")]
    NoSessions,
    #[error("invalid list length range {min}..={max}")]
    ListLength { min: usize, max: usize },
    #[error("invalid noise_sd {0}")]
    Noise(f64),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn check_probability(param: &'static str, value: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SimError::Probability { param, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogDoc {
    pub doc_id: DocumentId,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub docs: Vec<CatalogDoc>,
}

impl Catalog {
    pub fn new(docs: Vec<CatalogDoc>) -> Result<Self, SimError> {
        let c = Self { docs };
        c.validate()?;
        Ok(c)
    }

    /// Docs named `d1..dN` with the given relevances.
    pub fn from_relevances(relevances: &[f64]) -> Result<Self, SimError> {
        Self::new(
            relevances
                .iter()
                .enumerate()
                .map(|(i, &relevance)| CatalogDoc {
                    doc_id: DocumentId::new(format!("d{}", i + 1)).unwrap(),
                    relevance,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.docs.is_empty() {
            return Err(SimError::EmptyCatalog);
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.docs {
            check_probability("relevance", d.relevance)?;
            if !seen.insert(&d.doc_id) {
                return Err(SimError::DuplicateDoc(d.doc_id.to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Logging policy used to produce the natural order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankerStub {
    ByRelevance,
    /// Sorts by `relevance + N(0, noise_sd)`, redrawn per session.
    ByNoisyRelevance {
        noise_sd: f64,
    },
    FixedPermutation {
        order: Vec<DocumentId>,
    },
    ByScoreTable {
        scores: BTreeMap<DocumentId, f64>,
    },
}

impl RankerStub {
    fn validate(&self, catalog: &Catalog) -> Result<(), SimError> {
        match self {
            RankerStub::ByRelevance => Ok(()),
            RankerStub::ByNoisyRelevance { noise_sd } => {
                if noise_sd.is_finite() && *noise_sd >= 0.0 {
                    Ok(())
                } else {
                    Err(SimError::Noise(*noise_sd))
                }
            }
            RankerStub::FixedPermutation { order } => {
                let index: HashMap<&DocumentId, usize> = order.iter().enumerate().map(|(i, d)| (d, i)).collect();
                if index.len() != order.len() || order.len() != catalog.len() {
                    return Err(SimError::RankerDoc("permutation size mismatch".into()));
                }
                match catalog.docs.iter().find(|d| !index.contains_key(&d.doc_id)) {
                    Some(d) => Err(SimError::RankerDoc(d.doc_id.to_string())),
                    None => Ok(()),
                }
            }
            RankerStub::ByScoreTable { scores } => {
                match catalog.docs.iter().find(|d| !scores.contains_key(&d.doc_id)) {
                    Some(d) => Err(SimError::RankerDoc(d.doc_id.to_string())),
                    None => Ok(()),
                }
            }
        }
    }

    /// Catalog indices in ranked order. Score ties break by document id.
    pub fn rank<R: Rng + ?Sized>(&self, catalog: &Catalog, rng: &mut R) -> Vec<usize> {
        let by_score = |scores: Vec<f64>| {
            let mut idx: Vec<usize> = (0..catalog.len()).collect();
            idx.sort_by(|&a, &b| {
                scores[b].total_cmp(&scores[a]).then_with(|| catalog.docs[a].doc_id.cmp(&catalog.docs[b].doc_id))
            });
            idx
        };
        match self {
            RankerStub::ByRelevance => by_score(catalog.docs.iter().map(|d| d.relevance).collect()),
            RankerStub::ByNoisyRelevance { noise_sd } => {
                let noise = Normal::new(0.0, *noise_sd).expect("validated noise_sd");
                by_score(catalog.docs.iter().map(|d| d.relevance + noise.sample(rng)).collect())
            }
            RankerStub::FixedPermutation { order } => {
                let pos: HashMap<&DocumentId, usize> =
                    catalog.docs.iter().enumerate().map(|(i, d)| (&d.doc_id, i)).collect();
                order.iter().map(|d| pos[d]).collect()
            }
            RankerStub::ByScoreTable { scores } => by_score(catalog.docs.iter().map(|d| scores[&d.doc_id]).collect()),
        }
    }
}

/// A parameter indexed by position, given densely from position 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionCurve(pub Vec<f64>);

impl PositionCurve {
    pub fn get(&self, position: Position) -> Option<f64> {
        (position as usize).checked_sub(1).and_then(|i| self.0.get(i)).copied()
    }

    fn check(&self, param: &'static str, len: usize) -> Result<(), SimError> {
        if self.0.len() < len {
            return Err(SimError::UncoveredPosition { param, position: self.0.len() as Position + 1 });
        }
        self.0.iter().try_for_each(|&v| check_probability(param, v))
    }
}

impl From<Vec<f64>> for PositionCurve {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEntry {
    pub position: Position,
    pub distance: Position,
    pub value: f64,
}

fn default_delta() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorConfig {
    Pbm {
        theta: PositionCurve,
    },
    Cascade,
    Dbn {
        satisfaction: BTreeMap<DocumentId, f64>,
        /// Used for documents missing from `satisfaction`.
        #[serde(default)]
        default_satisfaction: Option<f64>,
    },
    Ubm {
        theta: PositionCurve,
        #[serde(default = "default_delta")]
        delta: f64,
        /// Explicit `gamma(position, distance)` values overriding `theta * delta^distance`.
        #[serde(default)]
        gamma: Vec<GammaEntry>,
    },
    TrustPbm {
        theta: PositionCurve,
        eps_plus: PositionCurve,
        eps_minus: PositionCurve,
    },
}

impl BehaviorConfig {
    pub fn pbm(theta: impl Into<Vec<f64>>) -> Self {
        BehaviorConfig::Pbm { theta: PositionCurve(theta.into()) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BehaviorConfig::Pbm { .. } => "pbm",
            BehaviorConfig::Cascade => "cascade",
            BehaviorConfig::Dbn { .. } => "dbn",
            BehaviorConfig::Ubm { .. } => "ubm",
            BehaviorConfig::TrustPbm { .. } => "trust_pbm",
        }
    }

    /// Checks every parameter is a probability and covers positions `1..=len`.
    pub fn validate_for_len(&self, len: usize) -> Result<(), SimError> {
        match self {
            BehaviorConfig::Pbm { theta } => theta.check("theta", len),
            BehaviorConfig::Cascade => Ok(()),
            BehaviorConfig::Dbn { satisfaction, default_satisfaction } => {
                satisfaction.values().try_for_each(|&v| check_probability("satisfaction", v))?;
                default_satisfaction.map_or(Ok(()), |v| check_probability("satisfaction", v))
            }
            BehaviorConfig::Ubm { theta, delta, gamma } => {
                theta.check("theta", len)?;
                check_probability("delta", *delta)?;
                gamma.iter().try_for_each(|g| check_probability("gamma", g.value))
            }
            BehaviorConfig::TrustPbm { theta, eps_plus, eps_minus } => {
                theta.check("theta", len)?;
                eps_plus.check("eps_plus", len)?;
                eps_minus.check("eps_minus", len)
            }
        }
    }
}

/// What the visitor did with one displayed slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotOutcome {
    pub viewed: bool,
    pub contacted: bool,
    pub contact_order: Option<u32>,
}

fn assign_random_order<R: Rng + ?Sized>(out: &mut [SlotOutcome], rng: &mut R) {
    let mut contacted: Vec<usize> = (0..out.len()).filter(|&i| out[i].contacted).collect();
    contacted.shuffle(rng);
    for (order, i) in contacted.into_iter().enumerate() {
        out[i].contact_order = Some(order as u32 + 1);
    }
}

/// Simulates one visitor on a displayed list. `displayed[k - 1]` is the
/// document shown at position `k`.
pub fn simulate_session<R: Rng + ?Sized>(
    displayed: &[&CatalogDoc],
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> Result<Vec<SlotOutcome>, SimError> {
    cfg.validate_for_len(displayed.len())?;
    let mut out = vec![SlotOutcome::default(); displayed.len()];
    match cfg {
        BehaviorConfig::Pbm { theta } => {
            for (i, doc) in displayed.iter().enumerate() {
                let examined = rng.random::<f64>() < theta.0[i];
                out[i].viewed = examined;
                out[i].contacted = examined && rng.random::<f64>() < doc.relevance;
            }
            assign_random_order(&mut out, rng);
        }
        BehaviorConfig::TrustPbm { theta, eps_plus, eps_minus } => {
            for (i, doc) in displayed.iter().enumerate() {
                let examined = rng.random::<f64>() < theta.0[i];
                out[i].viewed = examined;
                if examined {
                    let relevant = rng.random::<f64>() < doc.relevance;
                    let p = if relevant { eps_plus.0[i] } else { eps_minus.0[i] };
                    out[i].contacted = rng.random::<f64>() < p;
                }
            }
            assign_random_order(&mut out, rng);
        }
        BehaviorConfig::Cascade => {
            for (i, doc) in displayed.iter().enumerate() {
                out[i].viewed = true;
                if rng.random::<f64>() < doc.relevance {
                    out[i].contacted = true;
                    out[i].contact_order = Some(1);
                    break;
                }
            }
        }
        BehaviorConfig::Dbn { satisfaction, default_satisfaction } => {
            let mut order = 0;
            for (i, doc) in displayed.iter().enumerate() {
                out[i].viewed = true;
                if rng.random::<f64>() < doc.relevance {
                    order += 1;
                    out[i].contacted = true;
                    out[i].contact_order = Some(order);
                    let sat = satisfaction
                        .get(&doc.doc_id)
                        .copied()
                        .or(*default_satisfaction)
                        .ok_or_else(|| SimError::UnknownSatisfaction(doc.doc_id.to_string()))?;
                    if rng.random::<f64>() < sat {
                        break;
                    }
                }
            }
        }
        BehaviorConfig::Ubm { theta, delta, gamma } => {
            let overrides: HashMap<(Position, Position), f64> =
                gamma.iter().map(|g| ((g.position, g.distance), g.value)).collect();
            let mut last_contact: Position = 0;
            let mut order = 0;
            for (i, doc) in displayed.iter().enumerate() {
                let k = i as Position + 1;
                let distance = k - last_contact;
                let g =
                    overrides.get(&(k, distance)).copied().unwrap_or_else(|| theta.0[i] * delta.powi(distance as i32));
                let examined = rng.random::<f64>() < g;
                out[i].viewed = examined;
                if examined && rng.random::<f64>() < doc.relevance {
                    order += 1;
                    out[i].contacted = true;
                    out[i].contact_order = Some(order);
                    last_contact = k;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

fn default_query() -> QueryId {
    QueryId::new("q0").unwrap()
}

fn default_interface() -> InterfaceId {
    InterfaceId::new("search").unwrap()
}

fn default_ts_step() -> i64 {
    1000
}

/// Declarative corpus description, read from the simulator config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub catalog: Catalog,
    pub ranker: RankerStub,
    pub plan: AllocationPlan,
    pub behavior: BehaviorConfig,
    pub n_sessions: u64,
    #[serde(default = "default_query")]
    pub query_id: QueryId,
    #[serde(default = "default_interface")]
    pub interface_id: InterfaceId,
    /// Per-session list length drawn uniformly from this range (capped at the
    /// catalog size). Defaults to the whole catalog.
    #[serde(default)]
    pub list_length: Option<LengthRange>,
    #[serde(default)]
    pub start_ts_ms: i64,
    #[serde(default = "default_ts_step")]
    pub ts_step_ms: i64,
}

impl CorpusSpec {
    pub fn new(
        catalog: Catalog,
        ranker: RankerStub,
        plan: AllocationPlan,
        behavior: BehaviorConfig,
        n_sessions: u64,
    ) -> Self {
        Self {
            catalog,
            ranker,
            plan,
            behavior,
            n_sessions,
            query_id: default_query(),
            interface_id: default_interface(),
            list_length: None,
            start_ts_ms: 0,
            ts_step_ms: default_ts_step(),
        }
    }
}

/// Generates sessions of a corpus. Session `i` depends only on `(seed, i)`,
/// so any subset can be produced independently and in parallel.
#[derive(Debug, Clone)]
pub struct CorpusSimulator {
    spec: CorpusSpec,
    seed: u64,
    max_len: usize,
}

impl CorpusSimulator {
    pub fn new(spec: CorpusSpec, seed: u64) -> Result<Self, SimError> {
        if spec.n_sessions == 0 {
            return Err(SimError::NoSessions);
        }
        spec.catalog.validate()?;
        spec.plan.validate()?;
        spec.ranker.validate(&spec.catalog)?;
        let max_len = match spec.list_length {
            Some(LengthRange { min, max }) if min >= 1 && min <= max => max.min(spec.catalog.len()),
            Some(LengthRange { min, max }) => return Err(SimError::ListLength { min, max }),
            None => spec.catalog.len(),
        };
        spec.behavior.validate_for_len(max_len)?;
        Ok(Self { spec, seed, max_len })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn n_sessions(&self) -> u64 {
        self.spec.n_sessions
    }

    pub fn session(&self, index: u64) -> SearchSession {
        let spec = &self.spec;
        let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(self.seed, index));
        let visitor = VisitorId::new(format!("v{:x}-{index}", self.seed)).unwrap();
        let arm = assign_arm(&visitor, &spec.plan);

        let len = match spec.list_length {
            Some(LengthRange { min, .. }) => {
                let min = min.min(self.max_len);
                rng.random_range(min..=self.max_len)
            }
            None => self.max_len,
        };
        let mut natural = spec.ranker.rank(&spec.catalog, &mut rng);
        natural.truncate(len);
        let (displayed, arm) = apply_swap(&natural, arm);

        let mut natural_pos = vec![0 as Position; spec.catalog.len()];
        for (i, &d) in natural.iter().enumerate() {
            natural_pos[d] = i as Position + 1;
        }
        let docs: Vec<&CatalogDoc> = displayed.iter().map(|&d| &spec.catalog.docs[d]).collect();
        let outcomes =
            simulate_session(&docs, &spec.behavior, &mut rng).expect("behavior validated for max list length");

        let slots = displayed
            .iter()
            .zip(outcomes)
            .enumerate()
            .map(|(i, (&d, o))| SlotRecord {
                doc: spec.catalog.docs[d].doc_id.clone(),
                natural_position: natural_pos[d],
                displayed_position: i as Position + 1,
                viewed: o.viewed,
                contacted: o.contacted,
                contact_order: o.contact_order,
            })
            .collect();
        let session = SearchSession {
            query: spec.query_id.clone(),
            visitor,
            interface: spec.interface_id.clone(),
            timestamp_ms: spec.start_ts_ms + index as i64 * spec.ts_step_ms,
            arm,
            slots,
        };
        debug_assert!(crate::log::check_invariants(&session.arm, &session.slots).is_ok());
        session
    }

    /// All sessions, in index order.
    pub fn generate(&self, exec: Exec) -> Vec<SearchSession> {
        exec.map_indexed(self.spec.n_sessions as usize, |i| self.session(i as u64))
    }

    /// Streams every session through `fold` without materializing the corpus.
    pub fn fold<A, I, F, M>(&self, exec: Exec, identity: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, &SearchSession) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        exec.fold_indexed(self.spec.n_sessions, identity, |acc, i| fold(acc, &self.session(i)), merge)
    }

    /// Writes the log in index order. Returns the number of sessions written.
    pub fn write_log<W: Write>(&self, mut out: W, exec: Exec) -> io::Result<u64> {
        const CHUNK: u64 = 16_384;
        let n = self.spec.n_sessions;
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let lines =
                exec.map_indexed((end - start) as usize, |j| serialize_session(&self.session(start + j as u64)));
            for l in lines {
                out.write_all(l.as_bytes())?;
                out.write_all(b"\n")?;
            }
            start = end;
        }
        out.flush()?;
        Ok(n)
    }
}

/// Generates a corpus and writes it as a session log.
pub fn simulate_corpus<W: Write>(spec: CorpusSpec, seed: u64, out: W) -> Result<u64, SimulateError> {
    let sim = CorpusSimulator::new(spec, seed)?;
    Ok(sim.write_log(out, Exec::default())?)
}

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(c: &Catalog) -> Vec<&CatalogDoc> {
        c.docs.iter().collect()
    }

    fn rng(seed: u64) -> Pcg64Mcg {
        Pcg64Mcg::seed_from_u64(seed)
    }

    #[test]
    fn pbm_contact_rate_follows_theta() {
        let c = Catalog::from_relevances(&[1.0, 1.0, 1.0]).unwrap();
        let cfg = BehaviorConfig::pbm(vec![1.0, 0.6, 0.4]);
        let mut r = rng(1);
        let n = 200_000;
        let mut contacts = [0u32; 3];
        for _ in 0..n {
            for (k, o) in simulate_session(&docs(&c), &cfg, &mut r).unwrap().iter().enumerate() {
                contacts[k] += o.contacted as u32;
            }
        }
        for (k, want) in [1.0, 0.6, 0.4].iter().enumerate() {
            let got = contacts[k] as f64 / n as f64;
            assert!((got - want).abs() < 0.005, "position {}: {got}", k + 1);
        }
    }

    #[test]
    fn pbm_two_contact_order_is_uniform() {
        // Both slots contacted w.p. 0.25; with a uniform order the lower slot
        // comes first half the time.
        let c = Catalog::from_relevances(&[1.0, 1.0]).unwrap();
        let cfg = BehaviorConfig::pbm(vec![0.5, 0.5]);
        let mut r = rng(42);
        let (mut two, mut lower_first) = (0u32, 0u32);
        for _ in 0..100_000 {
            let out = simulate_session(&docs(&c), &cfg, &mut r).unwrap();
            if out.iter().all(|o| o.contacted) {
                two += 1;
                lower_first += (out[1].contact_order == Some(1)) as u32;
            }
        }
        let frac = lower_first as f64 / two as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac} over {two}");
    }

    #[test]
    fn cascade_single_contact_and_full_views_without_contact() {
        let c = Catalog::from_relevances(&[0.3, 0.2, 0.5, 0.1]).unwrap();
        let mut r = rng(7);
        for _ in 0..20_000 {
            let out = simulate_session(&docs(&c), &BehaviorConfig::Cascade, &mut r).unwrap();
            let contacts: Vec<_> = out.iter().filter(|o| o.contacted).collect();
            assert!(contacts.len() <= 1);
            if let Some(pos) = out.iter().position(|o| o.contacted) {
                assert_eq!(out[pos].contact_order, Some(1));
                assert!(out[..=pos].iter().all(|o| o.viewed));
                assert!(out[pos + 1..].iter().all(|o| !o.viewed));
            } else {
                assert!(out.iter().all(|o| o.viewed));
            }
        }
    }

    #[test]
    fn dbn_stops_on_satisfying_contact() {
        let c = Catalog::from_relevances(&[1.0, 1.0, 1.0]).unwrap();
        let cfg = BehaviorConfig::Dbn { satisfaction: BTreeMap::new(), default_satisfaction: Some(1.0) };
        let out = simulate_session(&docs(&c), &cfg, &mut rng(1)).unwrap();
        assert!(out[0].contacted && !out[1].viewed);

        let cfg = BehaviorConfig::Dbn { satisfaction: BTreeMap::new(), default_satisfaction: Some(0.0) };
        let out = simulate_session(&docs(&c), &cfg, &mut rng(1)).unwrap();
        let orders: Vec<_> = out.iter().map(|o| o.contact_order).collect();
        assert_eq!(orders, [Some(1), Some(2), Some(3)]);

        let cfg = BehaviorConfig::Dbn { satisfaction: BTreeMap::new(), default_satisfaction: None };
        assert!(matches!(simulate_session(&docs(&c), &cfg, &mut rng(1)), Err(SimError::UnknownSatisfaction(_))));
    }

    #[test]
    fn ubm_examination_decays_with_distance() {
        let c = Catalog::from_relevances(&[0.0; 5]).unwrap();
        let cfg = BehaviorConfig::Ubm { theta: vec![1.0; 5].into(), delta: 0.5, gamma: vec![] };
        let mut r = rng(3);
        let n = 100_000;
        let mut views = [0u32; 5];
        for _ in 0..n {
            for (k, o) in simulate_session(&docs(&c), &cfg, &mut r).unwrap().iter().enumerate() {
                views[k] += o.viewed as u32;
            }
        }
        // No contacts, so distance = k and P(view at k) = 0.5^k.
        for (k, v) in views.iter().enumerate() {
            let want = 0.5f64.powi(k as i32 + 1);
            assert!((*v as f64 / n as f64 - want).abs() < 0.006);
        }
    }

    #[test]
    fn ubm_gamma_override() {
        let c = Catalog::from_relevances(&[0.0, 0.0]).unwrap();
        let cfg = BehaviorConfig::Ubm {
            theta: vec![1.0, 1.0].into(),
            delta: 0.0,
            gamma: vec![GammaEntry { position: 2, distance: 2, value: 1.0 }],
        };
        let out = simulate_session(&docs(&c), &cfg, &mut rng(0)).unwrap();
        assert!(!out[0].viewed && out[1].viewed);
    }

    #[test]
    fn trust_pbm_uses_eps() {
        let c = Catalog::from_relevances(&[0.0, 1.0]).unwrap();
        let cfg = BehaviorConfig::TrustPbm {
            theta: vec![1.0, 1.0].into(),
            eps_plus: vec![1.0, 0.0].into(),
            eps_minus: vec![1.0, 0.0].into(),
        };
        let out = simulate_session(&docs(&c), &cfg, &mut rng(0)).unwrap();
        assert!(out[0].contacted && !out[1].contacted);
    }

    #[test]
    fn uncovered_position_is_error() {
        let c = Catalog::from_relevances(&[0.5; 3]).unwrap();
        let cfg = BehaviorConfig::pbm(vec![1.0, 0.5]);
        assert_eq!(
            simulate_session(&docs(&c), &cfg, &mut rng(0)),
            Err(SimError::UncoveredPosition { param: "theta", position: 3 })
        );
        let cfg = BehaviorConfig::pbm(vec![1.0, 1.5, 0.2]);
        assert!(matches!(simulate_session(&docs(&c), &cfg, &mut rng(0)), Err(SimError::Probability { .. })));
    }

    fn small_spec(n: u64) -> CorpusSpec {
        CorpusSpec::new(
            Catalog::from_relevances(&[0.9, 0.7, 0.5, 0.3, 0.2]).unwrap(),
            RankerStub::ByNoisyRelevance { noise_sd: 0.1 },
            AllocationPlan { holdout_fraction: 0.5, swap_pairs: vec![(1, 2), (2, 3), (4, 9)], salt: "t".into() },
            BehaviorConfig::pbm(vec![1.0, 0.7, 0.5, 0.4, 0.3]),
            n,
        )
    }

    #[test]
    fn zero_sessions_rejected() {
        assert_eq!(CorpusSimulator::new(small_spec(0), 1).unwrap_err(), SimError::NoSessions);
    }

    #[test]
    fn corpus_is_deterministic_and_valid() {
        let sim = CorpusSimulator::new(small_spec(500), 9).unwrap();
        let a = sim.generate(Exec::Parallel);
        let b = sim.generate(Exec::Sequential);
        assert_eq!(a, b);
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        sim.write_log(&mut ta, Exec::Parallel).unwrap();
        CorpusSimulator::new(small_spec(500), 9).unwrap().write_log(&mut tb, Exec::Sequential).unwrap();
        assert_eq!(ta, tb);
        for line in String::from_utf8(ta).unwrap().lines() {
            crate::log::validate_session(line).unwrap();
        }
        let other = CorpusSimulator::new(small_spec(500), 10).unwrap().generate(Exec::Sequential);
        assert_ne!(a, other);
    }

    #[test]
    fn too_short_lists_record_unapplied_swap() {
        let sim = CorpusSimulator::new(small_spec(2000), 5).unwrap();
        let sessions = sim.generate(Exec::default());
        let (mut applied, mut unapplied) = (0, 0);
        for s in &sessions {
            match s.arm().arm {
                Arm::Swap { hi: 4, lo: 9 } => {
                    assert!(!s.arm().applied);
                    unapplied += 1;
                }
                Arm::Swap { .. } => {
                    assert!(s.arm().applied);
                    applied += 1;
                }
                Arm::Holdout => assert!(!s.arm().applied),
            }
        }
        assert!(applied > 0 && unapplied > 0);
    }

    #[test]
    fn list_length_range() {
        let mut spec = small_spec(300);
        spec.list_length = Some(LengthRange { min: 2, max: 4 });
        let sim = CorpusSimulator::new(spec.clone(), 1).unwrap();
        let lens: std::collections::BTreeSet<usize> = sim.generate(Exec::Sequential).iter().map(|s| s.len()).collect();
        assert_eq!(lens.into_iter().collect::<Vec<_>>(), [2, 3, 4]);
        spec.list_length = Some(LengthRange { min: 3, max: 2 });
        assert!(matches!(CorpusSimulator::new(spec, 1), Err(SimError::ListLength { .. })));
    }

    #[test]
    fn rankers() {
        let c = Catalog::from_relevances(&[0.2, 0.9, 0.9, 0.5]).unwrap();
        let mut r = rng(0);
        // tie between d2 and d3 broken by id
        assert_eq!(RankerStub::ByRelevance.rank(&c, &mut r), [1, 2, 3, 0]);
        let order = ["d4", "d1", "d3", "d2"].map(|d| DocumentId::new(d).unwrap()).to_vec();
        let fixed = RankerStub::FixedPermutation { order };
        fixed.validate(&c).unwrap();
        assert_eq!(fixed.rank(&c, &mut r), [3, 0, 2, 1]);
        let bad = RankerStub::FixedPermutation { order: vec![DocumentId::new("d1").unwrap()] };
        assert!(bad.validate(&c).is_err());
    }

    #[test]
    fn config_json_shape() {
        let cfg: BehaviorConfig = serde_json::from_str(r#"{"kind":"pbm","theta":[1.0,0.5]}"#).unwrap();
        assert_eq!(cfg, BehaviorConfig::pbm(vec![1.0, 0.5]));
        let cfg: BehaviorConfig = serde_json::from_str(r#"{"kind":"ubm","theta":[1.0]}"#).unwrap();
        assert!(matches!(cfg, BehaviorConfig::Ubm { delta, .. } if delta == 0.9));
        let r: RankerStub = serde_json::from_str(r#"{"kind":"by_noisy_relevance","noise_sd":0.2}"#).unwrap();
        assert_eq!(r, RankerStub::ByNoisyRelevance { noise_sd: 0.2 });
    }
}
