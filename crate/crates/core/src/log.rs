//! Line-delimited JSON session logs: parsing, validation, serialization and
//! multi-file merging.
//!
//! One session per line:
//!
//! ```text
//! {"query_id":"q0","visitor_id":"v1","interface_id":"search","ts_ms":1700000000000,
//!  "arm":{"kind":"swap","hi":1,"lo":2,"applied":true},
//!  "slots":[{"doc_id":"d7","nat_pos":2,"disp_pos":1,"viewed":true,"contacted":true,"contact_order":1}, ...]}
//! ```
//!
//! Holdout arms carry `"hi":null,"lo":null`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::types::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("session has no slots")]
    NoSlots,
    #[error("empty {0}")]
    EmptyId(&'static str),
    #[error("displayed positions are not 1..{len} without gaps or duplicates")]
    DisplayedPositions { len: usize },
    #[error("natural positions are not a permutation of displayed positions")]
    NaturalPositions,
    #[error("contact_order must be present iff contacted (doc {0})")]
    ContactOrderPresence(String),
    #[error("contact_order values are not a permutation of 1..{0}")]
    ContactOrderPermutation(usize),
    #[error("invalid swap pair ({hi},{lo}): need 1 <= hi < lo")]
    BadSwapPair { hi: Position, lo: Position },
    #[error("holdout arm cannot be applied")]
    AppliedHoldout,
    #[error("natural and displayed order differ but no swap was applied")]
    UnexpectedPermutation,
    #[error("swap not applied despite applied=true flag")]
    SwapNotApplied,
    #[error("swap ({hi},{lo}) applied but list has only {len} slots")]
    SwapOutOfRange { hi: Position, lo: Position, len: usize },
    #[error("applied swap ({hi},{lo}) inconsistent with natural/displayed positions")]
    SwapMismatch { hi: Position, lo: Position },
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant error: {0}")]
    Invariant(#[from] InvariantError),
}

impl SessionError {
    pub fn class(&self) -> &'static str {
        match self {
            SessionError::Schema(_) => "schema",
            SessionError::Invariant(_) => "invariant",
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("reject rate {rate:.4} exceeds threshold {threshold:.4} ({rejected} of {lines} lines)")]
    RejectRate { rate: f64, threshold: f64, rejected: u64, lines: u64 },
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "snake_case")]
enum WireArmKind {
    Holdout,
    Swap,
}

#[derive(Serialize, Deserialize, Debug)]
struct WireArm {
    kind: WireArmKind,
    #[serde(default)]
    hi: Option<Position>,
    #[serde(default)]
    lo: Option<Position>,
    applied: bool,
}

#[derive(Deserialize)]
struct WireSlot {
    doc_id: String,
    nat_pos: Position,
    disp_pos: Position,
    viewed: bool,
    contacted: bool,
    #[serde(default)]
    contact_order: Option<u32>,
}

#[derive(Deserialize)]
struct WireSession {
    query_id: String,
    visitor_id: String,
    interface_id: String,
    ts_ms: i64,
    arm: WireArm,
    slots: Vec<WireSlot>,
}

#[derive(Serialize)]
struct WireSlotRef<'a> {
    doc_id: &'a str,
    nat_pos: Position,
    disp_pos: Position,
    viewed: bool,
    contacted: bool,
    contact_order: Option<u32>,
}

#[derive(Serialize)]
struct WireSessionRef<'a> {
    query_id: &'a str,
    visitor_id: &'a str,
    interface_id: &'a str,
    ts_ms: i64,
    arm: WireArm,
    slots: Vec<WireSlotRef<'a>>,
}

fn wire_arm(arm: ArmAssignment) -> WireArm {
    match arm.arm {
        Arm::Holdout => WireArm { kind: WireArmKind::Holdout, hi: None, lo: None, applied: false },
        Arm::Swap { hi, lo } => WireArm { kind: WireArmKind::Swap, hi: Some(hi), lo: Some(lo), applied: arm.applied },
    }
}

fn id(s: String, what: &'static str) -> Result<String, InvariantError> {
    if s.is_empty() {
        Err(InvariantError::EmptyId(what))
    } else {
        Ok(s)
    }
}

/// Parses and validates one log line.
pub fn validate_session(line: &str) -> Result<SearchSession, SessionError> {
    let wire: WireSession = serde_json::from_str(line).map_err(|e| SessionError::Schema(e.to_string()))?;

    let query = QueryId::new(id(wire.query_id, "query_id")?).unwrap();
    let visitor = VisitorId::new(id(wire.visitor_id, "visitor_id")?).unwrap();
    let interface = InterfaceId::new(id(wire.interface_id, "interface_id")?).unwrap();

    let arm = match wire.arm.kind {
        WireArmKind::Holdout => {
            if wire.arm.applied {
                return Err(InvariantError::AppliedHoldout.into());
            }
            ArmAssignment::holdout()
        }
        WireArmKind::Swap => {
            let (Some(hi), Some(lo)) = (wire.arm.hi, wire.arm.lo) else {
                return Err(SessionError::Schema("swap arm requires hi and lo".into()));
            };
            ArmAssignment { arm: Arm::Swap { hi, lo }, applied: wire.arm.applied }
        }
    };

    let slots = wire
        .slots
        .into_iter()
        .map(|s| {
            Ok(SlotRecord {
                doc: DocumentId::new(id(s.doc_id, "doc_id")?).unwrap(),
                natural_position: s.nat_pos,
                displayed_position: s.disp_pos,
                viewed: s.viewed,
                contacted: s.contacted,
                contact_order: s.contact_order,
            })
        })
        .collect::<Result<Vec<_>, InvariantError>>()?;

    Ok(SearchSession::new(query, visitor, interface, wire.ts_ms, arm, slots)?)
}

/// Checks the positional invariants. `slots` must already be sorted by
/// displayed position.
pub(crate) fn check_invariants(arm: &ArmAssignment, slots: &[SlotRecord]) -> Result<(), InvariantError> {
    let len = slots.len();
    if len == 0 {
        return Err(InvariantError::NoSlots);
    }
    if slots.iter().enumerate().any(|(i, s)| s.displayed_position as usize != i + 1) {
        return Err(InvariantError::DisplayedPositions { len });
    }
    let mut seen = vec![false; len];
    for s in slots {
        let k = s.natural_position as usize;
        if k == 0 || k > len || std::mem::replace(&mut seen[k - 1], true) {
            return Err(InvariantError::NaturalPositions);
        }
    }

    let mut orders = Vec::new();
    for s in slots {
        match (s.contacted, s.contact_order) {
            (true, Some(o)) => orders.push(o),
            (false, None) => {}
            _ => return Err(InvariantError::ContactOrderPresence(s.doc.to_string())),
        }
    }
    orders.sort_unstable();
    if orders.iter().enumerate().any(|(i, &o)| o as usize != i + 1) {
        return Err(InvariantError::ContactOrderPermutation(orders.len()));
    }

    let permuted: Vec<&SlotRecord> = slots.iter().filter(|s| s.natural_position != s.displayed_position).collect();
    match arm.arm {
        Arm::Holdout if arm.applied => return Err(InvariantError::AppliedHoldout),
        Arm::Holdout => {
            if !permuted.is_empty() {
                return Err(InvariantError::UnexpectedPermutation);
            }
        }
        Arm::Swap { hi, lo } => {
            if hi == 0 || hi >= lo {
                return Err(InvariantError::BadSwapPair { hi, lo });
            }
            if !arm.applied {
                if !permuted.is_empty() {
                    return Err(InvariantError::UnexpectedPermutation);
                }
            } else if lo as usize > len {
                return Err(InvariantError::SwapOutOfRange { hi, lo, len });
            } else if permuted.is_empty() {
                return Err(InvariantError::SwapNotApplied);
            } else {
                let at_hi = &slots[hi as usize - 1];
                let at_lo = &slots[lo as usize - 1];
                if permuted.len() != 2 || at_hi.natural_position != lo || at_lo.natural_position != hi {
                    return Err(InvariantError::SwapMismatch { hi, lo });
                }
            }
        }
    }
    Ok(())
}

/// Serializes a session as one JSON line (no trailing newline).
pub fn serialize_session(session: &SearchSession) -> String {
    let wire = WireSessionRef {
        query_id: session.query.as_str(),
        visitor_id: session.visitor.as_str(),
        interface_id: session.interface.as_str(),
        ts_ms: session.timestamp_ms,
        arm: wire_arm(session.arm),
        slots: session
            .slots
            .iter()
            .map(|s| WireSlotRef {
                doc_id: s.doc.as_str(),
                nat_pos: s.natural_position,
                disp_pos: s.displayed_position,
                viewed: s.viewed,
                contacted: s.contacted,
                contact_order: s.contact_order,
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("session serialization is infallible")
}

pub fn write_sessions<'a, W: Write>(
    mut out: W,
    sessions: impl IntoIterator<Item = &'a SearchSession>,
) -> io::Result<()> {
    for s in sessions {
        out.write_all(serialize_session(s).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MergeOptions {
    /// Abort when `rejected / lines` exceeds this fraction.
    pub max_reject_rate: f64,
    /// Lines parsed per batch.
    pub batch_lines: usize,
    pub exec: Exec,
}

impl Default for MergeOptions {
    fn default() -> Self {
        Self { max_reject_rate: 0.01, batch_lines: 4096, exec: Exec::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Reject {
    pub path: PathBuf,
    pub line: u64,
    pub class: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct MergeStats {
    /// Non-blank lines read.
    pub lines: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Sessions whose timestamp precedes the previous one in the same file.
    pub out_of_order: u64,
    /// First rejects, capped at [`MAX_KEPT_REJECTS`].
    pub rejects: Vec<Reject>,
}

pub const MAX_KEPT_REJECTS: usize = 100;

/// Lazily merges several log files. Files are read one after another and each
/// file's sessions are yielded in line order; append-only logs are therefore
/// in timestamp order per file. The reject-rate check runs once all input has
/// been consumed.
pub struct SessionStream {
    files: VecDeque<(PathBuf, BufReader<File>)>,
    current: Option<(PathBuf, BufReader<File>, u64, Option<i64>)>,
    buffer: VecDeque<SearchSession>,
    opts: MergeOptions,
    stats: MergeStats,
    finished: bool,
}

/// Opens every file up front so an unreadable path fails before any work.
pub fn merge_logs<P: AsRef<Path>>(paths: &[P], opts: MergeOptions) -> Result<SessionStream, LogError> {
    let files = paths
        .iter()
        .map(|p| {
            let path = p.as_ref().to_path_buf();
            File::open(&path).map(|f| (path.clone(), BufReader::new(f))).map_err(|source| LogError::Io { path, source })
        })
        .collect::<Result<VecDeque<_>, _>>()?;
    Ok(SessionStream {
        files,
        current: None,
        buffer: VecDeque::new(),
        opts,
        stats: MergeStats::default(),
        finished: false,
    })
}

impl SessionStream {
    pub fn stats(&self) -> &MergeStats {
        &self.stats
    }

    /// Reads and parses the next batch. Returns `Ok(false)` when input is exhausted.
    fn fill(&mut self) -> Result<bool, LogError> {
        loop {
            if self.current.is_none() {
                match self.files.pop_front() {
                    Some((path, reader)) => self.current = Some((path, reader, 0, None)),
                    None => return Ok(false),
                }
            }
            let (path, reader, line_no, last_ts) = self.current.as_mut().unwrap();
            let mut batch: Vec<(u64, String)> = Vec::with_capacity(self.opts.batch_lines);
            let mut buf = String::new();
            while batch.len() < self.opts.batch_lines.max(1) {
                buf.clear();
                let n = reader.read_line(&mut buf).map_err(|source| LogError::Io { path: path.clone(), source })?;
                if n == 0 {
                    break;
                }
                *line_no += 1;
                let trimmed = buf.trim();
                if !trimmed.is_empty() {
                    batch.push((*line_no, trimmed.to_string()));
                }
            }
            if batch.is_empty() {
                self.current = None;
                continue;
            }
            let parsed = self.opts.exec.map_slice(&batch, |(_, l)| validate_session(l));
            for ((line, _), result) in batch.iter().zip(parsed) {
                self.stats.lines += 1;
                match result {
                    Ok(s) => {
                        if last_ts.is_some_and(|t| s.timestamp_ms < t) {
                            self.stats.out_of_order += 1;
                        }
                        *last_ts = Some(s.timestamp_ms);
                        self.stats.accepted += 1;
                        self.buffer.push_back(s);
                    }
                    Err(e) => {
                        self.stats.rejected += 1;
                        tracing::warn!(path = %path.display(), line, error = %e, "rejected log line");
                        if self.stats.rejects.len() < MAX_KEPT_REJECTS {
                            self.stats.rejects.push(Reject {
                                path: path.clone(),
                                line: *line,
                                class: e.class(),
                                message: e.to_string(),
                            });
                        }
                    }
                }
            }
            if !self.buffer.is_empty() {
                return Ok(true);
            }
        }
    }
}

impl Iterator for SessionStream {
    type Item = Result<SearchSession, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(s) = self.buffer.pop_front() {
                return Some(Ok(s));
            }
            if self.finished {
                return None;
            }
            match self.fill() {
                Ok(true) => continue,
                Ok(false) => {
                    self.finished = true;
                    let MergeStats { lines, rejected, .. } = self.stats;
                    if lines > 0 {
                        let rate = rejected as f64 / lines as f64;
                        if rate > self.opts.max_reject_rate {
                            return Some(Err(LogError::RejectRate {
                                rate,
                                threshold: self.opts.max_reject_rate,
                                rejected,
                                lines,
                            }));
                        }
                    }
                    return None;
                }
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
        }
    }
}
