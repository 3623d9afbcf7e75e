//! The propensity artifact: a flattened table plus estimation metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rankprop::estimator::PairCounts;
use rankprop::{InterfaceId, Position, PropensitySource, PropensityTable};
use serde::{Deserialize, Serialize};

use crate::error::{Classify, CliResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub interface: InterfaceId,
    pub theta: BTreeMap<Position, f64>,
    pub ci_low: BTreeMap<Position, f64>,
    pub ci_high: BTreeMap<Position, f64>,
    pub source: PropensitySource,
    pub created_at: i64,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub sessions: u64,
    pub date_range: DateRange,
    pub pairs: Vec<PairSummary>,
    pub plan_hash: String,
    pub interpolation: String,
    pub interpolated_positions: Vec<Position>,
    pub bootstrap_reps: usize,
    pub confidence: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub first_ts_ms: i64,
    pub last_ts_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub hi: Position,
    pub lo: Position,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Treated sessions behind the swapped cells.
    pub n: u64,
    pub counts: PairCounts,
}

impl Artifact {
    pub fn new(table: PropensityTable, metadata: Metadata) -> Self {
        Self {
            interface: table.interface,
            theta: table.theta,
            ci_low: table.ci_low,
            ci_high: table.ci_high,
            source: table.source,
            created_at: table.created_at,
            metadata,
        }
    }

    pub fn table(&self) -> CliResult<PropensityTable> {
        let t = PropensityTable {
            interface: self.interface.clone(),
            theta: self.theta.clone(),
            ci_low: self.ci_low.clone(),
            ci_high: self.ci_high.clone(),
            source: self.source,
            created_at: self.created_at,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
        let a: Artifact =
            serde_json::from_str(&text).map_err(|e| Failure::new("artifact", format!("{}: {e}", path.display())))?;
        a.table()?;
        Ok(a)
    }

    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self).class("artifact")?;
        s.push('\n');
        Ok(s)
    }
}

/// File stem for an interface, with anything outside `[A-Za-z0-9_-]` replaced.
pub fn file_stem(interface: &InterfaceId) -> String {
    let safe: String = interface
        .as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("propensity_{safe}")
}

/// Every `propensity_*.json` in a directory, sorted by name.
pub fn find_artifacts(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::new("io", format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("propensity_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}
