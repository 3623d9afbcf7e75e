#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub const THETA_11: [f64; 11] = [1.00, 0.60, 0.45, 0.38, 0.33, 0.30, 0.28, 0.27, 0.26, 0.28, 0.25];
pub const THETA_19: f64 = 0.22;

/// Ground-truth curve over 19 positions; 12..=18 are log-linear between 11 and 19.
pub fn theta_19() -> Vec<f64> {
    let mut t = THETA_11.to_vec();
    let (a, b) = (THETA_11[10].ln(), THETA_19.ln());
    for k in 12..=18 {
        let w = (k - 11) as f64 / 8.0;
        t.push((a + w * (b - a)).exp());
    }
    t.push(THETA_19);
    t
}

pub fn rankprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankprop")).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on failure.
pub fn ok(args: &[&str]) -> String {
    let out = rankprop(args);
    assert!(out.status.success(), "rankprop {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn corpus_config(behavior: Value, n_sessions: u64, pairs: &[(u32, u32)], holdout: f64) -> Value {
    let relevance: Vec<f64> = (0..19).map(|i| 0.95 - 0.02 * i as f64).collect();
    json!({
        "catalog": { "docs": relevance.iter().enumerate()
            .map(|(i, r)| json!({ "doc_id": format!("d{}", i + 1), "relevance": r }))
            .collect::<Vec<_>>() },
        "ranker": { "kind": "by_relevance" },
        "plan": { "holdout_fraction": holdout, "swap_pairs": pairs, "salt": "randpair-v1" },
        "behavior": behavior,
        "n_sessions": n_sessions,
    })
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

pub fn default_pairs() -> Vec<(u32, u32)> {
    let mut v: Vec<(u32, u32)> = (1..=10).map(|k| (k, k + 1)).collect();
    v.push((11, 19));
    v
}
