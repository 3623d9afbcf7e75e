//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every check runs against simulator ground
//! truth or closed-form arithmetic; tolerances are fixed constants below.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rankprop::coec::build_features;
use rankprop::estimator::{bootstrap_ci, estimate_table, BootstrapOptions, EstimateOptions, PairAggregator, PairTally};
use rankprop::ips::{ips_query_term, on_policy_term, IpsOptions, LambdaKind, RankerScores};
use rankprop::power::{hypothesized_effect, monte_carlo_power, required_sample, PowerSpec};
use rankprop::randpair::{assign_arm, AllocationPlan};
use rankprop::sim::{BehaviorConfig, Catalog, CatalogDoc, CorpusSimulator, CorpusSpec, PositionCurve, RankerStub};
use rankprop::stats::{chi_square_gof, kendall_tau};
use rankprop::*;
use serde_json::{json, Value};
use tempfile::tempdir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const RECOVERY_SESSIONS: u64 = 2_000_000;
const RECOVERY_REL_TOL: f64 = 0.05;
const RECOVERY_MAX_SECS: f64 = 120.0;
const UNBIASED_SESSIONS: u64 = 1_000_000;
const UNBIASED_MIN_COVERED: usize = 10;
const COVERAGE_TRIALS: u64 = 100;
const COVERAGE_TREATED: u64 = 200_000;
const COVERAGE_MIN_COVERED: usize = 93;
const COEC_MIN_TAU: f64 = 0.95;
const COEC_IMPRESSIONS: u64 = 10_000;
const IPS_SESSIONS: u64 = 1_000_000;
const IPS_REL_TOL: f64 = 0.03;
const POWER_N: u64 = 432;
const POWER_BAND: (f64, f64) = (0.77, 0.83);
const HALF_GAP_TOL: f64 = 1e-12;
const ALLOC_VISITORS: u64 = 1_100_000;
const ALLOC_TOL: f64 = 0.001;
const ALLOC_ALPHA: f64 = 0.001;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn simulator(
    relevance: &[f64],
    ranker: RankerStub,
    plan: AllocationPlan,
    behavior: BehaviorConfig,
    n: u64,
    seed: u64,
) -> CorpusSimulator {
    let spec = CorpusSpec::new(Catalog::from_relevances(relevance).unwrap(), ranker, plan, behavior, n);
    CorpusSimulator::new(spec, seed).unwrap()
}

fn aggregate(sim: &CorpusSimulator, pairs: &[(Position, Position)]) -> PairAggregator {
    sim.fold(
        Exec::default(),
        || PairAggregator::new(pairs),
        |mut a, s| {
            a.add(s);
            a
        },
        PairAggregator::merge,
    )
}

fn graded_19() -> Vec<f64> {
    (0..19).map(|i| 0.95 - 0.02 * i as f64).collect()
}

fn theta_recovery() -> Check {
    let plan = AllocationPlan::default();
    let start = Instant::now();
    let sim = simulator(
        &graded_19(),
        RankerStub::ByRelevance,
        plan.clone(),
        BehaviorConfig::pbm(theta_19()),
        RECOVERY_SESSIONS,
        2024,
    );
    let agg = aggregate(&sim, &plan.swap_pairs);
    let est = estimate_table(&agg, InterfaceId::new("search").unwrap(), &EstimateOptions::default())
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut worst = (0, 0.0f64);
    for (k, truth) in (1..=11).zip(THETA_11) {
        let got = est.table.get(k).ok_or(format!("position {k} missing"))?;
        let err = (got / truth - 1.0).abs();
        if err > worst.1 {
            worst = (k, err);
        }
    }
    ensure(worst.1 <= RECOVERY_REL_TOL, || format!("position {} off by {:.2}%", worst.0, 100.0 * worst.1))?;
    ensure(secs < RECOVERY_MAX_SECS, || format!("took {secs:.1}s"))?;
    Ok(format!("max relative error {:.2}% at position {}, {secs:.1}s for 2M sessions", 100.0 * worst.1, worst.0))
}

fn unbiasedness() -> Check {
    let plan = AllocationPlan::default();
    let truth = theta_19();
    let corpora = [
        ("uniform 0.3", vec![0.3; 19], 31),
        ("graded 0.9..0.05", (0..19).map(|i| 0.9 - 0.85 * i as f64 / 18.0).collect::<Vec<_>>(), 32),
    ];
    let mut details = Vec::new();
    for (name, relevance, seed) in corpora {
        let sim = simulator(
            &relevance,
            RankerStub::ByRelevance,
            plan.clone(),
            BehaviorConfig::pbm(truth.clone()),
            UNBIASED_SESSIONS,
            seed,
        );
        let agg = aggregate(&sim, &plan.swap_pairs);
        let est = estimate_table(&agg, InterfaceId::new("search").unwrap(), &EstimateOptions::default())
            .map_err(|e| e.to_string())?;
        let covered = est
            .pairs
            .iter()
            .filter(|p| {
                let r = &p.estimate;
                let t = truth[r.hi as usize - 1] / truth[r.lo as usize - 1];
                r.ci.0 <= t && t <= r.ci.1
            })
            .count();
        ensure(covered >= UNBIASED_MIN_COVERED, || format!("{name}: {covered}/11 pair CIs cover truth"))?;
        details.push(format!("{name} {covered}/11"));
    }
    Ok(format!("pair CIs covering truth: {}", details.join(", ")))
}

fn bootstrap_coverage() -> Check {
    // ratio 1.25 between slots 1 and 2; the treated half carries the swap
    let theta = vec![1.0, 0.8, 0.7];
    let truth = theta[0] / theta[1];
    let plan = AllocationPlan::default().with_pairs(&[(1, 2)]);
    let covered = (0..COVERAGE_TRIALS)
        .filter(|&trial| {
            let sim = simulator(
                &[0.5, 0.4, 0.3],
                RankerStub::ByRelevance,
                plan.clone(),
                BehaviorConfig::pbm(theta.clone()),
                2 * COVERAGE_TREATED,
                1000 + trial,
            );
            let agg = aggregate(&sim, &plan.swap_pairs);
            let tally: &PairTally = agg.tally(1, 2).unwrap();
            let opts = BootstrapOptions { seed: trial, ..BootstrapOptions::default() };
            let est = bootstrap_ci(tally, &opts).unwrap();
            est.ci.0 <= truth && truth <= est.ci.1
        })
        .count();
    ensure(covered >= COVERAGE_MIN_COVERED, || format!("{covered}/{COVERAGE_TRIALS} intervals cover {truth}"))?;
    Ok(format!("{covered}/{COVERAGE_TRIALS} intervals cover the true ratio {truth}"))
}

fn coec_debiasing() -> Check {
    let theta: Vec<f64> = THETA_11[..10].to_vec();
    let truth_table =
        PropensityTable::from_curve(InterfaceId::new("search").unwrap(), &theta, PropensitySource::Assumed).unwrap();
    let squared: Vec<f64> = theta.iter().map(|t| t * t).collect();
    let overstated =
        PropensityTable::from_curve(InterfaceId::new("search").unwrap(), &squared, PropensitySource::Assumed).unwrap();

    // 100 distinct relevances, scattered over 10 queries by a fixed permutation
    let relevance = |j: usize| 0.05 + 0.9 * j as f64 / 99.0;
    let mut by_query: BTreeMap<usize, Vec<CatalogDoc>> = BTreeMap::new();
    for j in 0..100 {
        let slot = (j * 37 + 11) % 100;
        by_query
            .entry(slot / 10)
            .or_default()
            .push(CatalogDoc { doc_id: DocumentId::new(format!("p{j:03}")).unwrap(), relevance: relevance(j) });
    }
    let mut rows = Vec::new();
    let mut rows_sq = Vec::new();
    let mut mean_position = BTreeMap::new();
    for (q, docs) in by_query {
        let mut spec = CorpusSpec::new(
            Catalog::new(docs).unwrap(),
            RankerStub::ByNoisyRelevance { noise_sd: 0.1 },
            AllocationPlan { holdout_fraction: 1.0, ..AllocationPlan::default() },
            BehaviorConfig::pbm(theta.clone()),
            COEC_IMPRESSIONS,
        );
        spec.query_id = QueryId::new(format!("q{q}")).unwrap();
        let log = CorpusSimulator::new(spec, 70 + q as u64).unwrap().generate(Exec::default());
        for s in &log {
            for slot in s.slots() {
                let e = mean_position.entry(slot.doc.clone()).or_insert((0u64, 0u64));
                e.0 += slot.displayed_position as u64;
                e.1 += 1;
            }
        }
        rows.extend(build_features(&log, &truth_table).map_err(|e| e.to_string())?);
        rows_sq.extend(build_features(&log, &overstated).map_err(|e| e.to_string())?);
    }
    let true_r: Vec<f64> = rows.iter().map(|r| relevance(r.doc.as_str()[1..].parse().unwrap())).collect();
    let coec: Vec<f64> = rows.iter().map(|r| r.coec).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_rate).collect();
    let tau_coec = kendall_tau(&coec, &true_r);
    let tau_raw = kendall_tau(&raw, &true_r);
    ensure(rows.iter().all(|r| r.n_impressions == COEC_IMPRESSIONS), || "unequal exposure".into())?;
    ensure(tau_coec >= COEC_MIN_TAU, || format!("coec tau {tau_coec:.4}"))?;
    ensure(tau_raw < tau_coec, || format!("raw tau {tau_raw:.4} not below coec tau {tau_coec:.4}"))?;

    // overstating the drop-off under-counts expected contacts at deep slots
    let deep: Vec<usize> = (0..rows.len())
        .filter(|&i| {
            let (sum, n) = mean_position[&rows[i].doc];
            sum as f64 / n as f64 >= 8.0
        })
        .collect();
    ensure(!deep.is_empty(), || "no low-position documents".into())?;
    let inflated = deep.iter().filter(|&&i| rows_sq[i].coec > true_r[i] && rows_sq[i].coec > rows[i].coec).count();
    ensure(inflated == deep.len(), || format!("only {inflated}/{} low-position docs inflated", deep.len()))?;
    let mean_ratio = deep.iter().map(|&i| rows_sq[i].coec / true_r[i]).sum::<f64>() / deep.len() as f64;
    Ok(format!(
        "tau coec {tau_coec:.4} > raw {tau_raw:.4}; overstated curve inflates {}/{} low-position docs (mean coec/R {mean_ratio:.2})",
        inflated,
        deep.len()
    ))
}

/// Mean per-query term of a streamed log.
fn streamed_mean<F>(sim: &CorpusSimulator, term: F) -> f64
where
    F: Fn(&SearchSession) -> f64 + Sync + Send,
{
    let (sum, n) =
        sim.fold(Exec::default(), || (0.0, 0u64), |(s, n), x| (s + term(x), n + 1), |a, b| (a.0 + b.0, a.1 + b.1));
    sum / n as f64
}

fn ips_consistency() -> Check {
    let relevance: Vec<f64> = (0..10).map(|i| 0.9 - 0.08 * i as f64).collect();
    let catalog = Catalog::from_relevances(&relevance).unwrap();
    let theta: Vec<f64> = THETA_11[..10].to_vec();
    let table =
        PropensityTable::from_curve(InterfaceId::new("search").unwrap(), &theta, PropensitySource::Assumed).unwrap();
    let query = QueryId::new("q0").unwrap();
    let challenger: RankerScores =
        catalog.docs.iter().map(|d| (query.clone(), d.doc_id.clone(), d.relevance)).collect();
    // logging policy shows the catalog worst-first
    let logging = RankerStub::FixedPermutation { order: catalog.docs.iter().rev().map(|d| d.doc_id.clone()).collect() };
    let holdout = AllocationPlan { holdout_fraction: 1.0, ..AllocationPlan::default() };
    let lambda = LambdaKind::Dcg;

    let relative_gap =
        |logged: BehaviorConfig, saturated: BehaviorConfig, seed: u64| -> Result<(f64, f64, f64), String> {
            let f_logs = simulator(&relevance, logging.clone(), holdout.clone(), logged, IPS_SESSIONS, seed);
            let g_logs =
                simulator(&relevance, RankerStub::ByRelevance, holdout.clone(), saturated, IPS_SESSIONS, seed + 1);
            let ips = streamed_mean(&f_logs, |s| {
                ips_query_term(s, &challenger, &table, lambda, &IpsOptions::default()).unwrap().0
            });
            let on_policy = streamed_mean(&g_logs, |s| on_policy_term(s, lambda).0);
            Ok((ips, on_policy, (ips / on_policy - 1.0).abs()))
        };
    let ones = vec![1.0; 10];
    let (ips, target, gap) = relative_gap(BehaviorConfig::pbm(theta.clone()), BehaviorConfig::pbm(ones.clone()), 41)?;
    ensure(gap < IPS_REL_TOL, || format!("pbm: ips {ips:.4} vs on-policy {target:.4} ({:.2}%)", 100.0 * gap))?;

    let eps_plus = PositionCurve((0..10).map(|i| 1.0 - 0.06 * i as f64).collect());
    let eps_minus = PositionCurve(vec![0.1; 10]);
    let trust = |theta: Vec<f64>| BehaviorConfig::TrustPbm {
        theta: PositionCurve(theta),
        eps_plus: eps_plus.clone(),
        eps_minus: eps_minus.clone(),
    };
    let (t_ips, t_target, t_gap) = relative_gap(trust(theta), trust(ones), 43)?;
    ensure(t_gap > IPS_REL_TOL, || format!("trust_pbm gap only {:.2}%", 100.0 * t_gap))?;
    Ok(format!(
        "pbm: ips {ips:.4} vs on-policy {target:.4} ({:.2}%); trust_pbm: {t_ips:.4} vs {t_target:.4} ({:.2}%)",
        100.0 * gap,
        100.0 * t_gap
    ))
}

fn power() -> Check {
    let n = required_sample(&PowerSpec::new(0.10, 0.05)).map_err(|e| e.to_string())?;
    ensure(n == POWER_N, || format!("required_sample = {n}"))?;
    let mc = monte_carlo_power(2.0, 0.05, n, 0.05, 10_000, 8).map_err(|e| e.to_string())?;
    ensure(POWER_BAND.0 <= mc && mc <= POWER_BAND.1, || format!("monte carlo power {mc:.4}"))?;
    let cases = [((0.10, 0.06), (0.09, 0.07)), ((0.08, 0.04), (0.07, 0.05)), ((0.20, 0.10), (0.175, 0.125))];
    for ((oh, ol), (eh, el)) in cases {
        let (h, l) = hypothesized_effect(oh, ol).map_err(|e| e.to_string())?;
        ensure((h - eh).abs() <= HALF_GAP_TOL && (l - el).abs() <= HALF_GAP_TOL, || {
            format!("({oh}, {ol}) planned as ({h}, {l}), expected ({eh}, {el})")
        })?;
    }
    Ok(format!("n = {n}, monte carlo power {mc:.4}, half-gap rule matches 3/3 hand cases"))
}

fn report_for(dir: &std::path::Path, name: &str, behavior: Value) -> Value {
    let cfg = write_json(dir, &format!("{name}.json"), &corpus_config(behavior, 50_000, &default_pairs(), 0.5));
    let sim = dir.join(format!("{name}-sim"));
    let rep = dir.join(format!("{name}-report"));
    ok(&["simulate", "--config", p(&cfg), "--out", p(&sim), "--seed", "3"]);
    ok(&["report", "--input", p(&sim.join("log.jsonl")), "--out", p(&rep)]);
    serde_json::from_str(&fs::read_to_string(rep.join("report.json")).unwrap()).unwrap()
}

fn behavior_diagnostics() -> Check {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let cascade = report_for(dir.path(), "cascade", json!({ "kind": "cascade" }));
    let pbm = report_for(dir.path(), "pbm", json!({ "kind": "pbm", "theta": theta_19() }));
    let count = |r: &Value, k: &str| r[k].as_u64().unwrap();
    // no two-contact session means no reversal can occur; the rate is 0/0
    let cascade_reversal = cascade["reversal_rate"].as_f64().unwrap_or(0.0);
    ensure(
        count(&cascade, "multi_contact_sessions") == 0
            && count(&cascade, "lower_first") == 0
            && cascade_reversal == 0.0,
        || format!("cascade report: {cascade}"),
    )?;
    let pbm_reversal = pbm["reversal_rate"].as_f64().unwrap_or(0.0);
    ensure(count(&pbm, "multi_contact_sessions") > 0 && pbm_reversal > 0.0, || format!("pbm report: {pbm}"))?;
    Ok(format!(
        "cascade: 0 multi-contact, 0 reversals of {} contacted sessions; pbm: {} multi-contact, reversal rate {pbm_reversal:.3}",
        count(&cascade, "sessions_with_contact"),
        count(&pbm, "multi_contact_sessions"),
    ))
}

fn allocation() -> Check {
    let plan = AllocationPlan::default();
    let arms = plan.arms();
    let mut observed = vec![0u64; arms.len()];
    for i in 0..ALLOC_VISITORS {
        let arm = assign_arm(&VisitorId::new(format!("visitor-{i}")).unwrap(), &plan).arm;
        observed[arms.iter().position(|&a| a == arm).unwrap()] += 1;
    }
    let shares: Vec<f64> = arms.iter().map(|&a| plan.share(a)).collect();
    for (arm, (&n, &share)) in arms.iter().zip(observed.iter().zip(&shares)) {
        let got = n as f64 / ALLOC_VISITORS as f64;
        ensure((got - share).abs() <= ALLOC_TOL, || format!("{arm:?}: {got:.5} vs {share:.5}"))?;
    }
    let test = chi_square_gof(&observed, &shares);
    ensure(test.p_value > ALLOC_ALPHA, || format!("chi-square p = {:.5}", test.p_value))?;
    Ok(format!(
        "holdout {:.4}%, arms {:.3}%..{:.3}%, chi-square p = {:.3}",
        100.0 * observed[0] as f64 / ALLOC_VISITORS as f64,
        100.0 * *observed[1..].iter().min().unwrap() as f64 / ALLOC_VISITORS as f64,
        100.0 * *observed[1..].iter().max().unwrap() as f64 / ALLOC_VISITORS as f64,
        test.p_value
    ))
}

fn determinism() -> Check {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let cfg = write_json(
        d,
        "cfg.json",
        &corpus_config(json!({ "kind": "pbm", "theta": theta_19() }), 20_000, &default_pairs(), 0.5),
    );
    ok(&["simulate", "--config", p(&cfg), "--out", p(&d.join("sim")), "--seed", "17"]);
    ok(&["estimate", "--input", p(&d.join("sim/log.jsonl")), "--out", p(&d.join("est")), "--seed", "17"]);
    let mut compared = 0;
    for run in ["sim", "est"] {
        let again = d.join(format!("{run}-replay"));
        ok(&["replay", "--manifest", p(&d.join(run).join("manifest.json")), "--out", p(&again)]);
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(d.join(run).join("manifest.json")).unwrap()).unwrap();
        for out in manifest["outputs"].as_array().unwrap() {
            let rel = out["path"].as_str().unwrap();
            let (a, b) = (fs::read(d.join(run).join(rel)).unwrap(), fs::read(again.join(rel)).unwrap());
            ensure(a == b, || format!("{run}/{rel} differs on replay"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical after replay"))
}

fn main() -> ExitCode {
    let checks: [Criterion; 9] = [
        ("theta_recovery", theta_recovery),
        ("pair_ratio_unbiasedness", unbiasedness),
        ("bootstrap_coverage", bootstrap_coverage),
        ("coec_debiasing", coec_debiasing),
        ("ips_counterfactual_consistency", ips_consistency),
        ("power", power),
        ("behavior_diagnostics", behavior_diagnostics),
        ("allocation", allocation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
