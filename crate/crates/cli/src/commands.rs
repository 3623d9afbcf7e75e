//! Subcommand bodies. Each returns the inputs it read and the files it wrote
//! (relative to the output directory) so the caller can record a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rankprop::coec::FeatureAccumulator;
use rankprop::estimator::{
    estimate_table, BehaviorDiagnostics, BootstrapOptions, EstimateOptions, PairAggregator, ProgramCostAccumulator,
};
use rankprop::exec::derive_seed;
use rankprop::ips::{
    compare_rankers, ips_query_term, on_policy_term, IpsOptions, LambdaKind, MetricAccumulator, RankerScores,
};
use rankprop::log::{merge_logs, MergeOptions, SessionStream};
use rankprop::power::{monte_carlo_power_with, plan_pairs, TrafficSpec};
use rankprop::randpair::AllocationPlan;
use rankprop::sim::{CorpusSimulator, CorpusSpec};
use rankprop::{DocumentId, Exec, InterfaceId, Position, QueryId, SearchSession};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{file_stem, Artifact, DateRange, Metadata, PairSummary};
use crate::cli::{Cli, Command};
use crate::error::{Classify, CliResult, Failure};
use crate::manifest::sha256_bytes;

pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub struct Ctx<'a> {
    pub cli: &'a Cli,
    pub out: &'a Path,
}

impl Ctx<'_> {
    fn exec(&self) -> Exec {
        if self.cli.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }

    fn sessions(&self) -> CliResult<SessionStream> {
        if self.cli.input.is_empty() {
            return Err(Failure::new("usage", "at least one --input log is required"));
        }
        let opts = MergeOptions { max_reject_rate: self.cli.max_reject_rate, exec: self.exec(), ..Default::default() };
        Ok(merge_logs(&self.cli.input, opts)?)
    }

    fn interface_filter(&self) -> CliResult<Option<InterfaceId>> {
        match &self.cli.interface {
            None => Ok(None),
            Some(s) => InterfaceId::new(s.clone())
                .map(Some)
                .ok_or_else(|| Failure::new("usage", "--interface must not be empty")),
        }
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    fn plan(&self, path: Option<&Path>) -> CliResult<AllocationPlan> {
        let mut plan = match path {
            Some(p) => serde_json::from_str(&read_text(p)?).class("config")?,
            None => AllocationPlan::default(),
        };
        if let Some(pairs) = &self.cli.pairs {
            plan = plan.with_pairs(&pairs.0);
        }
        plan.validate().class("config")?;
        Ok(plan)
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn log_stats(stream: &SessionStream) {
    let s = stream.stats();
    tracing::info!(lines = s.lines, accepted = s.accepted, rejected = s.rejected, "log read");
    if s.out_of_order > 0 {
        tracing::warn!(count = s.out_of_order, "sessions out of timestamp order within a file");
    }
    for r in &s.rejects {
        tracing::warn!(path = %r.path.display(), line = r.line, class = r.class, "{}", r.message);
    }
}

fn write_json(w: &mut impl Write, value: &impl Serialize) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *w, value).class("io")?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn run_command(ctx: &Ctx) -> CliResult<Outcome> {
    match &ctx.cli.command {
        Command::Simulate { config } => simulate(ctx, config),
        Command::Estimate { plan, no_interpolate } => estimate(ctx, plan.as_deref(), !no_interpolate),
        Command::Features { propensity } => features(ctx, propensity),
        Command::Evaluate { propensity, scores, scores_b, clip_floor } => {
            evaluate(ctx, propensity, scores, scores_b.as_deref(), *clip_floor)
        }
        Command::Power { rates, daily_sessions, plan, alpha, power: target, mc_sims } => {
            power(ctx, rates, *daily_sessions, plan.as_deref(), *alpha, *target, *mc_sims)
        }
        Command::Report => report(ctx),
        Command::Serve { .. } | Command::Replay { .. } => unreachable!("handled by the caller"),
    }
}

fn simulate(ctx: &Ctx, config: &Path) -> CliResult<Outcome> {
    let spec: CorpusSpec = serde_json::from_str(&read_text(config)?).class("config")?;
    let sim = CorpusSimulator::new(spec, ctx.cli.seed)?;
    let n = sim.write_log(ctx.create("log.jsonl")?, ctx.exec())?;
    tracing::info!(sessions = n, "simulated");
    Ok(Outcome { inputs: vec![config.to_path_buf()], outputs: vec!["log.jsonl".into()] })
}

struct InterfaceAgg {
    agg: PairAggregator,
    sessions: u64,
    first_ts: i64,
    last_ts: i64,
}

#[derive(Serialize)]
struct ThetaRow {
    position: Position,
    theta: f64,
    ci_low: f64,
    ci_high: f64,
    n: Option<u64>,
}

fn estimate(ctx: &Ctx, plan_path: Option<&Path>, interpolate: bool) -> CliResult<Outcome> {
    let plan = ctx.plan(plan_path)?;
    let plan_hash = sha256_bytes(&serde_json::to_vec(&plan).class("config")?);
    let filter = ctx.interface_filter()?;

    let mut by_iface: BTreeMap<InterfaceId, InterfaceAgg> = BTreeMap::new();
    let mut stream = ctx.sessions()?;
    for s in stream.by_ref() {
        let s = s?;
        if filter.as_ref().is_some_and(|f| f != s.interface()) {
            continue;
        }
        let e = by_iface.entry(s.interface().clone()).or_insert_with(|| InterfaceAgg {
            agg: PairAggregator::new(&plan.swap_pairs),
            sessions: 0,
            first_ts: i64::MAX,
            last_ts: i64::MIN,
        });
        e.agg.add(&s);
        e.sessions += 1;
        e.first_ts = e.first_ts.min(s.timestamp_ms());
        e.last_ts = e.last_ts.max(s.timestamp_ms());
    }
    log_stats(&stream);
    if by_iface.is_empty() {
        return Err(Failure::new("empty_log", "no sessions to estimate from"));
    }

    let opts = EstimateOptions {
        bootstrap: BootstrapOptions {
            replications: ctx.cli.bootstrap_reps,
            seed: ctx.cli.seed,
            exec: ctx.exec(),
            ..Default::default()
        },
        interpolate_gap: interpolate,
    };
    let mut outputs = Vec::new();
    for (iface, data) in by_iface {
        let mut est = estimate_table(&data.agg, iface.clone(), &opts)?;
        est.table.created_at = data.last_ts;
        let pairs: Vec<PairSummary> = est
            .pairs
            .iter()
            .map(|p| PairSummary {
                hi: p.estimate.hi,
                lo: p.estimate.lo,
                ratio: p.estimate.ratio,
                ci_low: p.estimate.ci.0,
                ci_high: p.estimate.ci.1,
                n: p.estimate.n_effective,
                counts: p.counts,
            })
            .collect();
        let n_by_lo: BTreeMap<Position, u64> = pairs.iter().map(|p| (p.lo, p.n)).collect();
        let rows: Vec<ThetaRow> = est
            .table
            .positions()
            .map(|k| {
                let (ci_low, ci_high) = est.table.interval(k).expect("validated table");
                ThetaRow { position: k, theta: est.table.get(k).unwrap(), ci_low, ci_high, n: n_by_lo.get(&k).copied() }
            })
            .collect();
        let metadata = Metadata {
            sessions: data.sessions,
            date_range: DateRange { first_ts_ms: data.first_ts, last_ts_ms: data.last_ts },
            pairs,
            plan_hash: plan_hash.clone(),
            interpolation: "log-linear".into(),
            interpolated_positions: est.interpolated.clone(),
            bootstrap_reps: opts.bootstrap.replications,
            confidence: opts.bootstrap.confidence,
            seed: ctx.cli.seed,
        };
        let stem = file_stem(&iface);
        let artifact = Artifact::new(est.table, metadata);
        let mut w = ctx.create(&format!("{stem}.json"))?;
        w.write_all(artifact.to_json()?.as_bytes())?;
        w.flush()?;
        let mut csv = csv::Writer::from_writer(ctx.create(&format!("{stem}.csv"))?);
        for r in rows {
            csv.serialize(r)?;
        }
        csv.flush()?;
        outputs.push(format!("{stem}.json").into());
        outputs.push(format!("{stem}.csv").into());
    }
    let mut inputs = ctx.cli.input.clone();
    inputs.extend(plan_path.map(Path::to_path_buf));
    Ok(Outcome { inputs, outputs })
}

#[derive(Serialize)]
struct FeatureCsvRow<'a> {
    doc_id: &'a str,
    n: u64,
    contacts: u64,
    raw_rate: f64,
    coec: f64,
    sum_theta: f64,
}

fn features(ctx: &Ctx, propensity: &Path) -> CliResult<Outcome> {
    let table = Artifact::read(propensity)?.table()?;
    let mut acc = FeatureAccumulator::new(&table);
    let mut skipped = 0u64;
    let mut stream = ctx.sessions()?;
    for s in stream.by_ref() {
        let s = s?;
        if s.interface() != &table.interface {
            skipped += 1;
            continue;
        }
        acc.add(&s)?;
    }
    log_stats(&stream);
    if skipped > 0 {
        tracing::info!(skipped, "sessions from other interfaces ignored");
    }
    let mut csv = csv::Writer::from_writer(ctx.create("features.csv")?);
    for r in acc.finish() {
        csv.serialize(FeatureCsvRow {
            doc_id: r.doc.as_str(),
            n: r.n_impressions,
            contacts: r.contacts,
            raw_rate: r.raw_rate,
            coec: r.coec,
            sum_theta: r.sum_theta,
        })?;
    }
    csv.flush()?;
    let mut inputs = ctx.cli.input.clone();
    inputs.push(propensity.to_path_buf());
    Ok(Outcome { inputs, outputs: vec!["features.csv".into()] })
}

#[derive(Deserialize)]
struct ScoreRow {
    query_id: String,
    doc_id: String,
    score: f64,
}

pub fn read_scores(path: &Path) -> CliResult<RankerScores> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    let mut scores = RankerScores::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row.class("scores")?;
        let q = QueryId::new(row.query_id).ok_or_else(|| Failure::new("scores", "empty query_id"))?;
        let d = DocumentId::new(row.doc_id).ok_or_else(|| Failure::new("scores", "empty doc_id"))?;
        scores.insert(q, d, row.score);
    }
    Ok(scores)
}

fn evaluate(
    ctx: &Ctx,
    propensity: &Path,
    scores_path: &Path,
    scores_b_path: Option<&Path>,
    clip_floor: Option<f64>,
) -> CliResult<Outcome> {
    if clip_floor.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
        return Err(Failure::new("usage", "--clip-floor must lie in (0, 1]"));
    }
    let table = Artifact::read(propensity)?.table()?;
    let scores = read_scores(scores_path)?;
    let lambda: LambdaKind = ctx.cli.lambda.into();
    let opts = IpsOptions { clip_floor };

    let mut stream = ctx.sessions()?;
    let mut ips = MetricAccumulator::default();
    let mut logged = MetricAccumulator::default();
    let mut kept: Vec<SearchSession> = Vec::new();
    for s in stream.by_ref() {
        let s = s?;
        if s.interface() != &table.interface {
            continue;
        }
        let (t, c) = ips_query_term(&s, &scores, &table, lambda, &opts)?;
        ips.push(t, c);
        let (t, c) = on_policy_term(&s, lambda);
        logged.push(t, c);
        if scores_b_path.is_some() {
            kept.push(s);
        }
    }
    log_stats(&stream);
    let mut report = json!({
        "interface": table.interface,
        "lambda": lambda,
        "direction": lambda.direction(),
        "clip_floor": clip_floor,
        "ips": ips.finish(lambda)?,
        "logged_policy": logged.finish(lambda)?,
    });
    let mut inputs = ctx.cli.input.clone();
    inputs.extend([propensity.to_path_buf(), scores_path.to_path_buf()]);
    if let Some(b) = scores_b_path {
        let scores_b = read_scores(b)?;
        let cmp = compare_rankers(
            &kept,
            &scores,
            &scores_b,
            &table,
            lambda,
            ctx.cli.bootstrap_reps,
            ctx.cli.seed,
            ctx.exec(),
        )?;
        report["comparison"] = json!(cmp);
        inputs.push(b.to_path_buf());
    }
    write_json(&mut ctx.create("evaluation.json")?, &report)?;
    Ok(Outcome { inputs, outputs: vec!["evaluation.json".into()] })
}

#[derive(Deserialize)]
struct RateRow {
    position: Position,
    contact_rate: f64,
}

#[derive(Serialize)]
struct PlanRow {
    hi: Position,
    lo: Position,
    observed_hi: Option<f64>,
    observed_lo: Option<f64>,
    p_hi: Option<f64>,
    p_lo: Option<f64>,
    n_per_cell: Option<u64>,
    days: Option<f64>,
    mc_power: Option<f64>,
    note: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn power(
    ctx: &Ctx,
    rates: &Path,
    daily_sessions: f64,
    plan_path: Option<&Path>,
    alpha: f64,
    power: f64,
    mc_sims: usize,
) -> CliResult<Outcome> {
    if daily_sessions.is_nan() || daily_sessions <= 0.0 {
        return Err(Failure::new("usage", "--daily-sessions must be positive"));
    }
    let plan = ctx.plan(plan_path)?;
    let mut reader =
        csv::Reader::from_path(rates).map_err(|e| Failure::new("io", format!("{}: {e}", rates.display())))?;
    let observed = reader
        .deserialize::<RateRow>()
        .map(|r| r.map(|r| (r.position, r.contact_rate)))
        .collect::<Result<BTreeMap<_, _>, _>>()
        .class("csv")?;
    let traffic = TrafficSpec { daily_sessions, holdout_fraction: plan.holdout_fraction, alpha, power };
    let mut csv = csv::Writer::from_writer(ctx.create("power_plan.csv")?);
    for (i, p) in plan_pairs(&observed, &plan.swap_pairs, &traffic).into_iter().enumerate() {
        let mc_power = match p.planned {
            Some(pl) if mc_sims > 0 => Some(monte_carlo_power_with(
                ctx.exec(),
                pl.p_hi / pl.p_lo,
                pl.p_lo,
                pl.n_per_cell,
                alpha,
                mc_sims,
                derive_seed(ctx.cli.seed, i as u64),
            )?),
            _ => None,
        };
        let finite = |x: f64| x.is_finite().then_some(x);
        csv.serialize(PlanRow {
            hi: p.hi,
            lo: p.lo,
            observed_hi: finite(p.observed_hi),
            observed_lo: finite(p.observed_lo),
            p_hi: p.planned.map(|x| x.p_hi),
            p_lo: p.planned.map(|x| x.p_lo),
            n_per_cell: p.planned.map(|x| x.n_per_cell),
            days: p.planned.map(|x| x.days),
            mc_power,
            note: p.note,
        })?;
    }
    csv.flush()?;
    let mut inputs = vec![rates.to_path_buf()];
    inputs.extend(plan_path.map(Path::to_path_buf));
    Ok(Outcome { inputs, outputs: vec!["power_plan.csv".into()] })
}

#[derive(Serialize)]
struct PositionRow {
    position: Position,
    impressions: u64,
    views: u64,
    contacts: u64,
    contact_rate: f64,
    view_rate: f64,
}

fn report(ctx: &Ctx) -> CliResult<Outcome> {
    let filter = ctx.interface_filter()?;
    let mut diag = BehaviorDiagnostics::default();
    let mut cost = ProgramCostAccumulator::default();
    let mut stream = ctx.sessions()?;
    for s in stream.by_ref() {
        let s = s?;
        if filter.as_ref().is_some_and(|f| f != s.interface()) {
            continue;
        }
        diag.add(&s);
        cost.add(&s);
    }
    log_stats(&stream);
    if diag.sessions == 0 {
        return Err(Failure::new("empty_log", "no sessions to report on"));
    }

    let mut csv = csv::Writer::from_writer(ctx.create("contact_rate_by_position.csv")?);
    for (&position, st) in &diag.by_position {
        csv.serialize(PositionRow {
            position,
            impressions: st.impressions,
            views: st.views,
            contacts: st.contacts,
            contact_rate: st.contact_rate(),
            view_rate: st.view_rate(),
        })?;
    }
    csv.flush()?;

    let (program_cost, program_cost_note) = match cost.finish() {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let reversal = diag.reversal_rate();
    let report = json!({
        "sessions": diag.sessions,
        "sessions_with_contact": diag.sessions_with_contact,
        "multi_contact_sessions": diag.multi_contact,
        "two_contact_sessions": diag.two_contact,
        "reversal_rate": reversal.rate,
        "lower_first": reversal.lower_first,
        "abandoned_partial_view": diag.abandoned_partial_view,
        "viewed_without_contact": diag.viewed_without_contact,
        "contact_above_last_view": diag.contact_above_last_view,
        "program_cost": program_cost,
        "program_cost_note": program_cost_note,
    });
    write_json(&mut ctx.create("report.json")?, &report)?;
    Ok(Outcome {
        inputs: ctx.cli.input.clone(),
        outputs: vec!["contact_rate_by_position.csv".into(), "report.json".into()],
    })
}
