use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rankprop::ips::LambdaKind;
use rankprop::Position;

#[derive(Debug, Clone, Parser)]
#[command(name = "rankprop", version, about = "Position-bias estimation from swap-randomized search logs")]
pub struct Cli {
    /// Master seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Session log(s), line-delimited JSON. Repeatable.
    #[arg(long, global = true)]
    pub input: Vec<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Restrict to one interface.
    #[arg(long, global = true)]
    pub interface: Option<String>,
    /// Swap pairs as `hi-lo` separated by commas, e.g. `1-2,2-3,11-19`.
    #[arg(long, global = true, value_parser = parse_pairs)]
    pub pairs: Option<PairList>,
    #[arg(long, global = true, default_value_t = 1000)]
    pub bootstrap_reps: usize,
    #[arg(long, global = true, value_enum, default_value_t = Lambda::Dcg)]
    pub lambda: Lambda,
    #[arg(long, global = true, default_value_t = 8080)]
    pub port: u16,
    /// Abort log reading when more than this share of lines is rejected.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub max_reject_rate: f64,
    /// Run single-threaded. Outputs are identical either way.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a session log from a corpus config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate propensities from randomized logs.
    Estimate {
        /// Allocation plan JSON; defaults to the standard 11-arm plan.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Leave unmeasured positions out instead of interpolating them.
        #[arg(long)]
        no_interpolate: bool,
    },
    /// Raw and propensity-normalized contact rates per document.
    Features {
        #[arg(long)]
        propensity: PathBuf,
    },
    /// Inverse-propensity evaluation of challenger scores.
    Evaluate {
        #[arg(long)]
        propensity: PathBuf,
        /// CSV with columns query_id, doc_id, score.
        #[arg(long)]
        scores: PathBuf,
        /// Second challenger to compare against.
        #[arg(long)]
        scores_b: Option<PathBuf>,
        #[arg(long)]
        clip_floor: Option<f64>,
    },
    /// Sessions and days needed per swap pair.
    Power {
        /// CSV with columns position, contact_rate.
        #[arg(long)]
        rates: PathBuf,
        #[arg(long)]
        daily_sessions: f64,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        /// Monte-Carlo cross-check simulations per pair; 0 disables.
        #[arg(long, default_value_t = 2000)]
        mc_sims: usize,
    },
    /// Behavior diagnostics and program cost.
    Report,
    /// Serve propensity tables and forecasts over HTTP.
    Serve {
        /// Directory holding propensity_*.json artifacts.
        #[arg(long)]
        artifacts: PathBuf,
        /// Allowed CORS origin. Repeatable; any origin when absent.
        #[arg(long)]
        cors_origin: Vec<String>,
    },
    /// Re-run a recorded command and compare its outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Features { .. } => "features",
            Command::Evaluate { .. } => "evaluate",
            Command::Power { .. } => "power",
            Command::Report => "report",
            Command::Serve { .. } => "serve",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lambda {
    Arp,
    Dcg,
}

impl From<Lambda> for LambdaKind {
    fn from(l: Lambda) -> Self {
        match l {
            Lambda::Arp => LambdaKind::Arp,
            Lambda::Dcg => LambdaKind::Dcg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList(pub Vec<(Position, Position)>);

fn parse_pairs(s: &str) -> Result<PairList, String> {
    s.split(',')
        .map(|p| {
            let (hi, lo) =
                p.trim().split_once(['-', ':']).ok_or_else(|| format!("pair `{p}` is not of the form hi-lo"))?;
            let hi = hi.trim().parse::<Position>().map_err(|e| format!("pair `{p}`: {e}"))?;
            let lo = lo.trim().parse::<Position>().map_err(|e| format!("pair `{p}`: {e}"))?;
            Ok((hi, lo))
        })
        .collect::<Result<Vec<_>, String>>()
        .map(PairList)
}
