//! Command-line front end and scenario service.

pub mod artifact;
pub mod cli;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod server;

use std::fs;
use std::path::PathBuf;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::commands::{run_command, Ctx};
use crate::error::{CliResult, Failure};
use crate::manifest::{hash_files, sha256_file, FileHash, Manifest};

/// Parses `args` (without the program name) and runs the command.
pub fn run(args: Vec<String>) -> CliResult<()> {
    let cli = parse(&args)?;
    execute(cli, args)
}

pub fn parse(args: &[String]) -> CliResult<Cli> {
    Cli::try_parse_from(std::iter::once("rankprop".to_string()).chain(args.iter().cloned())).map_err(|e| {
        let text = e.to_string();
        let first = text.lines().next().unwrap_or("invalid arguments");
        Failure::new("usage", first.trim_start_matches("error: "))
    })
}

fn execute(cli: Cli, args: Vec<String>) -> CliResult<()> {
    match &cli.command {
        Command::Serve { artifacts, cors_origin } => {
            let state = server::AppState::load(artifacts)?;
            let cors = server::cors(cors_origin)?;
            server::serve(state, cli.port, cors)
        }
        Command::Replay { manifest } => replay(manifest, cli.out.clone()),
        _ => {
            run_recorded(&cli, args)?;
            Ok(())
        }
    }
}

/// Runs a file-producing command and writes its manifest.
fn run_recorded(cli: &Cli, args: Vec<String>) -> CliResult<Manifest> {
    let out =
        cli.out.clone().ok_or_else(|| Failure::new("usage", format!("{} requires --out <dir>", cli.command.name())))?;
    fs::create_dir_all(&out).map_err(|e| Failure::new("io", format!("{}: {e}", out.display())))?;
    let outcome = run_command(&Ctx { cli, out: &out })?;
    let outputs = outcome
        .outputs
        .iter()
        .map(|p| Ok(FileHash { path: p.clone(), sha256: sha256_file(&out.join(p))? }))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "rankprop".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.command.name().into(),
        args,
        inputs: hash_files(&outcome.inputs)?,
        outputs,
    };
    manifest.write(&out)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, out.join(&o.path).display());
    }
    Ok(manifest)
}

/// Replaces any `--out` in `args` with `out`.
fn with_out(args: &[String], out: &std::path::Path) -> Vec<String> {
    let mut res = Vec::with_capacity(args.len() + 2);
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            res.push(a.clone());
        }
    }
    res.push("--out".into());
    res.push(out.display().to_string());
    res
}

fn replay(path: &std::path::Path, out: Option<PathBuf>) -> CliResult<()> {
    let recorded = Manifest::read(path)?;
    recorded.check_inputs()?;
    let args = match &out {
        Some(o) => with_out(&recorded.args, o),
        None => recorded.args.clone(),
    };
    let cli = parse(&args)?;
    if matches!(cli.command, Command::Replay { .. } | Command::Serve { .. }) {
        return Err(Failure::new("manifest", format!("cannot replay `{}`", cli.command.name())));
    }
    let fresh = run_recorded(&cli, args)?;
    if fresh.outputs != recorded.outputs {
        let differing: Vec<String> = recorded
            .outputs
            .iter()
            .filter(|o| !fresh.outputs.contains(o))
            .map(|o| o.path.display().to_string())
            .collect();
        return Err(Failure::new("replay_mismatch", format!("outputs differ: {}", differing.join(", "))));
    }
    println!("replay matches {}", path.display());
    Ok(())
}
