//! `skcv` command-line tool.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or I/O error.

mod args;
mod commands;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use skcv_core::SweepMode;

use args::{Cli, Command};

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_manifest(out: &Path, manifest: &Value) -> Result<()> {
    let path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cmd: &Command, out: &Path) -> Result<commands::Outcome> {
    match cmd {
        Command::Synth(a) => commands::synth(a, out),
        Command::Diagnose(a) => commands::diagnose(a, out),
        Command::Skcv(a) => commands::curve(a, SweepMode::Skcv, out),
        Command::Rlo(a) => commands::curve(a, SweepMode::Rlo, out),
        Command::Plan(a) => commands::plan(a, out),
        Command::Pairs(a) => commands::pairs(a, out),
    }
}

fn run(argv: Vec<String>) -> Result<()> {
    let cli = Cli::try_parse_from(&argv)?;
    let cmd = &cli.command;
    let common = cmd.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let data_sha256 = common.data.as_deref().map(sha256_file).transpose()?;

    let mut manifest = json!({
        "tool": "skcv",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "args": args::replay_args(&argv),
        "config": cmd,
        "data_sha256": data_sha256,
        "status": "running",
    });
    write_manifest(&common.out, &manifest)?;

    let start = Instant::now();
    let result = execute(cmd, &common.out);
    manifest["wall_clock_seconds"] = json!(start.elapsed().as_secs_f64());
    match &result {
        Ok(outcome) => {
            manifest["status"] = json!("completed");
            manifest["outputs"] = json!(outcome.outputs);
            manifest["skip_log"] = outcome.skip_log.clone();
        }
        Err(e) => {
            manifest["status"] = json!("failed");
            manifest["error"] = json!(format!("{e:#}"));
        }
    }
    write_manifest(&common.out, &manifest)?;
    result.map(|_| ())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let computational = err
        .chain()
        .find_map(|e| e.downcast_ref::<skcv_core::Error>())
        .is_some_and(|e| !e.is_usage_error());
    if computational {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let result = args::expand_config(argv).and_then(run);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return ExitCode::from(if clap_err.use_stderr() { 2 } else { 0 });
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
