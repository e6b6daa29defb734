//! One binary, three personalities: install or symlink it as `boltd`,
//! `boltctl` or `boltbench`, or pass the personality as the first argument.

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use bolt::harness::bench::{run_bench, BenchArgs};
use bolt::service::cli::{run_ctl, run_daemon, CtlArgs, DaemonArgs};
use clap::Parser;

const TOOLS: [&str; 3] = ["boltd", "boltctl", "boltbench"];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args: Vec<OsString> = std::env::args_os().collect();
    let invoked = args.first().and_then(|a| Path::new(a).file_stem()).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tool = if TOOLS.contains(&invoked.as_str()) {
        invoked
    } else {
        match args.get(1).map(|a| a.to_string_lossy().into_owned()) {
            Some(t) if TOOLS.contains(&t.as_str()) => {
                args.remove(0);
                t
            }
            _ => {
                eprintln!("usage: bolt {{boltd|boltctl|boltbench}} [args...]");
                return ExitCode::from(2);
            }
        }
    };
    let result = match tool.as_str() {
        "boltd" => run_daemon(&DaemonArgs::parse_from(args)),
        "boltctl" => run_ctl(&CtlArgs::parse_from(args), &mut std::io::stdin().lock(), &mut std::io::stdout().lock()),
        _ => run_bench(&BenchArgs::parse_from(args)).map(|r| print!("{}", r.summary())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{tool}: {e}");
            ExitCode::FAILURE
        }
    }
}
