//! Node runner: executes one node plan from a manifest. Prints `READY` once
//! initialized, blocks until the orchestrator writes `GO` on stdin (the
//! start barrier), runs all edge devices, writes the result file, prints
//! `DONE`.

use clap::Parser;
use edgestress_core::plan::load_manifest;
use edgestress_core::runtime::{run_node, write_node_result};
use std::io::{BufRead, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "edgestress-node", about = "edgestress node runner", version)]
struct Args {
    /// Run manifest produced by `edgestress plan`
    #[arg(long)]
    manifest: PathBuf,
    /// Which node plan of the manifest to execute
    #[arg(long)]
    node_id: String,
    /// Result file path
    #[arg(long)]
    out: PathBuf,
    /// Record full per-packet send/receive logs
    #[arg(long)]
    full_logs: bool,
}

fn fail(msg: impl std::fmt::Display) -> ! {
    eprintln!("edgestress-node: error: {msg}");
    std::process::exit(1);
}

fn main() {
    let args = Args::try_parse().unwrap_or_else(|e| {
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => 64,
        };
        let _ = e.print();
        std::process::exit(code);
    });

    let text = std::fs::read_to_string(&args.manifest)
        .unwrap_or_else(|e| fail(format_args!("cannot read {}: {e}", args.manifest.display())));
    let plan = load_manifest(&text).unwrap_or_else(|e| fail(e));
    let node = plan
        .node(&args.node_id)
        .unwrap_or_else(|| fail(format_args!("manifest has no node `{}`", args.node_id)))
        .clone();

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "READY").and_then(|()| stdout.flush()).unwrap_or_else(|e| fail(e));

    // start barrier: the orchestrator releases every node at once
    let stdin = std::io::stdin().lock();
    let mut released = false;
    for line in stdin.lines() {
        match line {
            Ok(l) if l.trim() == "GO" => {
                released = true;
                break;
            }
            Ok(_) => continue,
            Err(e) => fail(e),
        }
    }
    if !released {
        fail("control input closed before GO");
    }

    let result = run_node(&plan, &node, args.full_logs).unwrap_or_else(|e| fail(e));
    write_node_result(&result, &args.out).unwrap_or_else(|e| fail(e));
    writeln!(stdout, "DONE").and_then(|()| stdout.flush()).unwrap_or_else(|e| fail(e));
}
