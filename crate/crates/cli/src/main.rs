//! `edgestress`: check a spec, plan it into a manifest, run the manifest,
//! report metrics, or serve the bundled test cloud.

use clap::{Parser, Subcommand, ValueEnum};
use edgestress_core::cloud::{fetch_stats, run_echo, run_mqtt_sink, CloudConfig, EchoProtocol};
use edgestress_core::metrics::{compute, render, ComputeOptions, ReportFormat, TransTimeMethod};
use edgestress_core::orchestrate::{self, LaunchConfig};
use edgestress_core::plan::{emit_manifest, load_manifest, resolve};
use edgestress_core::runtime::load_node_result;
use edgestress_core::validate::{exit_code, validate};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "edgestress",
    about = "DSL-driven stress testing for IoT cloud systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and statically validate a spec; exit 0 clean, 1 warnings, 2 errors.
    Check {
        /// Path to the .iotecs spec
        spec: PathBuf,
    },
    /// Resolve a spec into a run manifest.
    Plan {
        spec: PathBuf,
        /// Seed for offset sampling; defaults to a time-derived value
        /// (always recorded in the manifest)
        #[arg(long)]
        seed: Option<u64>,
        /// Manifest output path; stdout when omitted
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Execute a manifest: launch all nodes, collect results.
    Run {
        manifest: PathBuf,
        /// Directory for the manifest copy and per-node result files
        #[arg(short, long)]
        out: PathBuf,
        /// Record full per-packet send/receive logs
        #[arg(long)]
        full_logs: bool,
        /// Node-runner binary (default: edgestress-node next to this binary)
        #[arg(long)]
        node_binary: Option<PathBuf>,
    },
    /// Join node results (and optionally a cloud ledger) into a metrics report.
    Report {
        /// Results directory produced by `run`
        results: PathBuf,
        /// Control endpoint of a test cloud, host:port, for the cloud ledger
        #[arg(long)]
        cloud: Option<String>,
        #[arg(long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
        /// Cloud and nodes share one monotonic clock domain (same host);
        /// enables same-host TransTime instead of RTT/2
        #[arg(long)]
        same_host: bool,
    },
    /// Serve a bundled test cloud until interrupted.
    Cloud {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long)]
        port: u16,
        /// Accepted publish topic (MQTT only)
        #[arg(long)]
        topic: Option<String>,
        /// Reflect accepted publishes to this topic's subscribers (MQTT only)
        #[arg(long)]
        echo_topic: Option<String>,
        /// Drop everything beyond this packets-per-second budget
        #[arg(long)]
        throttle: Option<u64>,
        /// Keep per-packet records (needed for same-host TransTime)
        #[arg(long)]
        record: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Udp,
    Tcp,
    Mqtt,
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint() {
    let handler = on_sigint as extern "C" fn(libc::c_int) as usize as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

fn fail(msg: impl std::fmt::Display) -> ! {
    eprintln!("edgestress: error: {msg}");
    std::process::exit(1);
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        // help/version are not usage errors
        use clap::error::ErrorKind;
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => EXIT_USAGE,
        };
        let _ = e.print();
        std::process::exit(code);
    });
    match cli.verb {
        Verb::Check { spec } => check(&spec),
        Verb::Plan { spec, seed, out } => plan(&spec, seed, out.as_deref()),
        Verb::Run {
            manifest,
            out,
            full_logs,
            node_binary,
        } => run(&manifest, &out, full_logs, node_binary),
        Verb::Report {
            results,
            cloud,
            format,
            same_host,
        } => report(&results, cloud.as_deref(), format, same_host),
        Verb::Cloud {
            protocol,
            port,
            topic,
            echo_topic,
            throttle,
            record,
        } => cloud_serve(protocol, port, topic, echo_topic, throttle, record),
    }
}

fn read_spec(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| fail(format_args!("cannot read {}: {e}", path.display())))
}

fn check(spec_path: &Path) -> ! {
    let source = read_spec(spec_path);
    let ast = match edgestress_core::parse(&source) {
        Ok(ast) => ast,
        Err(e) => {
            match e.span() {
                Some(span) => eprintln!("{}:{span}: error: {e}", spec_path.display()),
                None => eprintln!("{}: error: {e}", spec_path.display()),
            }
            std::process::exit(2);
        }
    };
    let diags = validate(&ast);
    for d in &diags {
        println!("{}:{}", spec_path.display(), d.render());
    }
    std::process::exit(exit_code(&diags));
}

fn plan(spec_path: &Path, seed: Option<u64>, out: Option<&Path>) -> ! {
    let source = read_spec(spec_path);
    let ast = edgestress_core::parse(&source).unwrap_or_else(|e| fail(e));
    let diags = validate(&ast);
    if exit_code(&diags) == 2 {
        for d in &diags {
            eprintln!("{}:{}", spec_path.display(), d.render());
        }
        fail("spec has validation errors; fix them before planning");
    }
    let seed = seed.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    let plan = resolve(&ast, seed).unwrap_or_else(|e| fail(e));
    let text = emit_manifest(&plan);
    match out {
        Some(path) => std::fs::write(path, text).unwrap_or_else(|e| fail(e)),
        None => print!("{text}"),
    }
    std::process::exit(0);
}

fn default_node_binary() -> PathBuf {
    std::env::current_exe()
        .ok()
        .and_then(|p| p.parent().map(|d| d.join("edgestress-node")))
        .unwrap_or_else(|| PathBuf::from("edgestress-node"))
}

fn run(manifest_path: &Path, out: &Path, full_logs: bool, node_binary: Option<PathBuf>) -> ! {
    install_sigint();
    let text = read_spec(manifest_path);
    let plan = load_manifest(&text).unwrap_or_else(|e| fail(e));
    let mut cfg = LaunchConfig::new(
        node_binary.unwrap_or_else(default_node_binary),
        out.to_path_buf(),
    );
    cfg.full_logs = full_logs;

    let mut handles = orchestrate::launch_all(&plan, &cfg).unwrap_or_else(|e| fail(e));
    eprintln!(
        "edgestress: run {} started, {} nodes",
        plan.run_id,
        handles.len()
    );

    // wait until every node exits, the grace deadline passes, or the
    // operator interrupts; the latter two force-kill stragglers
    let deadline = std::time::Instant::now()
        + std::time::Duration::from_millis(plan.duration_ms + orchestrate::grace_ms(&plan));
    let mut all_exited = false;
    while !INTERRUPTED.load(Ordering::SeqCst) && std::time::Instant::now() < deadline {
        if orchestrate::poll_exits(&mut handles) {
            all_exited = true;
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    let interrupted = INTERRUPTED.load(Ordering::SeqCst);
    if !all_exited {
        orchestrate::terminate_now(&mut handles);
    }
    let (results, gaps, errors) = orchestrate::collect_and_cleanup(&mut handles);

    eprintln!(
        "edgestress: collected {} result(s), {} gap(s)",
        results.len(),
        gaps.len()
    );
    for g in &gaps {
        eprintln!("edgestress: gap: node {} {:?}: {}", g.node_id, g.state, g.reason);
    }
    for e in &errors {
        eprintln!("edgestress: {e}");
    }
    if interrupted {
        std::process::exit(130);
    }
    std::process::exit(if gaps.is_empty() && errors.is_empty() { 0 } else { 1 });
}

fn report(results_dir: &Path, cloud: Option<&str>, format: FormatArg, same_host: bool) -> ! {
    let manifest_text = read_spec(&results_dir.join("manifest.json"));
    let plan = load_manifest(&manifest_text).unwrap_or_else(|e| fail(e));

    let mut node_results = Vec::new();
    let entries = std::fs::read_dir(results_dir).unwrap_or_else(|e| fail(e));
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".result.json"))
        })
        .collect();
    paths.sort();
    for path in paths {
        node_results.push(load_node_result(&path).unwrap_or_else(|e| fail(e)));
    }

    let snapshot = cloud.map(|addr| fetch_stats(addr).unwrap_or_else(|e| fail(e)));
    let opts = ComputeOptions {
        method: if same_host {
            TransTimeMethod::SameHostClock
        } else {
            TransTimeMethod::RttHalf
        },
        same_host,
    };
    let report = compute(&plan, &node_results, snapshot.as_ref(), opts).unwrap_or_else(|e| fail(e));
    let text = render(
        &report,
        match format {
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Json => ReportFormat::Json,
        },
    );
    print!("{text}");
    std::process::exit(0);
}

fn cloud_serve(
    protocol: ProtocolArg,
    port: u16,
    topic: Option<String>,
    echo_topic: Option<String>,
    throttle: Option<u64>,
    record: bool,
) -> ! {
    install_sigint();
    let cfg = CloudConfig {
        throttle_pps: throttle,
        record_packets: record,
    };
    let server = match protocol {
        ProtocolArg::Udp => run_echo(EchoProtocol::Udp, port, cfg),
        ProtocolArg::Tcp => run_echo(EchoProtocol::Tcp, port, cfg),
        ProtocolArg::Mqtt => {
            let topic = topic.unwrap_or_else(|| {
                eprintln!("edgestress: error: --topic is required for an MQTT cloud");
                std::process::exit(EXIT_USAGE);
            });
            run_mqtt_sink(port, topic, echo_topic, cfg)
        }
    }
    .unwrap_or_else(|e| fail(e));
    eprintln!(
        "edgestress: cloud serving on port {}, control on {}",
        server.port, server.control_port
    );
    while !INTERRUPTED.load(Ordering::SeqCst) {
        std::thread::sleep(std::time::Duration::from_millis(100));
    }
    server.shutdown();
    std::process::exit(0);
}
