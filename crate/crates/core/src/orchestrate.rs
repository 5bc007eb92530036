//! Launches every node plan on its platform (native child process or local
//! Docker container), gates step 0 behind a start barrier, waits out the run,
//! terminates stragglers, collects result files and cleans up.
//!
//! Remote platforms (ip/username) are carried in the manifest but execution
//! is local-only; the launch-command pair below is the extension point.

use crate::dsl::PlatformKind;
use crate::plan::{NodePlan, RunPlan};
use crate::runtime::{load_node_result, NodeResult};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const DEFAULT_DOCKER_IMAGE: &str = "edgestress-node:latest";
pub const DOCKER_IMAGE_ENV: &str = "EDGESTRESS_DOCKER_IMAGE";

/// Extra wall time past the nominal end before a node is force-killed.
pub const KILL_SLACK_MS: u64 = 5_000;

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error("node `{node_id}`: VM platforms are not supported for execution")]
    NotSupported { node_id: String },
    #[error("node `{node_id}`: failed to spawn: {source}")]
    Spawn {
        node_id: String,
        source: std::io::Error,
    },
    #[error("node `{node_id}`: did not report READY within {timeout_ms}ms{detail}")]
    NotReady {
        node_id: String,
        timeout_ms: u64,
        detail: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("node `{node_id}`: result file missing or unreadable: {detail}")]
    MissingResult { node_id: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HandleState {
    Launching,
    Running,
    Finished,
    Killed,
    Failed,
}

/// Stands in for a node that produced no result (killed, failed, or its
/// result file was lost).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapMarker {
    pub node_id: String,
    pub state: HandleState,
    pub reason: String,
}

enum Backend {
    Native,
    Docker { container: String },
}

pub struct LaunchHandle {
    pub node_id: String,
    pub platform: PlatformKind,
    pub result_path: PathBuf,
    state: HandleState,
    backend: Backend,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: Option<BufReader<ChildStdout>>,
}

impl LaunchHandle {
    pub fn state(&self) -> HandleState {
        self.state
    }

    /// Transitions only move forward: Launching → Running → terminal.
    fn set_state(&mut self, next: HandleState) {
        debug_assert!(self.state < next, "{:?} -> {next:?}", self.state);
        self.state = next;
    }
}

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    /// Path to the node-runner binary for native nodes.
    pub node_binary: PathBuf,
    /// Image for Docker nodes; `EDGESTRESS_DOCKER_IMAGE` overrides the default.
    pub docker_image: String,
    pub full_logs: bool,
    /// Host directory receiving the manifest copy and result files.
    pub out_dir: PathBuf,
    pub ready_timeout_ms: u64,
}

impl LaunchConfig {
    pub fn new(node_binary: PathBuf, out_dir: PathBuf) -> Self {
        LaunchConfig {
            node_binary,
            docker_image: std::env::var(DOCKER_IMAGE_ENV)
                .unwrap_or_else(|_| DEFAULT_DOCKER_IMAGE.to_string()),
            full_logs: false,
            out_dir,
            ready_timeout_ms: 10_000,
        }
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

pub fn container_name(run_id: &str, node_id: &str) -> String {
    format!("{}-{}", sanitize(run_id), sanitize(node_id))
}

fn result_file_name(node_id: &str) -> String {
    format!("{}.result.json", sanitize(node_id))
}

/// Argument vector for `docker run`, kept pure for testability. Constrained
/// platforms get `--cpus` / `--memory`; unconstrained ones get no limits.
pub fn docker_run_args(
    run_id: &str,
    node: &NodePlan,
    image: &str,
    manifest_host_path: &Path,
    full_logs: bool,
) -> Vec<String> {
    let name = container_name(run_id, &node.node_id);
    let mut args = vec![
        "run".to_string(),
        "-i".to_string(),
        "--name".to_string(),
        name,
        "-v".to_string(),
        format!("{}:/manifest.json:ro", manifest_host_path.display()),
    ];
    if let Some(cpu) = node.platform.cpu {
        args.push("--cpus".to_string());
        args.push(cpu.to_string());
    }
    if let Some(mem) = node.platform.memory_gib {
        args.push("--memory".to_string());
        args.push(format!("{mem}g"));
    }
    args.push(image.to_string());
    args.push("edgestress-node".to_string());
    args.push("--manifest".to_string());
    args.push("/manifest.json".to_string());
    args.push("--node-id".to_string());
    args.push(node.node_id.clone());
    args.push("--out".to_string());
    args.push("/result.json".to_string());
    if full_logs {
        args.push("--full-logs".to_string());
    }
    args
}

fn wait_for_ready(handle: &mut LaunchHandle, timeout_ms: u64) -> Result<(), LaunchError> {
    // a line-oriented read on a dedicated thread, so the timeout is real
    let stdout = handle.stdout.take().expect("stdout already consumed");
    let (tx, rx) = std::sync::mpsc::channel();
    let reader_thread = std::thread::spawn(move || {
        let mut stdout = stdout;
        let mut line = String::new();
        let outcome = match stdout.read_line(&mut line) {
            Ok(0) => Err("closed stdout before READY".to_string()),
            Ok(_) if line.trim() == "READY" => Ok(()),
            Ok(_) => Err(format!("unexpected line `{}`", line.trim())),
            Err(e) => Err(e.to_string()),
        };
        let _ = tx.send(outcome);
        stdout
    });
    let outcome = rx.recv_timeout(Duration::from_millis(timeout_ms));
    match outcome {
        Ok(Ok(())) => {
            handle.stdout = Some(reader_thread.join().expect("reader thread"));
            Ok(())
        }
        Ok(Err(detail)) => Err(LaunchError::NotReady {
            node_id: handle.node_id.clone(),
            timeout_ms,
            detail: format!(" ({detail})"),
        }),
        Err(_) => Err(LaunchError::NotReady {
            node_id: handle.node_id.clone(),
            timeout_ms,
            detail: String::new(),
        }),
    }
}

fn kill_handle(handle: &mut LaunchHandle) {
    let _ = handle.child.kill();
    let _ = handle.child.wait();
    if let Backend::Docker { container } = &handle.backend {
        let _ = Command::new("docker")
            .args(["rm", "-f", container])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status();
    }
}

/// Launch every node and release the start barrier. If any node fails to
/// launch or report READY, everything already spawned is killed and the
/// whole run aborts — no node ever reaches step 0.
pub fn launch_all(plan: &RunPlan, cfg: &LaunchConfig) -> Result<Vec<LaunchHandle>, LaunchError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let manifest_path = cfg.out_dir.join("manifest.json");
    std::fs::write(&manifest_path, crate::plan::emit_manifest(plan))?;

    let mut handles: Vec<LaunchHandle> = Vec::new();
    for node in &plan.nodes {
        let result_path = cfg.out_dir.join(result_file_name(&node.node_id));
        let spawn = match node.platform.kind {
            PlatformKind::Vm => {
                for h in &mut handles {
                    kill_handle(h);
                }
                return Err(LaunchError::NotSupported {
                    node_id: node.node_id.clone(),
                });
            }
            PlatformKind::Native => {
                let mut cmd = Command::new(&cfg.node_binary);
                cmd.arg("--manifest")
                    .arg(&manifest_path)
                    .arg("--node-id")
                    .arg(&node.node_id)
                    .arg("--out")
                    .arg(&result_path);
                if cfg.full_logs {
                    cmd.arg("--full-logs");
                }
                cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()
            }
            PlatformKind::Docker => {
                let args = docker_run_args(
                    &plan.run_id,
                    node,
                    &cfg.docker_image,
                    &manifest_path,
                    cfg.full_logs,
                );
                Command::new("docker")
                    .args(&args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
            }
        };
        let mut child = match spawn {
            Ok(c) => c,
            Err(source) => {
                for h in &mut handles {
                    kill_handle(h);
                }
                return Err(LaunchError::Spawn {
                    node_id: node.node_id.clone(),
                    source,
                });
            }
        };
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().map(BufReader::new);
        handles.push(LaunchHandle {
            node_id: node.node_id.clone(),
            platform: node.platform.kind,
            result_path,
            state: HandleState::Launching,
            backend: match node.platform.kind {
                PlatformKind::Docker => Backend::Docker {
                    container: container_name(&plan.run_id, &node.node_id),
                },
                _ => Backend::Native,
            },
            child,
            stdin,
            stdout,
        });
    }

    // barrier: all READY first, then one GO broadcast
    for i in 0..handles.len() {
        if let Err(e) = wait_for_ready(&mut handles[i], cfg.ready_timeout_ms) {
            for h in &mut handles {
                kill_handle(h);
            }
            return Err(e);
        }
    }
    for handle in &mut handles {
        let stdin = handle.stdin.as_mut().expect("stdin piped");
        if let Err(source) = stdin.write_all(b"GO\n").and_then(|()| stdin.flush()) {
            let node_id = handle.node_id.clone();
            for h in &mut handles {
                kill_handle(h);
            }
            return Err(LaunchError::Spawn { node_id, source });
        }
    }
    for handle in &mut handles {
        handle.set_state(HandleState::Running);
    }
    Ok(handles)
}

/// Grace window past the nominal duration before force-kill.
pub fn grace_ms(plan: &RunPlan) -> u64 {
    plan.max_offset_ms() + 2 * plan.step_ms + KILL_SLACK_MS
}

/// One non-blocking sweep over the children, promoting exited ones to
/// Finished/Failed. Returns true when no node is still running.
pub fn poll_exits(handles: &mut [LaunchHandle]) -> bool {
    let mut all_done = true;
    for handle in handles.iter_mut() {
        if handle.state != HandleState::Running {
            continue;
        }
        match handle.child.try_wait() {
            Ok(Some(status)) => {
                handle.set_state(if status.success() {
                    HandleState::Finished
                } else {
                    HandleState::Failed
                });
            }
            Ok(None) => all_done = false,
            Err(_) => handle.set_state(HandleState::Failed),
        }
    }
    all_done
}

/// Kill every node still running, without waiting out any grace window
/// (operator interrupt, or the grace deadline already passed).
pub fn terminate_now(handles: &mut [LaunchHandle]) {
    poll_exits(handles);
    for handle in handles.iter_mut() {
        if handle.state == HandleState::Running {
            kill_handle(handle);
            handle.set_state(HandleState::Killed);
        }
    }
}

/// Wait out the run; any node still alive past duration + grace is killed.
pub fn await_and_terminate(handles: &mut [LaunchHandle], plan: &RunPlan) {
    let deadline = Instant::now() + Duration::from_millis(plan.duration_ms + grace_ms(plan));
    while !poll_exits(handles) {
        if Instant::now() >= deadline {
            terminate_now(handles);
            return;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}

/// Gather result files (copying them out of containers first), remove
/// containers, and return one result per finished node plus a gap marker per
/// node that produced none. Safe to call more than once.
pub fn collect_and_cleanup(
    handles: &mut [LaunchHandle],
) -> (Vec<NodeResult>, Vec<GapMarker>, Vec<CollectError>) {
    let mut results = Vec::new();
    let mut gaps = Vec::new();
    let mut errors = Vec::new();
    for handle in handles.iter_mut() {
        if let Backend::Docker { container } = &handle.backend {
            let dest = handle.result_path.clone();
            let _ = Command::new("docker")
                .args([
                    "cp".to_string(),
                    format!("{container}:/result.json"),
                    dest.display().to_string(),
                ])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
            let _ = Command::new("docker")
                .args(["rm", "-f", container])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
        }
        match handle.state {
            HandleState::Finished => match load_node_result(&handle.result_path) {
                Ok(result) => results.push(result),
                Err(e) => errors.push(CollectError::MissingResult {
                    node_id: handle.node_id.clone(),
                    detail: e.to_string(),
                }),
            },
            state => gaps.push(GapMarker {
                node_id: handle.node_id.clone(),
                state,
                reason: match state {
                    HandleState::Killed => "terminated after grace deadline".to_string(),
                    HandleState::Failed => "exited with failure".to_string(),
                    _ => "never reached a terminal state".to_string(),
                },
            }),
        }
    }
    (results, gaps, errors)
}

/// Algorithm-level convenience: launch, await, terminate, collect, clean up.
pub fn run_plan(
    plan: &RunPlan,
    cfg: &LaunchConfig,
) -> Result<(Vec<NodeResult>, Vec<GapMarker>, Vec<CollectError>), LaunchError> {
    let mut handles = launch_all(plan, cfg)?;
    await_and_terminate(&mut handles, plan);
    Ok(collect_and_cleanup(&mut handles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn mini_plan(node_count: u32, platform: &str) -> RunPlan {
        let refs: Vec<String> = (0..node_count).map(|i| format!("N{i}[1]")).collect();
        let nodes: String = (0..node_count)
            .map(|i| {
                format!(
                    "SimulationNode:N{i} {{ platform:P offsetRange:0% EdgeDevices:{{E[1]}} }}\n"
                )
            })
            .collect();
        let src = format!(
            "Cloud:C {{ IP:127.0.0.1 port:9000 }}\n\
             Simulator: {{ duration:1s step:500ms simulationNodes:{{{}}} }}\n\
             {nodes}\
             Platform:P {{ type:{platform} }}\n\
             EdgeDevice:E {{ protocol:UDP speed:MAX cloud:C devices:{{D[1]}} }}\n\
             Device:D {{ period:1 payload:8b }}\n",
            refs.join(",")
        );
        let ast = crate::dsl::parse(&src).unwrap();
        crate::plan::resolve(&ast, 3).unwrap()
    }

    /// Fake node runner: READY / wait for GO / write a minimal result / DONE.
    fn fake_node_script(dir: &Path, behavior: &str) -> PathBuf {
        let path = dir.join("fake-node");
        let script = format!(
            "#!/bin/sh\n\
             out=\"\"\n\
             node=\"\"\n\
             while [ $# -gt 0 ]; do\n\
               case \"$1\" in\n\
                 --out) out=\"$2\"; shift 2;;\n\
                 --node-id) node=\"$2\"; shift 2;;\n\
                 *) shift;;\n\
               esac\n\
             done\n\
             echo READY\n\
             read go\n\
             {behavior}\n"
        );
        std::fs::write(&path, script).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    const WRITE_RESULT: &str = r#"printf '{"result_version":1,"run_id":"x","node_id":"%s","node_start_ns":0,"drain_steps":1,"full_logs":false,"edges":[]}' "$node" > "$out"
echo DONE"#;

    #[test]
    fn native_nodes_run_to_finished_and_results_collect() {
        let dir = tempfile::tempdir().unwrap();
        let script = fake_node_script(dir.path(), WRITE_RESULT);
        let plan = mini_plan(2, "Native");
        let cfg = LaunchConfig::new(script, dir.path().join("out"));
        let mut handles = launch_all(&plan, &cfg).unwrap();
        assert!(handles.iter().all(|h| h.state() == HandleState::Running));
        await_and_terminate(&mut handles, &plan);
        assert!(handles.iter().all(|h| h.state() == HandleState::Finished));
        let (results, gaps, errors) = collect_and_cleanup(&mut handles);
        assert_eq!(results.len(), 2);
        assert!(gaps.is_empty() && errors.is_empty());
        let mut ids: Vec<_> = results.iter().map(|r| r.node_id.clone()).collect();
        ids.sort();
        assert_eq!(ids, vec!["N0#0", "N1#0"]);
    }

    #[test]
    fn hung_node_is_killed_without_touching_siblings() {
        let dir = tempfile::tempdir().unwrap();
        let good = fake_node_script(dir.path(), WRITE_RESULT);
        let plan = mini_plan(1, "Native");
        // a node that never exits after GO
        let hang = fake_node_script(&{
            let d = dir.path().join("hang");
            std::fs::create_dir(&d).unwrap();
            d
        }, "sleep 600");

        let cfg_good = LaunchConfig::new(good, dir.path().join("out-good"));
        let mut cfg_hung = LaunchConfig::new(hang, dir.path().join("out-hung"));
        cfg_hung.ready_timeout_ms = 2_000;

        // shrink the kill window by using a tiny plan: duration 1s + grace
        let mut good_handles = launch_all(&plan, &cfg_good).unwrap();
        let mut hung_handles = launch_all(&plan, &cfg_hung).unwrap();
        let mut small = plan.clone();
        small.duration_ms = 100;
        // grace is dominated by KILL_SLACK_MS; this test tolerates that wait
        await_and_terminate(&mut good_handles, &small);
        await_and_terminate(&mut hung_handles, &small);
        assert_eq!(good_handles[0].state(), HandleState::Finished);
        assert_eq!(hung_handles[0].state(), HandleState::Killed);
        let (_, gaps, _) = collect_and_cleanup(&mut hung_handles);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].state, HandleState::Killed);
        // idempotent cleanup
        let (_, gaps2, _) = collect_and_cleanup(&mut hung_handles);
        assert_eq!(gaps2.len(), 1);
    }

    #[test]
    fn failed_launch_aborts_the_whole_run() {
        let dir = tempfile::tempdir().unwrap();
        let plan = mini_plan(2, "Native");
        let cfg = LaunchConfig::new(dir.path().join("does-not-exist"), dir.path().join("out"));
        assert!(matches!(
            launch_all(&plan, &cfg),
            Err(LaunchError::Spawn { .. })
        ));
    }

    #[test]
    fn node_that_never_readies_aborts_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silent");
        std::fs::write(&path, "#!/bin/sh\nsleep 600\n").unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        let plan = mini_plan(1, "Native");
        let mut cfg = LaunchConfig::new(path, dir.path().join("out"));
        cfg.ready_timeout_ms = 300;
        assert!(matches!(
            launch_all(&plan, &cfg),
            Err(LaunchError::NotReady { .. })
        ));
    }

    #[test]
    fn vm_platform_refuses_to_launch() {
        let dir = tempfile::tempdir().unwrap();
        let plan = mini_plan(1, "VM");
        let cfg = LaunchConfig::new(dir.path().join("unused"), dir.path().join("out"));
        assert!(matches!(
            launch_all(&plan, &cfg),
            Err(LaunchError::NotSupported { .. })
        ));
    }

    #[test]
    fn docker_args_carry_limits_only_when_constrained() {
        let src = "Cloud:C { IP:127.0.0.1 port:9000 }\n\
             Simulator: { duration:1s step:500ms simulationNodes:{N[1],U[1]} }\n\
             SimulationNode:N { platform:P offsetRange:0% EdgeDevices:{E[1]} }\n\
             SimulationNode:U { platform:Q offsetRange:0% EdgeDevices:{E[1]} }\n\
             Platform:P { type:Docker CPU:4 memory:2G }\n\
             Platform:Q { type:Docker }\n\
             EdgeDevice:E { protocol:UDP speed:MAX cloud:C devices:{D[1]} }\n\
             Device:D { period:1 payload:8b }\n";
        let ast = crate::dsl::parse(src).unwrap();
        let plan = crate::plan::resolve(&ast, 1).unwrap();
        let manifest = PathBuf::from("/tmp/m.json");
        let constrained =
            docker_run_args(&plan.run_id, &plan.nodes[0], "img:latest", &manifest, false);
        let cpus_at = constrained.iter().position(|a| a == "--cpus").unwrap();
        assert_eq!(constrained[cpus_at + 1], "4");
        let mem_at = constrained.iter().position(|a| a == "--memory").unwrap();
        assert_eq!(constrained[mem_at + 1], "2g");
        assert!(constrained.contains(&"img:latest".to_string()));

        let unconstrained =
            docker_run_args(&plan.run_id, &plan.nodes[1], "img:latest", &manifest, false);
        assert!(!unconstrained.iter().any(|a| a == "--cpus"));
        assert!(!unconstrained.iter().any(|a| a == "--memory"));
        // container names are namespaced by run id and sanitized
        assert!(unconstrained
            .iter()
            .any(|a| a.starts_with("run-") && a.contains("U-0")));
    }

    #[test]
    fn grace_window_formula() {
        // duration 2s, step 0.5s, max offset 0.4s → kill at 2s+0.4s+1s+5s
        let mut plan = mini_plan(1, "Native");
        plan.duration_ms = 2_000;
        plan.step_ms = 500;
        plan.nodes[0].edges[0].offset_ms = 400;
        assert_eq!(plan.duration_ms + grace_ms(&plan), 8_400);
    }
}
