//! Executes one node plan: every edge device runs its three concurrent
//! processes (send, receive, compute) with offset, pacing, period gating and
//! the per-step budget break.

mod busywork;

pub use busywork::busy_work_ms;

use crate::clock::{monotonic_ns, sleep_until_ns};
use crate::plan::{expected_sends_for_edge, EdgeDeviceInstance, NodePlan, RunPlan};
use crate::transport::{
    self, encode_packet, Endpoint, Received, ReceiveError, RecvHalf, SendError, SendHalf,
    SendReceipt,
};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

pub const RESULT_VERSION: u32 = 1;

/// How long the receive process keeps draining in-flight echoes after the
/// nominal duration, in steps.
pub const DRAIN_STEPS: u64 = 1;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("node `{node_id}`: unknown cloud `{cloud_id}`")]
    UnknownCloud { node_id: String, cloud_id: String },
    #[error("node `{node_id}`: edge `{edge_id}` failed to connect: {source}")]
    Connect {
        node_id: String,
        edge_id: String,
        source: transport::ConnectError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("result file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported result_version {0} (expected {RESULT_VERSION})")]
    Version(u32),
}

/// Packet sending side of an edge link; the real implementation is a
/// transport send half, tests substitute fakes (including faulty ones).
pub trait PacketSink: Send {
    fn send(&mut self, seq: u64, payload: &[u8]) -> Result<SendReceipt, SendError>;
}

impl PacketSink for SendHalf {
    fn send(&mut self, seq: u64, payload: &[u8]) -> Result<SendReceipt, SendError> {
        SendHalf::send(self, seq, payload)
    }
}

pub trait PacketSource: Send {
    fn receive(&mut self, deadline: Duration) -> Result<Option<Received>, ReceiveError>;
}

impl PacketSource for RecvHalf {
    fn receive(&mut self, deadline: Duration) -> Result<Option<Received>, ReceiveError> {
        RecvHalf::receive(self, deadline)
    }
}

/// One sent packet. Within one edge's send log, seq strictly increases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub seq: u64,
    pub step_index: u64,
    pub device_index: u64,
    pub t_send_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecvRecord {
    pub seq: Option<u64>,
    pub t_recv_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeResult {
    pub edge_id: String,
    pub local_addr: Option<String>,
    pub offset_ms: u64,
    pub expected_sends: u64,
    pub attempted_sends: u64,
    pub successful_sends: u64,
    pub sim_drop: u64,
    pub receives: u64,
    pub panicked: bool,
    #[serde(default)]
    pub send_log: Vec<PacketRecord>,
    #[serde(default)]
    pub recv_log: Vec<RecvRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeResult {
    pub result_version: u32,
    pub run_id: String,
    pub node_id: String,
    pub node_start_ns: u64,
    pub drain_steps: u64,
    pub full_logs: bool,
    pub edges: Vec<EdgeResult>,
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeTiming {
    pub node_start_ns: u64,
    pub step_ms: u64,
    pub step_count: u64,
}

impl EdgeTiming {
    fn step_ns(&self) -> u64 {
        self.step_ms * 1_000_000
    }
}

/// Run one edge device to completion: initial offset sleep, then the send,
/// receive and compute processes in parallel until all steps elapse (the
/// receive process drains for one extra step).
pub fn run_edge_device<S: PacketSink, R: PacketSource>(
    instance: &EdgeDeviceInstance,
    timing: &EdgeTiming,
    mut sink: S,
    mut source: R,
    local_addr: Option<String>,
    full_logs: bool,
) -> EdgeResult {
    let start_ns = timing.node_start_ns + instance.offset_ms * 1_000_000;
    let step_ns = timing.step_ns();
    let end_ns = start_ns + timing.step_count * step_ns;
    let drain_end_ns = end_ns + DRAIN_STEPS * step_ns;

    sleep_until_ns(start_ns);

    let mut result = EdgeResult {
        edge_id: instance.edge_id.clone(),
        local_addr,
        offset_ms: instance.offset_ms,
        expected_sends: expected_sends_for_edge(timing.step_count, instance),
        attempted_sends: 0,
        successful_sends: 0,
        sim_drop: 0,
        receives: 0,
        panicked: false,
        send_log: Vec::new(),
        recv_log: Vec::new(),
    };

    let (recv_count, recv_log) = std::thread::scope(|scope| {
        // receive process
        let recv_handle = scope.spawn(move || {
            let mut count: u64 = 0;
            let mut log = Vec::new();
            loop {
                let now = monotonic_ns();
                if now >= drain_end_ns {
                    break;
                }
                let budget = Duration::from_nanos((drain_end_ns - now).min(50_000_000));
                match source.receive(budget) {
                    Ok(Some(r)) => {
                        count += 1;
                        if full_logs {
                            log.push(RecvRecord {
                                seq: r.seq,
                                t_recv_ns: r.t_recv_ns,
                            });
                        }
                    }
                    Ok(None) => {}
                    Err(_) => break, // teardown; sends keep their own ledger
                }
            }
            (count, log)
        });

        // compute process: workload_ms of floating-point busy work per step
        if instance.workload_ms > 0 {
            let workload_ms = instance.workload_ms;
            let step_count = timing.step_count;
            scope.spawn(move || {
                for i in 0..step_count {
                    sleep_until_ns(start_ns + i * step_ns);
                    busy_work_ms(workload_ms);
                }
            });
        }

        // send process, on this thread
        let mut seq: u64 = 1;
        for i in 0..timing.step_count {
            sleep_until_ns(start_ns + i * step_ns);
            let step_start = monotonic_ns();
            let mut sends_this_step: u64 = 0;
            let mut devices = instance.devices.iter().enumerate();
            for (j, dev) in devices.by_ref() {
                if i % dev.period != 0 {
                    continue;
                }
                let payload = encode_packet(seq, &dev.payload);
                result.attempted_sends += 1;
                match sink.send(seq, &payload) {
                    Ok(receipt) => {
                        result.successful_sends += 1;
                        if full_logs {
                            result.send_log.push(PacketRecord {
                                seq,
                                step_index: i,
                                device_index: j as u64,
                                t_send_ns: receipt.t_send_ns,
                            });
                        }
                    }
                    Err(_) => {
                        // transport failure counts against the simulator
                        result.sim_drop += 1;
                    }
                }
                seq += 1;
                sends_this_step += 1;
                if let (Some(this), Some(prev)) = (
                    instance.pacing_deadline_ns(timing.step_ms, sends_this_step),
                    instance.pacing_deadline_ns(timing.step_ms, sends_this_step - 1),
                ) {
                    // relative gap after the send; the multiply-divide pair
                    // diffuses fractional-gap error so the mean gap is exact
                    sleep_until_ns(monotonic_ns() + (this - prev));
                }
                if monotonic_ns() - step_start >= step_ns {
                    // step budget exhausted: remaining devices due this step
                    // go to the drop ledger
                    for (_, rest) in devices.by_ref() {
                        if i % rest.period == 0 {
                            result.sim_drop += 1;
                        }
                    }
                    break;
                }
            }
        }

        recv_handle.join().expect("receive process panicked")
    });

    result.receives = recv_count;
    result.recv_log = recv_log;
    result
}

/// Run every edge device of a node plan concurrently. All connections open
/// before step 0 (fail-fast) and a panic in one edge does not tear down its
/// siblings.
pub fn run_node(plan: &RunPlan, node: &NodePlan, full_logs: bool) -> Result<NodeResult, NodeError> {
    // open all connections first; measurement starts only on full launch
    let mut links = Vec::new();
    for edge in &node.edges {
        let cloud = plan
            .cloud(&edge.cloud_id)
            .ok_or_else(|| NodeError::UnknownCloud {
                node_id: node.node_id.clone(),
                cloud_id: edge.cloud_id.clone(),
            })?;
        let endpoint = Endpoint::from_cloud(edge.protocol, cloud);
        let conn = transport::connect(&endpoint).map_err(|source| NodeError::Connect {
            node_id: node.node_id.clone(),
            edge_id: edge.edge_id.clone(),
            source,
        })?;
        links.push(conn);
    }

    let node_start_ns = monotonic_ns();
    let timing = EdgeTiming {
        node_start_ns,
        step_ms: plan.step_ms,
        step_count: plan.step_count,
    };

    let mut edges = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (edge, conn) in node.edges.iter().zip(links) {
            let local_addr = conn.local_addr.clone();
            let (sink, source) = conn.split();
            handles.push((
                edge,
                scope.spawn(move || {
                    run_edge_device(edge, &timing, sink, source, local_addr, full_logs)
                }),
            ));
        }
        for (edge, handle) in handles {
            match handle.join() {
                Ok(result) => edges.push(result),
                Err(_) => edges.push(EdgeResult {
                    edge_id: edge.edge_id.clone(),
                    local_addr: None,
                    offset_ms: edge.offset_ms,
                    expected_sends: expected_sends_for_edge(plan.step_count, edge),
                    attempted_sends: 0,
                    successful_sends: 0,
                    sim_drop: 0,
                    receives: 0,
                    panicked: true,
                    send_log: Vec::new(),
                    recv_log: Vec::new(),
                }),
            }
        }
    });

    Ok(NodeResult {
        result_version: RESULT_VERSION,
        run_id: plan.run_id.clone(),
        node_id: node.node_id.clone(),
        node_start_ns,
        drain_steps: DRAIN_STEPS,
        full_logs,
        edges,
    })
}

/// Atomic write (temp file + rename) of the result document.
pub fn write_node_result(result: &NodeResult, path: &Path) -> Result<(), NodeError> {
    let text = serde_json::to_string_pretty(result)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_node_result(path: &Path) -> Result<NodeResult, NodeError> {
    let text = std::fs::read_to_string(path)?;
    let result: NodeResult = serde_json::from_str(&text)?;
    if result.result_version != RESULT_VERSION {
        return Err(NodeError::Version(result.result_version));
    }
    Ok(result)
}
