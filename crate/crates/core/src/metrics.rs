//! Joins node-side send ledgers with the cloud-side ledger to compute
//! SimDrop, CloudDrop and TransTime, per run, per node and per edge device.
//! Pure aggregation over immutable inputs.

use crate::cloud::LedgerSnapshot;
use crate::plan::RunPlan;
use crate::runtime::NodeResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("same-host clock timestamps requested across hosts")]
    ClockDomain,
    #[error("result for node `{node_id}` belongs to run `{found}`, expected `{expected}`")]
    RunIdMismatch {
        node_id: String,
        expected: String,
        found: String,
    },
    #[error("no node results")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransTimeMethod {
    /// t_recv at the cloud minus t_send at the edge; valid only when both
    /// processes share one monotonic clock domain (same host).
    SameHostClock,
    /// Half the echo round trip, (t_recv_edge − t_send) / 2; an approximation.
    RttHalf,
}

impl TransTimeMethod {
    fn label(self) -> &'static str {
        match self {
            TransTimeMethod::SameHostClock => "same_host_clock",
            TransTimeMethod::RttHalf => "rtt_half",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransTimeStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub samples: u64,
    pub method: TransTimeMethod,
    /// SimDrop above 1% makes timing unrepresentative; flagged, not hidden.
    pub low_confidence: bool,
}

/// Metrics for one aggregation unit (the run, a node, or an edge device).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub id: String,
    pub expected_sends: u64,
    pub successful_sends: u64,
    pub sim_drop: u64,
    pub cloud_received: Option<u64>,
    pub cloud_drop: Option<u64>,
    /// Echoes that arrived after the edge's nominal end, inside the drain
    /// window; they do not count as delivered.
    pub late: u64,
    pub trans_time: Option<TransTimeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub report_version: u32,
    pub run_id: String,
    /// Never measured; the run network is assumed ideal.
    pub net_drop: String,
    pub total: GroupMetrics,
    pub nodes: Vec<GroupMetrics>,
    pub edges: Vec<GroupMetrics>,
}

#[derive(Debug, Clone, Copy)]
pub struct ComputeOptions {
    pub method: TransTimeMethod,
    /// Whether the cloud ledger's timestamps share the nodes' clock domain.
    pub same_host: bool,
}

impl Default for ComputeOptions {
    fn default() -> Self {
        ComputeOptions {
            method: TransTimeMethod::RttHalf,
            same_host: false,
        }
    }
}

fn addr_port(addr: &str) -> Option<u16> {
    addr.rsplit(':').next()?.parse().ok()
}

struct Accum {
    expected: u64,
    successful: u64,
    sim_drop: u64,
    received: Option<u64>,
    late: u64,
    samples_ms: Vec<f64>,
}

impl Accum {
    fn new() -> Self {
        Accum {
            expected: 0,
            successful: 0,
            sim_drop: 0,
            received: None,
            late: 0,
            samples_ms: Vec::new(),
        }
    }

    fn merge(&mut self, other: &Accum) {
        self.expected += other.expected;
        self.successful += other.successful;
        self.sim_drop += other.sim_drop;
        if let Some(r) = other.received {
            *self.received.get_or_insert(0) += r;
        }
        self.late += other.late;
        self.samples_ms.extend_from_slice(&other.samples_ms);
    }

    fn finish(mut self, id: String, method: TransTimeMethod) -> GroupMetrics {
        let sim_drop_pct = if self.expected > 0 {
            self.sim_drop as f64 / self.expected as f64
        } else {
            0.0
        };
        let trans_time = if self.samples_ms.is_empty() {
            None
        } else {
            self.samples_ms.sort_by(|a, b| a.total_cmp(b));
            let n = self.samples_ms.len();
            let pick = |q: f64| {
                // nearest-rank percentile
                let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
                self.samples_ms[rank - 1]
            };
            Some(TransTimeStats {
                mean_ms: self.samples_ms.iter().sum::<f64>() / n as f64,
                p50_ms: pick(0.50),
                p95_ms: pick(0.95),
                max_ms: self.samples_ms[n - 1],
                samples: n as u64,
                method,
                low_confidence: sim_drop_pct > 0.01,
            })
        };
        GroupMetrics {
            id,
            expected_sends: self.expected,
            successful_sends: self.successful,
            sim_drop: self.sim_drop,
            cloud_received: self.received,
            cloud_drop: self.received.map(|r| self.successful.saturating_sub(r)),
            late: self.late,
            trans_time,
        }
    }
}

/// Compute the report. A cloud ledger, when present, is ground truth for
/// `cloud_received`; without one, echo matching in the nodes' receive logs
/// stands in (and `late` echoes do not count as delivered).
pub fn compute(
    plan: &RunPlan,
    node_results: &[NodeResult],
    cloud: Option<&LedgerSnapshot>,
    opts: ComputeOptions,
) -> Result<MetricsReport, MetricsError> {
    if node_results.is_empty() {
        return Err(MetricsError::Empty);
    }
    if opts.method == TransTimeMethod::SameHostClock && !opts.same_host {
        return Err(MetricsError::ClockDomain);
    }
    for nr in node_results {
        if nr.run_id != plan.run_id {
            return Err(MetricsError::RunIdMismatch {
                node_id: nr.node_id.clone(),
                expected: plan.run_id.clone(),
                found: nr.run_id.clone(),
            });
        }
    }

    // cloud-side counts and timestamps, keyed by the sender's source port
    let mut received_by_port: BTreeMap<u16, u64> = BTreeMap::new();
    let mut cloud_seq_recv: HashMap<(u16, u64), u64> = HashMap::new();
    if let Some(snap) = cloud {
        for (source, count) in &snap.per_source {
            if let Some(port) = addr_port(source) {
                *received_by_port.entry(port).or_insert(0) += count;
            }
        }
        for rec in &snap.records {
            if let (Some(port), Some(seq)) = (addr_port(&rec.source), rec.seq) {
                cloud_seq_recv.insert((port, seq), rec.t_recv_ns);
            }
        }
    }

    let step_ns = plan.step_ms * 1_000_000;
    let mut node_groups = Vec::new();
    let mut edge_groups = Vec::new();
    let mut total = Accum::new();

    for nr in node_results {
        let mut node_acc = Accum::new();
        for edge in &nr.edges {
            let mut acc = Accum::new();
            acc.expected = edge.expected_sends;
            acc.successful = edge.successful_sends;
            acc.sim_drop = edge.sim_drop;

            let end_ns = nr.node_start_ns + edge.offset_ms * 1_000_000 + plan.step_count * step_ns;
            let port = edge.local_addr.as_deref().and_then(addr_port);

            // echo bookkeeping from the edge's own receive log
            let mut echoed_in_window: u64 = 0;
            let mut echo_recv: HashMap<u64, u64> = HashMap::new();
            if nr.full_logs {
                for r in &edge.recv_log {
                    if r.t_recv_ns > end_ns {
                        acc.late += 1;
                    } else {
                        echoed_in_window += 1;
                        if let Some(seq) = r.seq {
                            echo_recv.entry(seq).or_insert(r.t_recv_ns);
                        }
                    }
                }
            }

            acc.received = match (cloud, port) {
                (Some(_), Some(p)) => Some(received_by_port.get(&p).copied().unwrap_or(0)),
                (Some(_), None) => Some(0),
                (None, _) if nr.full_logs => Some(echoed_in_window.min(edge.successful_sends)),
                (None, _) => None,
            };

            if nr.full_logs {
                for sent in &edge.send_log {
                    let sample_ns = match opts.method {
                        TransTimeMethod::SameHostClock => port
                            .and_then(|p| cloud_seq_recv.get(&(p, sent.seq)))
                            .map(|t| t.saturating_sub(sent.t_send_ns)),
                        TransTimeMethod::RttHalf => echo_recv
                            .get(&sent.seq)
                            .map(|t| t.saturating_sub(sent.t_send_ns) / 2),
                    };
                    if let Some(ns) = sample_ns {
                        acc.samples_ms.push(ns as f64 / 1e6);
                    }
                }
            }

            node_acc.merge(&acc);
            edge_groups.push(acc.finish(edge.edge_id.clone(), opts.method));
        }
        total.merge(&node_acc);
        node_groups.push(node_acc.finish(nr.node_id.clone(), opts.method));
    }

    Ok(MetricsReport {
        report_version: REPORT_VERSION,
        run_id: plan.run_id.clone(),
        net_drop: "assumed_zero".to_string(),
        total: total.finish("total".to_string(), opts.method),
        nodes: node_groups,
        edges: edge_groups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Json,
}

fn trans_time_cell(stats: &Option<TransTimeStats>) -> String {
    match stats {
        None => "-".to_string(),
        Some(s) => {
            let mut cell = format!(
                "{:.3} (p50 {:.3}, p95 {:.3}, max {:.3}, n={}, {})",
                s.mean_ms,
                s.p50_ms,
                s.p95_ms,
                s.max_ms,
                s.samples,
                s.method.label()
            );
            if s.low_confidence {
                cell.push_str(" [low confidence]");
            }
            cell
        }
    }
}

fn opt_cell(v: Option<u64>) -> String {
    v.map_or_else(|| "-".to_string(), |n| n.to_string())
}

/// Deterministic rendering: two renders of one report are byte-identical.
pub fn render(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).unwrap();
            s.push('\n');
            s
        }
        ReportFormat::Table => {
            let mut rows: Vec<[String; 4]> = vec![[
                "config".into(),
                "SimDrop".into(),
                "CloudDrop".into(),
                "TransTime(ms)".into(),
            ]];
            let mut push = |g: &GroupMetrics| {
                rows.push([
                    g.id.clone(),
                    g.sim_drop.to_string(),
                    opt_cell(g.cloud_drop),
                    trans_time_cell(&g.trans_time),
                ]);
            };
            push(&report.total);
            for g in &report.nodes {
                push(g);
            }
            for g in &report.edges {
                push(g);
            }
            let widths: Vec<usize> = (0..4)
                .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
                .collect();
            let mut out = format!(
                "run {}  (report_version {}, net_drop {})\n",
                report.run_id, report.report_version, report.net_drop
            );
            for (i, row) in rows.iter().enumerate() {
                let line: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:<w$}"))
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    let total_w: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                    out.push_str(&"-".repeat(total_w));
                    out.push('\n');
                }
            }
            out
        }
    }
}
