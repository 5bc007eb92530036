//! Resolves a validated spec into an executable run plan: instance counts
//! expanded, per-edge offsets drawn, cloud endpoints resolved. The emitted
//! manifest is the contract between the orchestrator and node runners.

use crate::dsl::{
    CloudEndpoint, PayloadSpec, PlatformDecl, PlatformKind, Protocol, SpecAst, Speed,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("reference to undeclared `{0}` survived validation")]
    Dangling(String),
    #[error("duration {duration_ms}ms is not a multiple of step {step_ms}ms")]
    BadStep { duration_ms: u64, step_ms: u64 },
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported manifest_version {0} (expected {MANIFEST_VERSION})")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudPlan {
    pub id: String,
    pub ip: String,
    pub endpoint: CloudEndpoint,
    pub record_dst: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformPlan {
    pub kind: PlatformKind,
    pub ip: Option<String>,
    pub username: Option<String>,
    pub cpu: Option<u64>,
    pub memory_gib: Option<u64>,
}

impl From<&PlatformDecl> for PlatformPlan {
    fn from(p: &PlatformDecl) -> Self {
        PlatformPlan {
            kind: p.kind,
            ip: p.ip.clone(),
            username: p.username.clone(),
            cpu: p.cpu,
            memory_gib: p.memory_gib,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadPlan {
    /// Sized payload; first 8 bytes carry the sequence number when >= 8.
    Bytes(u64),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevicePlan {
    pub device_id: String,
    pub period: u64,
    pub payload: PayloadPlan,
}

/// One runnable edge device instance inside a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDeviceInstance {
    pub edge_id: String,
    pub protocol: Protocol,
    pub speed: Speed,
    pub offset_ms: u64,
    pub workload_ms: u64,
    pub cloud_id: String,
    pub devices: Vec<DevicePlan>,
}

impl EdgeDeviceInstance {
    /// Exact pacing gap in nanoseconds after k sends within one step
    /// (multiply before dividing: no cumulative rounding drift).
    pub fn pacing_deadline_ns(&self, step_ms: u64, sends_done: u64) -> Option<u64> {
        match self.speed {
            Speed::Max => None,
            Speed::Packets(speed) => Some(step_ms * 1_000_000 * sends_done / speed),
        }
    }

    /// Mean inter-send gap in milliseconds (0 for MAX).
    pub fn gap_ms(&self, step_ms: u64) -> f64 {
        match self.speed {
            Speed::Max => 0.0,
            Speed::Packets(speed) => step_ms as f64 / speed as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePlan {
    pub node_id: String,
    pub platform: PlatformPlan,
    pub offset_range_ms: u64,
    pub edges: Vec<EdgeDeviceInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub manifest_version: u32,
    pub run_id: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub step_ms: u64,
    pub step_count: u64,
    pub clouds: Vec<CloudPlan>,
    pub nodes: Vec<NodePlan>,
}

impl RunPlan {
    pub fn cloud(&self, id: &str) -> Option<&CloudPlan> {
        self.clouds.iter().find(|c| c.id == id)
    }

    pub fn node(&self, node_id: &str) -> Option<&NodePlan> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn max_offset_ms(&self) -> u64 {
        self.nodes
            .iter()
            .flat_map(|n| n.edges.iter().map(|e| e.offset_ms))
            .max()
            .unwrap_or(0)
    }
}

/// 64-bit FNV-1a, the portable byte hash used to derive per-edge RNG streams
/// and the run id. Stability across platforms and releases is the point;
/// std's hasher guarantees neither.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-(seed, node, edge-index) generator, so plans reproduce
/// byte-identically across platforms.
pub fn offset_rng(seed: u64, node_id: &str, edge_index: u64) -> ChaCha8Rng {
    let mut key = Vec::with_capacity(node_id.len() + 16);
    key.extend_from_slice(&seed.to_le_bytes());
    key.extend_from_slice(node_id.as_bytes());
    key.extend_from_slice(&edge_index.to_le_bytes());
    let mut state = fnv1a(&key);
    let mut seed_bytes = [0u8; 32];
    for chunk in seed_bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed_bytes)
}

/// Expand a validated spec into a run plan. Counts are expanded
/// (`SN1[5]` becomes five node plans `SN1#0..SN1#4`), offsets are drawn
/// i.i.d. discrete-uniform over `[0, offset_range_ms]`, and every value is a
/// pure function of `(ast, seed)`.
pub fn resolve(ast: &SpecAst, seed: u64) -> Result<RunPlan, ResolveError> {
    let duration_ms = ast.simulator.duration.to_ms();
    let step_ms = ast.simulator.step.to_ms();
    if step_ms == 0 || duration_ms == 0 || duration_ms % step_ms != 0 {
        return Err(ResolveError::BadStep {
            duration_ms,
            step_ms,
        });
    }
    let step_count = duration_ms / step_ms;

    let clouds: Vec<CloudPlan> = ast
        .clouds
        .iter()
        .map(|c| CloudPlan {
            id: c.id.clone(),
            ip: c.ip.clone(),
            endpoint: c.endpoint.clone(),
            record_dst: c.record_dst.clone(),
        })
        .collect();

    let mut nodes = Vec::new();
    for node_ref in &ast.simulator.node_refs {
        let decl = ast
            .sim_nodes
            .iter()
            .find(|n| n.id == node_ref.id)
            .ok_or_else(|| ResolveError::Dangling(node_ref.id.clone()))?;
        let platform = ast
            .platforms
            .iter()
            .find(|p| p.id == decl.platform_ref)
            .ok_or_else(|| ResolveError::Dangling(decl.platform_ref.clone()))?;
        let offset_range_ms = decl.offset_range_pct * step_ms / 100;

        for instance in 0..node_ref.count {
            let node_id = format!("{}#{instance}", decl.id);
            let mut edges = Vec::new();
            let mut edge_index: u64 = 0;
            for edge_ref in &decl.edge_refs {
                let edge_decl = ast
                    .edge_devices
                    .iter()
                    .find(|e| e.id == edge_ref.id)
                    .ok_or_else(|| ResolveError::Dangling(edge_ref.id.clone()))?;
                let mut devices = Vec::new();
                for dev_ref in &edge_decl.device_refs {
                    let dev_decl = ast
                        .devices
                        .iter()
                        .find(|d| d.id == dev_ref.id)
                        .ok_or_else(|| ResolveError::Dangling(dev_ref.id.clone()))?;
                    let payload = match &dev_decl.payload {
                        PayloadSpec::Size { .. } => {
                            PayloadPlan::Bytes(dev_decl.payload.size_bytes().unwrap())
                        }
                        PayloadSpec::Literal(s) => PayloadPlan::Literal(s.clone()),
                    };
                    for _ in 0..dev_ref.count {
                        devices.push(DevicePlan {
                            device_id: dev_decl.id.clone(),
                            period: dev_decl.period,
                            payload: payload.clone(),
                        });
                    }
                }
                if ast.cloud(&edge_decl.cloud_ref).is_none() {
                    return Err(ResolveError::Dangling(edge_decl.cloud_ref.clone()));
                }
                for k in 0..edge_ref.count {
                    let mut rng = offset_rng(seed, &node_id, edge_index);
                    let offset_ms = if offset_range_ms == 0 {
                        0
                    } else {
                        rng.random_range(0..=offset_range_ms)
                    };
                    edges.push(EdgeDeviceInstance {
                        edge_id: format!("{node_id}/{}#{k}", edge_decl.id),
                        protocol: edge_decl.protocol,
                        speed: edge_decl.speed,
                        offset_ms,
                        workload_ms: edge_decl.workload.map(|w| w.to_ms()).unwrap_or(0),
                        cloud_id: edge_decl.cloud_ref.clone(),
                        devices: devices.clone(),
                    });
                    edge_index += 1;
                }
            }
            nodes.push(NodePlan {
                node_id,
                platform: platform.into(),
                offset_range_ms,
                edges,
            });
        }
    }

    let run_id = {
        let mut key = crate::dsl::print(ast).into_bytes();
        key.extend_from_slice(&seed.to_le_bytes());
        format!("run-{:016x}", fnv1a(&key))
    };

    Ok(RunPlan {
        manifest_version: MANIFEST_VERSION,
        run_id,
        seed,
        duration_ms,
        step_ms,
        step_count,
        clouds,
        nodes,
    })
}

impl SpecAst {
    fn cloud(&self, id: &str) -> Option<&crate::dsl::CloudDecl> {
        self.clouds.iter().find(|c| c.id == id)
    }
}

/// Unconstrained per-edge send counts: for each edge, the number of
/// (step, device) pairs with `step mod period == 0`. This ignores the
/// step-budget break and is the SimDrop baseline.
pub fn expected_sends(plan: &RunPlan) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for node in &plan.nodes {
        for edge in &node.edges {
            out.insert(
                edge.edge_id.clone(),
                expected_sends_for_edge(plan.step_count, edge),
            );
        }
    }
    out
}

pub fn expected_sends_for_edge(step_count: u64, edge: &EdgeDeviceInstance) -> u64 {
    edge.devices
        .iter()
        .map(|d| step_count.div_ceil(d.period))
        .sum()
}

/// Serialize the plan as the versioned manifest document.
pub fn emit_manifest(plan: &RunPlan) -> String {
    // struct field order is the stable key order
    serde_json::to_string_pretty(plan).expect("plan serializes") + "\n"
}

pub fn load_manifest(text: &str) -> Result<RunPlan, ManifestError> {
    let plan: RunPlan = serde_json::from_str(text)?;
    if plan.manifest_version != MANIFEST_VERSION {
        return Err(ManifestError::Version(plan.manifest_version));
    }
    Ok(plan)
}
