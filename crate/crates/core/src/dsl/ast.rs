use super::Span;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnit {
    Ms,
    S,
    M,
    H,
}

impl TimeUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeUnit::Ms => "ms",
            TimeUnit::S => "s",
            TimeUnit::M => "m",
            TimeUnit::H => "h",
        }
    }

    pub fn millis(&self) -> u64 {
        match self {
            TimeUnit::Ms => 1,
            TimeUnit::S => 1_000,
            TimeUnit::M => 60_000,
            TimeUnit::H => 3_600_000,
        }
    }
}

/// A duration literal, e.g. `10s`. Canonical value is integer milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Duration {
    pub magnitude: u64,
    pub unit: TimeUnit,
}

impl Duration {
    pub fn to_ms(&self) -> u64 {
        self.magnitude * self.unit.millis()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadUnit {
    B,
    Kb,
    Mb,
}

impl PayloadUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            PayloadUnit::B => "b",
            PayloadUnit::Kb => "kb",
            PayloadUnit::Mb => "mb",
        }
    }

    pub fn bytes(&self) -> u64 {
        match self {
            PayloadUnit::B => 1,
            PayloadUnit::Kb => 1024,
            PayloadUnit::Mb => 1024 * 1024,
        }
    }
}

/// Either a sized payload (random filler of the given size) or a literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadSpec {
    Size { magnitude: u64, unit: PayloadUnit },
    Literal(String),
}

impl PayloadSpec {
    pub fn size_bytes(&self) -> Option<u64> {
        match self {
            PayloadSpec::Size { magnitude, unit } => Some(magnitude * unit.bytes()),
            PayloadSpec::Literal(_) => None,
        }
    }
}

/// How an edge device reaches a cloud: a UDP/TCP port or MQTT topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloudEndpoint {
    Port(u16),
    Topics {
        pub_topic: String,
        sub_topic: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudDecl {
    pub id: String,
    pub span: Span,
    pub ip: String,
    pub endpoint: CloudEndpoint,
    /// `Methods:{ Record(<ip>) }` destination, when present.
    pub record_dst: Option<String>,
}

/// `<ID>[<count>]` reference with its source position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountedRef {
    pub id: String,
    pub count: u64,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorDecl {
    pub span: Span,
    pub duration: Duration,
    pub step: Duration,
    pub node_refs: Vec<CountedRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimNodeDecl {
    pub id: String,
    pub span: Span,
    pub platform_ref: String,
    pub platform_ref_span: Span,
    pub offset_range_pct: u64,
    pub edge_refs: Vec<CountedRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlatformKind {
    Native,
    Docker,
    Vm,
}

impl PlatformKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlatformKind::Native => "Native",
            PlatformKind::Docker => "Docker",
            PlatformKind::Vm => "VM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformDecl {
    pub id: String,
    pub span: Span,
    pub kind: PlatformKind,
    pub ip: Option<String>,
    pub username: Option<String>,
    pub cpu: Option<u64>,
    /// Gibibytes, the `G` suffix in `memory: 2G`.
    pub memory_gib: Option<u64>,
}

impl PlatformDecl {
    /// A Docker platform with both cpu and memory limits.
    pub fn is_constrained(&self) -> bool {
        self.cpu.is_some() && self.memory_gib.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    Udp,
    Tcp,
    Mqtt,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Udp => "UDP",
            Protocol::Tcp => "TCP",
            Protocol::Mqtt => "MQTT",
        }
    }
}

/// Packets per step, or MAX for back-to-back sending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speed {
    Packets(u64),
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDeviceDecl {
    pub id: String,
    pub span: Span,
    pub protocol: Protocol,
    pub speed: Speed,
    pub cloud_ref: String,
    pub cloud_ref_span: Span,
    pub device_refs: Vec<CountedRef>,
    pub workload: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDecl {
    pub id: String,
    pub span: Span,
    pub period: u64,
    pub payload: PayloadSpec,
}

/// A note the parser attaches for accepted-but-dubious constructs
/// (currently: IDs that begin with a digit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleNote {
    pub span: Span,
    pub message: String,
}

/// Parse tree of one spec file, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecAst {
    pub clouds: Vec<CloudDecl>,
    pub simulator: SimulatorDecl,
    pub sim_nodes: Vec<SimNodeDecl>,
    pub platforms: Vec<PlatformDecl>,
    pub edge_devices: Vec<EdgeDeviceDecl>,
    pub devices: Vec<DeviceDecl>,
    pub style_notes: Vec<StyleNote>,
}
