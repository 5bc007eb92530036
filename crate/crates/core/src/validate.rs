//! Static sanity checks over a parsed spec: declaration/usage, reference
//! kinds, protocol/cloud compatibility and time-step arithmetic.

use crate::dsl::{CloudEndpoint, Protocol, SpecAst, Span, Speed};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

/// Closed set of diagnostic codes the checks can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Code {
    /// Reference to an ID that is never declared.
    EUndecl,
    /// Duplicate declaration of an ID.
    EDup,
    /// ID of the wrong kind in a reference slot, or inconsistent optional
    /// attribute pairs (IP/username, CPU/memory).
    EType,
    /// Edge protocol does not match the referenced cloud's endpoint kind.
    EProto,
    /// Step does not divide the duration (or either is zero).
    EStep,
    /// offsetRange above 100% would shift execution across step boundaries.
    ERange,
    /// Declared but never referenced.
    WUnused,
    /// Pacing gaps alone fill (or exceed) the whole step; sends are at risk.
    WTight,
    /// Accepted-but-dubious construct, e.g. an ID starting with a digit.
    WStyle,
}

impl Code {
    pub fn as_str(&self) -> &'static str {
        match self {
            Code::EUndecl => "E-UNDECL",
            Code::EDup => "E-DUP",
            Code::EType => "E-TYPE",
            Code::EProto => "E-PROTO",
            Code::EStep => "E-STEP",
            Code::ERange => "E-RANGE",
            Code::WUnused => "W-UNUSED",
            Code::WTight => "W-TIGHT",
            Code::WStyle => "W-STYLE",
        }
    }

    pub fn severity(&self) -> Severity {
        match self {
            Code::EUndecl | Code::EDup | Code::EType | Code::EProto | Code::EStep
            | Code::ERange => Severity::Error,
            Code::WUnused | Code::WTight | Code::WStyle => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    fn new(code: Code, span: Span, message: String) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            message,
            span,
        }
    }

    /// `line:col: severity: message` (prefix with the file name for CLI output).
    pub fn render(&self) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!(
            "{}: {}: {} [{}]",
            self.span,
            sev,
            self.message,
            self.code.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Cloud,
    SimNode,
    Platform,
    EdgeDevice,
    Device,
}

impl Kind {
    fn name(&self) -> &'static str {
        match self {
            Kind::Cloud => "Cloud",
            Kind::SimNode => "SimulationNode",
            Kind::Platform => "Platform",
            Kind::EdgeDevice => "EdgeDevice",
            Kind::Device => "Device",
        }
    }
}

fn declarations(ast: &SpecAst) -> Vec<(&str, Kind, Span)> {
    let mut decls: Vec<(&str, Kind, Span)> = Vec::new();
    for c in &ast.clouds {
        decls.push((&c.id, Kind::Cloud, c.span));
    }
    for n in &ast.sim_nodes {
        decls.push((&n.id, Kind::SimNode, n.span));
    }
    for p in &ast.platforms {
        decls.push((&p.id, Kind::Platform, p.span));
    }
    for e in &ast.edge_devices {
        decls.push((&e.id, Kind::EdgeDevice, e.span));
    }
    for d in &ast.devices {
        decls.push((&d.id, Kind::Device, d.span));
    }
    decls
}

/// Every reference slot in the spec: (referenced id, expected kind, span).
fn references(ast: &SpecAst) -> Vec<(&str, Kind, Span)> {
    let mut refs: Vec<(&str, Kind, Span)> = Vec::new();
    for r in &ast.simulator.node_refs {
        refs.push((&r.id, Kind::SimNode, r.span));
    }
    for n in &ast.sim_nodes {
        refs.push((&n.platform_ref, Kind::Platform, n.platform_ref_span));
        for r in &n.edge_refs {
            refs.push((&r.id, Kind::EdgeDevice, r.span));
        }
    }
    for e in &ast.edge_devices {
        refs.push((&e.cloud_ref, Kind::Cloud, e.cloud_ref_span));
        for r in &e.device_refs {
            refs.push((&r.id, Kind::Device, r.span));
        }
    }
    refs
}

/// Declaration/usage: undeclared references, duplicate declarations, and
/// declarations that nothing ever references.
pub fn check_declarations(ast: &SpecAst) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let decls = declarations(ast);

    let mut seen: HashSet<&str> = HashSet::new();
    for (id, kind, span) in &decls {
        if !seen.insert(id) {
            out.push(Diagnostic::new(
                Code::EDup,
                *span,
                format!("duplicate declaration of `{id}` ({})", kind.name()),
            ));
        }
    }

    let declared: HashSet<&str> = decls.iter().map(|(id, _, _)| *id).collect();
    let mut used: HashSet<&str> = HashSet::new();
    for (id, kind, span) in references(ast) {
        if declared.contains(id) {
            used.insert(id);
        } else {
            out.push(Diagnostic::new(
                Code::EUndecl,
                span,
                format!("reference to undeclared {} `{id}`", kind.name()),
            ));
        }
    }

    for (id, kind, span) in &decls {
        if !used.contains(id) {
            out.push(Diagnostic::new(
                Code::WUnused,
                *span,
                format!("{} `{id}` is declared but never used", kind.name()),
            ));
        }
    }
    out
}

/// Reference-kind checking plus the both-or-neither attribute pairs on
/// platforms (IP/username, CPU/memory).
pub fn check_types(ast: &SpecAst) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let kinds: HashMap<&str, Kind> = declarations(ast)
        .into_iter()
        .map(|(id, kind, _)| (id, kind))
        .collect();

    for (id, expected, span) in references(ast) {
        if let Some(actual) = kinds.get(id) {
            if *actual != expected {
                out.push(Diagnostic::new(
                    Code::EType,
                    span,
                    format!(
                        "`{id}` is a {} but a {} is expected here",
                        actual.name(),
                        expected.name()
                    ),
                ));
            }
        }
    }

    for p in &ast.platforms {
        if p.cpu.is_some() != p.memory_gib.is_some() {
            out.push(Diagnostic::new(
                Code::EType,
                p.span,
                format!(
                    "platform `{}` sets only one of CPU/memory; a constrained platform needs both",
                    p.id
                ),
            ));
        }
        if p.ip.is_some() != p.username.is_some() {
            out.push(Diagnostic::new(
                Code::EType,
                p.span,
                format!(
                    "platform `{}` sets only one of IP/username; a remote platform needs both",
                    p.id
                ),
            ));
        }
    }
    out
}

/// Edge protocol must match the referenced cloud's endpoint kind: MQTT goes
/// with topics, UDP/TCP with a port.
pub fn check_protocols(ast: &SpecAst) -> Vec<Diagnostic> {
    let clouds: HashMap<&str, &CloudEndpoint> = ast
        .clouds
        .iter()
        .map(|c| (c.id.as_str(), &c.endpoint))
        .collect();
    let mut out = Vec::new();
    for e in &ast.edge_devices {
        let Some(endpoint) = clouds.get(e.cloud_ref.as_str()) else {
            continue; // dangling reference; reported by check_declarations
        };
        let mismatch = match (e.protocol, endpoint) {
            (Protocol::Mqtt, CloudEndpoint::Port(_)) => Some("an MQTT edge device needs a topic-based cloud"),
            (Protocol::Udp | Protocol::Tcp, CloudEndpoint::Topics { .. }) => {
                Some("a UDP/TCP edge device needs a port-based cloud")
            }
            _ => None,
        };
        if let Some(msg) = mismatch {
            out.push(Diagnostic::new(
                Code::EProto,
                e.cloud_ref_span,
                format!(
                    "edge device `{}` uses {} but cloud `{}` does not match: {msg}",
                    e.id,
                    e.protocol.as_str(),
                    e.cloud_ref
                ),
            ));
        }
    }
    out
}

/// Time-step arithmetic: the step must divide the duration, offsetRange must
/// stay within one step, and pacing budgets that fill a whole step get a
/// warning.
pub fn check_timestep(ast: &SpecAst) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let duration_ms = ast.simulator.duration.to_ms();
    let step_ms = ast.simulator.step.to_ms();
    if duration_ms == 0 || step_ms == 0 || duration_ms % step_ms != 0 {
        out.push(Diagnostic::new(
            Code::EStep,
            ast.simulator.span,
            format!(
                "time step ({step_ms}ms) must be a positive divisor of the duration ({duration_ms}ms)"
            ),
        ));
    }

    for n in &ast.sim_nodes {
        if n.offset_range_pct > 100 {
            out.push(Diagnostic::new(
                Code::ERange,
                n.span,
                format!(
                    "offsetRange {}% exceeds 100%; offsets would cross step boundaries",
                    n.offset_range_pct
                ),
            ));
        }
    }

    // gap = step/speed; with d devices all due in one step, d gaps of
    // step/speed fill the step when d >= speed, leaving no slack.
    for e in &ast.edge_devices {
        if let Speed::Packets(speed) = e.speed {
            let devices: u64 = e.device_refs.iter().map(|r| r.count).sum();
            if devices >= speed {
                out.push(Diagnostic::new(
                    Code::WTight,
                    e.span,
                    format!(
                        "edge device `{}` has {devices} devices at speed {speed}; pacing gaps alone fill the step and sends may drop",
                        e.id
                    ),
                ));
            }
        }
    }
    out
}

/// Run all four check groups plus parser style notes; deduplicate and order
/// by source position so output is deterministic.
pub fn validate(ast: &SpecAst) -> Vec<Diagnostic> {
    let mut all = Vec::new();
    for note in &ast.style_notes {
        all.push(Diagnostic::new(Code::WStyle, note.span, note.message.clone()));
    }
    all.extend(check_declarations(ast));
    all.extend(check_types(ast));
    all.extend(check_protocols(ast));
    all.extend(check_timestep(ast));
    all.sort_by(|a, b| (a.span, a.code, &a.message).cmp(&(b.span, b.code, &b.message)));
    all.dedup();
    all
}

/// Exit code for the CLI `check` verb: 0 clean, 1 warnings only, 2 errors.
pub fn exit_code(diags: &[Diagnostic]) -> i32 {
    if diags.iter().any(|d| d.severity == Severity::Error) {
        2
    } else if diags.is_empty() {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    const MINI_VALID: &str = r#"
        Cloud:C1 { IP:127.0.0.1 port:9000 }
        Simulator: { duration:10s step:1s simulationNodes:{SN1[1]} }
        SimulationNode: SN1 { platform:P1 offsetRange:20% EdgeDevices:{E1[1]} }
        Platform: P1 { type: Native }
        EdgeDevice: E1 { protocol:UDP speed:MAX cloud:C1 devices:{D1[2]} }
        Device: D1 { period:1 payload:60b }
    "#;

    fn codes(diags: &[Diagnostic]) -> Vec<Code> {
        diags.iter().map(|d| d.code).collect()
    }

    #[test]
    fn valid_spec_is_clean() {
        let ast = parse(MINI_VALID).unwrap();
        assert!(validate(&ast).is_empty());
    }

    #[test]
    fn dangling_node_reference() {
        let src = MINI_VALID.replace("simulationNodes:{SN1[1]}", "simulationNodes:{SN3[1]}");
        let ast = parse(&src).unwrap();
        let diags = check_declarations(&ast);
        assert!(codes(&diags).contains(&Code::EUndecl));
        // SN1 also becomes unused
        assert!(codes(&diags).contains(&Code::WUnused));
    }

    #[test]
    fn unused_device_warns() {
        let src = format!("{MINI_VALID}\nDevice: D9 {{ period:1 payload:8b }}");
        let ast = parse(&src).unwrap();
        let diags = check_declarations(&ast);
        assert_eq!(codes(&diags), vec![Code::WUnused]);
        assert!(diags[0].message.contains("D9"));
    }

    #[test]
    fn wrong_kind_in_node_slot() {
        let src = MINI_VALID.replace("simulationNodes:{SN1[1]}", "simulationNodes:{P1[2]}");
        let ast = parse(&src).unwrap();
        assert!(codes(&check_types(&ast)).contains(&Code::EType));
    }

    #[test]
    fn device_in_edge_slot() {
        let src = MINI_VALID.replace("EdgeDevices:{E1[1]}", "EdgeDevices:{D1[5]}");
        let ast = parse(&src).unwrap();
        assert!(codes(&check_types(&ast)).contains(&Code::EType));
    }

    #[test]
    fn tcp_to_topic_cloud_is_a_protocol_error() {
        let src = MINI_VALID.replace("IP:127.0.0.1 port:9000", "IP:127.0.0.1 pubTopic:pub");
        let ast = parse(&src).unwrap();
        assert_eq!(codes(&check_protocols(&ast)), vec![Code::EProto]);
    }

    #[test]
    fn mqtt_to_topic_cloud_is_fine() {
        let src = MINI_VALID
            .replace("IP:127.0.0.1 port:9000", "IP:127.0.0.1 pubTopic:pub")
            .replace("protocol:UDP", "protocol:MQTT");
        let ast = parse(&src).unwrap();
        assert!(check_protocols(&ast).is_empty());
    }

    #[test]
    fn step_must_divide_duration() {
        let src = MINI_VALID.replace("step:1s", "step:3s");
        let ast = parse(&src).unwrap();
        assert_eq!(codes(&check_timestep(&ast)), vec![Code::EStep]);
        // expressed in ms: 2000 / 500 is fine
        let src = MINI_VALID
            .replace("duration:10s", "duration:2000ms")
            .replace("step:1s", "step:500ms");
        let ast = parse(&src).unwrap();
        assert!(check_timestep(&ast).is_empty());
    }

    #[test]
    fn offset_range_over_100_is_an_error() {
        let src = MINI_VALID.replace("offsetRange:20%", "offsetRange:150%");
        let ast = parse(&src).unwrap();
        assert_eq!(codes(&check_timestep(&ast)), vec![Code::ERange]);
    }

    #[test]
    fn tight_budget_warns() {
        let src = MINI_VALID
            .replace("speed:MAX", "speed:2")
            .replace("devices:{D1[2]}", "devices:{D1[2]}"); // 2 devices >= speed 2
        let ast = parse(&src).unwrap();
        assert_eq!(codes(&check_timestep(&ast)), vec![Code::WTight]);
    }

    #[test]
    fn mixed_cpu_memory_is_e_type() {
        let src = MINI_VALID.replace("type: Native", "type: Docker CPU: 4");
        let ast = parse(&src).unwrap();
        assert!(codes(&check_types(&ast)).contains(&Code::EType));
    }

    #[test]
    fn validate_is_deterministic_and_composes() {
        let src = MINI_VALID
            .replace("simulationNodes:{SN1[1]}", "simulationNodes:{SN3[1]}")
            .replace("step:1s", "step:3s");
        let ast = parse(&src).unwrap();
        let a = validate(&ast);
        let b = validate(&ast);
        assert_eq!(a, b);
        let errors: Vec<_> = a.iter().filter(|d| d.severity == Severity::Error).collect();
        assert_eq!(errors.len(), 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&[]), 0);
        let ast = parse(&format!("{MINI_VALID}\nDevice: D9 {{ period:1 payload:8b }}")).unwrap();
        assert_eq!(exit_code(&validate(&ast)), 1);
        let ast = parse(&MINI_VALID.replace("step:1s", "step:3s")).unwrap();
        assert_eq!(exit_code(&validate(&ast)), 2);
    }
}
