use super::ast::*;
use std::fmt::Write;

/// Canonical formatter. Output re-parses to a structurally equal AST
/// (modulo source spans), which is the round-trip contract the tests pin.
pub fn print(ast: &SpecAst) -> String {
    let mut out = String::new();
    for c in &ast.clouds {
        cloud(&mut out, c);
    }
    simulator(&mut out, &ast.simulator);
    for n in &ast.sim_nodes {
        sim_node(&mut out, n);
    }
    for p in &ast.platforms {
        platform(&mut out, p);
    }
    for e in &ast.edge_devices {
        edge_device(&mut out, e);
    }
    for d in &ast.devices {
        device(&mut out, d);
    }
    out
}

/// Topics and usernames print bare when they re-lex as a plain identifier,
/// quoted otherwise.
fn text(s: &str) -> String {
    let bare = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric())
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
    if bare {
        s.to_string()
    } else {
        quoted(s)
    }
}

fn quoted(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn counted_refs(refs: &[CountedRef]) -> String {
    let items: Vec<String> = refs
        .iter()
        .map(|r| format!("{}[{}]", r.id, r.count))
        .collect();
    format!("{{{}}}", items.join(","))
}

fn cloud(out: &mut String, c: &CloudDecl) {
    writeln!(out, "Cloud:{} {{", c.id).unwrap();
    writeln!(out, "  IP:{}", c.ip).unwrap();
    match &c.endpoint {
        CloudEndpoint::Port(p) => writeln!(out, "  port:{p}").unwrap(),
        CloudEndpoint::Topics {
            pub_topic,
            sub_topic,
        } => {
            writeln!(out, "  pubTopic:{}", text(pub_topic)).unwrap();
            if let Some(sub) = sub_topic {
                writeln!(out, "  subTopic:{}", text(sub)).unwrap();
            }
        }
    }
    if let Some(dst) = &c.record_dst {
        writeln!(out, "  Methods:{{Record({dst})}}").unwrap();
    }
    writeln!(out, "}}").unwrap();
}

fn simulator(out: &mut String, s: &SimulatorDecl) {
    writeln!(out, "Simulator: {{").unwrap();
    writeln!(out, "  duration:{}{}", s.duration.magnitude, s.duration.unit.as_str()).unwrap();
    writeln!(out, "  step:{}{}", s.step.magnitude, s.step.unit.as_str()).unwrap();
    writeln!(out, "  simulationNodes:{}", counted_refs(&s.node_refs)).unwrap();
    writeln!(out, "}}").unwrap();
}

fn sim_node(out: &mut String, n: &SimNodeDecl) {
    writeln!(out, "SimulationNode: {} {{", n.id).unwrap();
    writeln!(out, "  platform:{}", n.platform_ref).unwrap();
    writeln!(out, "  offsetRange:{}%", n.offset_range_pct).unwrap();
    writeln!(out, "  EdgeDevices:{}", counted_refs(&n.edge_refs)).unwrap();
    writeln!(out, "}}").unwrap();
}

fn platform(out: &mut String, p: &PlatformDecl) {
    writeln!(out, "Platform: {}{{", p.id).unwrap();
    writeln!(out, "  type: {}", p.kind.as_str()).unwrap();
    if let Some(ip) = &p.ip {
        writeln!(out, "  IP: {ip}").unwrap();
    }
    if let Some(user) = &p.username {
        writeln!(out, "  username: {}", text(user)).unwrap();
    }
    if let Some(cpu) = p.cpu {
        writeln!(out, "  CPU: {cpu}").unwrap();
    }
    if let Some(mem) = p.memory_gib {
        writeln!(out, "  memory: {mem}G").unwrap();
    }
    writeln!(out, "}}").unwrap();
}

fn edge_device(out: &mut String, e: &EdgeDeviceDecl) {
    writeln!(out, "EdgeDevice: {} {{", e.id).unwrap();
    writeln!(out, "  protocol:{}", e.protocol.as_str()).unwrap();
    match e.speed {
        Speed::Packets(n) => writeln!(out, "  speed:{n}").unwrap(),
        Speed::Max => writeln!(out, "  speed:MAX").unwrap(),
    }
    writeln!(out, "  cloud:{}", e.cloud_ref).unwrap();
    writeln!(out, "  devices:{}", counted_refs(&e.device_refs)).unwrap();
    if let Some(w) = &e.workload {
        writeln!(out, "  workload:{}{}", w.magnitude, w.unit.as_str()).unwrap();
    }
    writeln!(out, "}}").unwrap();
}

fn device(out: &mut String, d: &DeviceDecl) {
    writeln!(out, "Device: {} {{", d.id).unwrap();
    writeln!(out, "  period:{}", d.period).unwrap();
    match &d.payload {
        PayloadSpec::Size { magnitude, unit } => {
            writeln!(out, "  payload:{}{}", magnitude, unit.as_str()).unwrap()
        }
        PayloadSpec::Literal(s) => writeln!(out, "  payload:{}", quoted(s)).unwrap(),
    }
    writeln!(out, "}}").unwrap();
}
