//! Pipeline hot paths: spec parsing, plan resolution, packet encoding.

use criterion::{criterion_group, criterion_main, Criterion};
use edgestress_core::plan::PayloadPlan;
use edgestress_core::transport::encode_packet;
use std::hint::black_box;

const SPEC: &str = r#"
Cloud:C1 { IP:127.0.0.1 port:9001 }
Cloud:C2 { IP:127.0.0.1 pubTopic:pub subTopic:sub }
Simulator: { duration:10s step:1s simulationNodes:{SN1[5],SN2[1]} }
SimulationNode: SN1 { platform:P1 offsetRange:20% EdgeDevices:{E1[7],E2[3]} }
SimulationNode: SN2 { platform:P1 offsetRange:60% EdgeDevices:{E1[30]} }
Platform: P1 { type: Native }
EdgeDevice: E1 { protocol:TCP speed:100 cloud:C1 devices:{D1[100]} }
EdgeDevice: E2 { protocol:MQTT speed:1000 cloud:C2 devices:{D1[10],D2[20]} workload:20ms }
Device: D1 { period:1 payload:60b }
Device: D2 { period:2 payload:100b }
"#;

fn bench_parse(c: &mut Criterion) {
    c.bench_function("parse_composite_spec", |b| {
        b.iter(|| edgestress_core::parse(black_box(SPEC)).unwrap())
    });
}

fn bench_resolve(c: &mut Criterion) {
    let ast = edgestress_core::parse(SPEC).unwrap();
    c.bench_function("resolve_composite_spec", |b| {
        b.iter(|| edgestress_core::resolve(black_box(&ast), 42).unwrap())
    });
}

fn bench_manifest(c: &mut Criterion) {
    let ast = edgestress_core::parse(SPEC).unwrap();
    let plan = edgestress_core::resolve(&ast, 42).unwrap();
    c.bench_function("emit_manifest", |b| {
        b.iter(|| edgestress_core::plan::emit_manifest(black_box(&plan)))
    });
}

fn bench_encode(c: &mut Criterion) {
    let sized = PayloadPlan::Bytes(166);
    c.bench_function("encode_packet_166b", |b| {
        b.iter(|| encode_packet(black_box(7), black_box(&sized)))
    });
}

criterion_group!(benches, bench_parse, bench_resolve, bench_manifest, bench_encode);
criterion_main!(benches);
