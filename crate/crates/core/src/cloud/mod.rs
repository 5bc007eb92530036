//! Bundled measurement-grade cloud stand-ins: a UDP/TCP echo loopback and a
//! minimal MQTT sink. Both count and timestamp everything received (the
//! ground truth for cloud-side loss), optionally throttled to induce drops
//! deterministically. A line-based control endpoint on `port + 1` serves
//! `STATS` and `RESET`.

use crate::clock::monotonic_ns;
use crate::transport::mqtt::{MqttError, Packet as MqttPacket};
use crate::transport::decode_seq;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

/// Frames larger than this are treated as a framing error on TCP.
const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum BindError {
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudRecord {
    pub source: String,
    pub seq: Option<u64>,
    pub t_recv_ns: u64,
}

/// Snapshot of everything the cloud has seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LedgerSnapshot {
    pub received_count: u64,
    pub echoed_count: u64,
    pub dropped_count: u64,
    pub other_topic_count: u64,
    pub per_source: BTreeMap<String, u64>,
    pub records: Vec<CloudRecord>,
}

#[derive(Default)]
struct LedgerInner {
    snapshot: LedgerSnapshot,
}

/// Concurrent recorders, snapshot reads.
pub struct CloudLedger {
    inner: Mutex<LedgerInner>,
    record_packets: bool,
}

impl CloudLedger {
    fn new(record_packets: bool) -> Self {
        CloudLedger {
            inner: Mutex::new(LedgerInner::default()),
            record_packets,
        }
    }

    fn record(&self, source: &str, seq: Option<u64>) -> u64 {
        let t = monotonic_ns();
        let mut inner = self.inner.lock().unwrap();
        inner.snapshot.received_count += 1;
        *inner
            .snapshot
            .per_source
            .entry(source.to_string())
            .or_insert(0) += 1;
        if self.record_packets {
            inner.snapshot.records.push(CloudRecord {
                source: source.to_string(),
                seq,
                t_recv_ns: t,
            });
        }
        t
    }

    fn count_echo(&self) {
        self.inner.lock().unwrap().snapshot.echoed_count += 1;
    }

    fn count_drop(&self) {
        self.inner.lock().unwrap().snapshot.dropped_count += 1;
    }

    fn count_other_topic(&self) {
        self.inner.lock().unwrap().snapshot.other_topic_count += 1;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.inner.lock().unwrap().snapshot.clone()
    }

    pub fn reset(&self) {
        self.inner.lock().unwrap().snapshot = LedgerSnapshot::default();
    }
}

/// Token bucket over a 100ms window; `None` rate means unthrottled.
struct Throttle {
    rate_pps: Option<u64>,
    state: Mutex<(u64, u64)>, // (last_ns, tokens scaled by 1e9)
}

const TOKEN_SCALE: u64 = 1_000_000_000;

impl Throttle {
    fn new(rate_pps: Option<u64>) -> Self {
        // the bucket starts full: the first window's budget is available
        let initial = rate_pps
            .map(|pps| (pps * TOKEN_SCALE / 10).max(TOKEN_SCALE))
            .unwrap_or(0);
        Throttle {
            rate_pps,
            state: Mutex::new((monotonic_ns(), initial)),
        }
    }

    fn allow(&self) -> bool {
        let Some(pps) = self.rate_pps else {
            return true;
        };
        if pps == 0 {
            return false;
        }
        let now = monotonic_ns();
        let mut state = self.state.lock().unwrap();
        let (last, tokens) = *state;
        // tokens accrue at pps, capped at one 100ms window's budget
        let burst = (pps * TOKEN_SCALE / 10).max(TOKEN_SCALE);
        let gained = ((now.saturating_sub(last)) as u128 * pps as u128 * TOKEN_SCALE as u128
            / 1_000_000_000u128) as u64;
        let tokens = tokens.saturating_add(gained).min(burst);
        if tokens >= TOKEN_SCALE {
            *state = (now, tokens - TOKEN_SCALE);
            true
        } else {
            *state = (now, tokens);
            false
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CloudConfig {
    pub throttle_pps: Option<u64>,
    /// Keep per-packet records (needed for same-host TransTime).
    pub record_packets: bool,
}

/// A serving test cloud; dropping it stops all worker threads.
pub struct CloudServer {
    pub port: u16,
    pub control_port: u16,
    ledger: Arc<CloudLedger>,
    shutdown: Arc<AtomicBool>,
    threads: Vec<std::thread::JoinHandle<()>>,
}

impl CloudServer {
    pub fn ledger(&self) -> &CloudLedger {
        &self.ledger
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for CloudServer {
    fn drop(&mut self) {
        self.stop();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoProtocol {
    Udp,
    Tcp,
}

/// Start a UDP or TCP echo cloud: every inbound message is timestamped,
/// recorded and echoed verbatim back to the sender (TCP re-adds the length
/// frame). Port 0 binds an ephemeral port.
pub fn run_echo(
    protocol: EchoProtocol,
    port: u16,
    cfg: CloudConfig,
) -> Result<CloudServer, BindError> {
    let ledger = Arc::new(CloudLedger::new(cfg.record_packets));
    let throttle = Arc::new(Throttle::new(cfg.throttle_pps));
    let shutdown = Arc::new(AtomicBool::new(false));
    let mut threads = Vec::new();

    let bound_port = match protocol {
        EchoProtocol::Udp => {
            let socket = UdpSocket::bind(("0.0.0.0", port))
                .map_err(|source| BindError::Bind { port, source })?;
            let bound = socket.local_addr().unwrap().port();
            socket
                .set_read_timeout(Some(Duration::from_millis(50)))
                .unwrap();
            let (ledger, throttle, shutdown) =
                (ledger.clone(), throttle.clone(), shutdown.clone());
            threads.push(std::thread::spawn(move || {
                let mut buf = vec![0u8; 65536];
                while !shutdown.load(Ordering::SeqCst) {
                    match socket.recv_from(&mut buf) {
                        Ok((n, from)) => {
                            if !throttle.allow() {
                                ledger.count_drop();
                                continue;
                            }
                            ledger.record(&from.to_string(), decode_seq(&buf[..n]));
                            if socket.send_to(&buf[..n], from).is_ok() {
                                ledger.count_echo();
                            }
                        }
                        Err(ref e)
                            if e.kind() == std::io::ErrorKind::WouldBlock
                                || e.kind() == std::io::ErrorKind::TimedOut => {}
                        Err(_) => break,
                    }
                }
            }));
            bound
        }
        EchoProtocol::Tcp => {
            let listener = TcpListener::bind(("0.0.0.0", port))
                .map_err(|source| BindError::Bind { port, source })?;
            let bound = listener.local_addr().unwrap().port();
            listener.set_nonblocking(true).unwrap();
            let (ledger, throttle, shutdown) =
                (ledger.clone(), throttle.clone(), shutdown.clone());
            threads.push(std::thread::spawn(move || {
                let mut conns: Vec<std::thread::JoinHandle<()>> = Vec::new();
                while !shutdown.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let (ledger, throttle, shutdown) =
                                (ledger.clone(), throttle.clone(), shutdown.clone());
                            conns.push(std::thread::spawn(move || {
                                echo_tcp_conn(stream, peer.to_string(), &ledger, &throttle, &shutdown)
                            }));
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(10));
                        }
                        Err(_) => break,
                    }
                }
                for c in conns {
                    let _ = c.join();
                }
            }));
            bound
        }
    };

    let control_port = spawn_control(bound_port, ledger.clone(), shutdown.clone(), &mut threads)?;
    Ok(CloudServer {
        port: bound_port,
        control_port,
        ledger,
        shutdown,
        threads,
    })
}

fn echo_tcp_conn(
    mut stream: TcpStream,
    peer: String,
    ledger: &CloudLedger,
    throttle: &Throttle,
    shutdown: &AtomicBool,
) {
    stream
        .set_read_timeout(Some(Duration::from_millis(50)))
        .ok();
    stream.set_nodelay(true).ok();
    let mut len_buf = [0u8; 4];
    while !shutdown.load(Ordering::SeqCst) {
        match stream.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(ref e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue
            }
            Err(_) => return,
        }
        let len = u32::from_be_bytes(len_buf) as usize;
        if len > MAX_FRAME {
            return; // framing violation drops the connection, counts nothing
        }
        let mut buf = vec![0u8; len];
        if stream.read_exact(&mut buf).is_err() {
            return;
        }
        if !throttle.allow() {
            ledger.count_drop();
            continue;
        }
        ledger.record(&peer, decode_seq(&buf));
        if stream.write_all(&len_buf).is_err() || stream.write_all(&buf).is_err() {
            return;
        }
        ledger.count_echo();
    }
}

type Subscribers = Arc<Mutex<Vec<(String, TcpStream)>>>;

/// Start the MQTT sink: completes CONNECT/CONNACK and SUBSCRIBE/SUBACK,
/// records every PUBLISH on the accepted topic, counts others under
/// `other_topic`. With an echo topic configured, accepted publishes are
/// reflected to that topic's subscribers. Protocol violations close the
/// offending connection only.
pub fn run_mqtt_sink(
    port: u16,
    accepted_topic: String,
    echo_topic: Option<String>,
    cfg: CloudConfig,
) -> Result<CloudServer, BindError> {
    let ledger = Arc::new(CloudLedger::new(cfg.record_packets));
    let throttle = Arc::new(Throttle::new(cfg.throttle_pps));
    let shutdown = Arc::new(AtomicBool::new(false));
    let subscribers: Subscribers = Arc::new(Mutex::new(Vec::new()));
    let mut threads = Vec::new();

    let listener =
        TcpListener::bind(("0.0.0.0", port)).map_err(|source| BindError::Bind { port, source })?;
    let bound = listener.local_addr().unwrap().port();
    listener.set_nonblocking(true).unwrap();

    {
        let (ledger, throttle, shutdown, subscribers) = (
            ledger.clone(),
            throttle.clone(),
            shutdown.clone(),
            subscribers.clone(),
        );
        threads.push(std::thread::spawn(move || {
            let mut conns: Vec<std::thread::JoinHandle<()>> = Vec::new();
            while !shutdown.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let ctx = SinkCtx {
                            ledger: ledger.clone(),
                            throttle: throttle.clone(),
                            shutdown: shutdown.clone(),
                            subscribers: subscribers.clone(),
                            accepted_topic: accepted_topic.clone(),
                            echo_topic: echo_topic.clone(),
                        };
                        conns.push(std::thread::spawn(move || {
                            let _ = mqtt_conn(stream, peer.to_string(), &ctx);
                        }));
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(10));
                    }
                    Err(_) => break,
                }
            }
            for c in conns {
                let _ = c.join();
            }
        }));
    }

    let control_port = spawn_control(bound, ledger.clone(), shutdown.clone(), &mut threads)?;
    Ok(CloudServer {
        port: bound,
        control_port,
        ledger,
        shutdown,
        threads,
    })
}

struct SinkCtx {
    ledger: Arc<CloudLedger>,
    throttle: Arc<Throttle>,
    shutdown: Arc<AtomicBool>,
    subscribers: Subscribers,
    accepted_topic: String,
    echo_topic: Option<String>,
}

fn mqtt_conn(mut stream: TcpStream, peer: String, ctx: &SinkCtx) -> Result<(), MqttError> {
    stream.set_nodelay(true).ok();
    stream
        .set_read_timeout(Some(Duration::from_millis(50)))
        .ok();

    // handshake; anything but a level-4 CONNECT is refused
    let connect = loop {
        match MqttPacket::read_from(&mut stream) {
            Ok(p) => break p,
            Err(MqttError::Io(ref e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                if ctx.shutdown.load(Ordering::SeqCst) {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    };
    match connect {
        MqttPacket::Connect {
            protocol_level: 4, ..
        } => {
            MqttPacket::Connack {
                session_present: false,
                return_code: 0,
            }
            .write_to(&mut stream)?;
        }
        MqttPacket::Connect { .. } => {
            MqttPacket::Connack {
                session_present: false,
                return_code: 1, // unacceptable protocol level
            }
            .write_to(&mut stream)?;
            return Ok(());
        }
        _ => return Ok(()), // protocol violation: close this connection only
    }

    while !ctx.shutdown.load(Ordering::SeqCst) {
        let packet = match MqttPacket::read_from(&mut stream) {
            Ok(p) => p,
            Err(MqttError::Io(ref e))
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue
            }
            Err(_) => return Ok(()),
        };
        match packet {
            MqttPacket::Subscribe { packet_id, filters } => {
                let codes = vec![0u8; filters.len()];
                {
                    let mut subs = ctx.subscribers.lock().unwrap();
                    for (topic, _) in &filters {
                        if let Ok(clone) = stream.try_clone() {
                            subs.push((topic.clone(), clone));
                        }
                    }
                }
                MqttPacket::Suback {
                    packet_id,
                    return_codes: codes,
                }
                .write_to(&mut stream)?;
            }
            MqttPacket::Publish { topic, payload } => {
                if !ctx.throttle.allow() {
                    ctx.ledger.count_drop();
                    continue;
                }
                if topic == ctx.accepted_topic {
                    ctx.ledger.record(&peer, decode_seq(&payload));
                    if let Some(echo) = &ctx.echo_topic {
                        let out = MqttPacket::Publish {
                            topic: echo.clone(),
                            payload,
                        }
                        .encode();
                        let mut subs = ctx.subscribers.lock().unwrap();
                        subs.retain_mut(|(t, s)| {
                            if t == echo {
                                if s.write_all(&out).is_err() {
                                    return false;
                                }
                                ctx.ledger.count_echo();
                            }
                            true
                        });
                    }
                } else {
                    ctx.ledger.count_other_topic();
                }
            }
            MqttPacket::Pingreq => {
                MqttPacket::Pingresp.write_to(&mut stream)?;
            }
            MqttPacket::Disconnect => return Ok(()),
            _ => return Ok(()), // unexpected packet: close
        }
    }
    Ok(())
}

/// Control protocol: `STATS\n` answers one JSON line, `RESET\n` answers `OK`.
fn spawn_control(
    data_port: u16,
    ledger: Arc<CloudLedger>,
    shutdown: Arc<AtomicBool>,
    threads: &mut Vec<std::thread::JoinHandle<()>>,
) -> Result<u16, BindError> {
    let want = if data_port == u16::MAX { 0 } else { data_port + 1 };
    let listener = TcpListener::bind(("0.0.0.0", want)).map_err(|source| BindError::Bind {
        port: want,
        source,
    })?;
    let control_port = listener.local_addr().unwrap().port();
    listener.set_nonblocking(true).unwrap();
    threads.push(std::thread::spawn(move || {
        while !shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = control_conn(stream, &ledger);
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
        }
    }));
    Ok(control_port)
}

fn control_conn(stream: TcpStream, ledger: &CloudLedger) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        match line.trim() {
            "STATS" => {
                let json = serde_json::to_string(&ledger.snapshot()).unwrap();
                writer.write_all(json.as_bytes())?;
                writer.write_all(b"\n")?;
            }
            "RESET" => {
                ledger.reset();
                writer.write_all(b"OK\n")?;
            }
            "" => {}
            _ => {
                writer.write_all(b"ERR unknown command\n")?;
            }
        }
    }
    Ok(())
}

/// Client side of the control protocol.
pub fn fetch_stats(addr: &str) -> std::io::Result<LedgerSnapshot> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(b"STATS\n")?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    serde_json::from_str(&line).map_err(std::io::Error::other)
}

pub fn reset_stats(addr: &str) -> std::io::Result<()> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(b"RESET\n")?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim() == "OK" {
        Ok(())
    } else {
        Err(std::io::Error::other("RESET not acknowledged"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wait_for<F: Fn() -> bool>(cond: F) {
        for _ in 0..200 {
            if cond() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        panic!("condition not reached within 2s");
    }

    #[test]
    fn udp_echo_records_and_reflects() {
        let cloud = run_echo(
            EchoProtocol::Udp,
            0,
            CloudConfig {
                record_packets: true,
                ..Default::default()
            },
        )
        .unwrap();
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.connect(("127.0.0.1", cloud.port)).unwrap();
        sock.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        let mut msg = 42u64.to_be_bytes().to_vec();
        msg.extend_from_slice(b"abcd");
        sock.send(&msg).unwrap();
        let mut buf = [0u8; 64];
        let n = sock.recv(&mut buf).unwrap();
        assert_eq!(&buf[..n], &msg[..]);
        wait_for(|| cloud.snapshot().echoed_count == 1);
        let snap = cloud.snapshot();
        assert_eq!(snap.received_count, 1);
        assert_eq!(snap.records.len(), 1);
        assert_eq!(snap.records[0].seq, Some(42));
        cloud.shutdown();
    }

    #[test]
    fn tcp_echo_round_trip_and_framing_guard() {
        let cloud = run_echo(EchoProtocol::Tcp, 0, CloudConfig::default()).unwrap();
        let mut stream = TcpStream::connect(("127.0.0.1", cloud.port)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(2)))
            .unwrap();
        let payload = 7u64.to_be_bytes();
        stream
            .write_all(&(payload.len() as u32).to_be_bytes())
            .unwrap();
        stream.write_all(&payload).unwrap();
        let mut len_buf = [0u8; 4];
        stream.read_exact(&mut len_buf).unwrap();
        assert_eq!(u32::from_be_bytes(len_buf) as usize, payload.len());
        let mut echoed = [0u8; 8];
        stream.read_exact(&mut echoed).unwrap();
        assert_eq!(echoed, payload);

        // oversized frame length closes the connection without counting
        let mut bad = TcpStream::connect(("127.0.0.1", cloud.port)).unwrap();
        bad.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        bad.write_all(&u32::MAX.to_be_bytes()).unwrap();
        let mut one = [0u8; 1];
        assert_eq!(bad.read(&mut one).unwrap_or(0), 0);

        assert_eq!(cloud.snapshot().received_count, 1);
        cloud.shutdown();
    }

    #[test]
    fn throttle_zero_drops_everything() {
        let cloud = run_echo(
            EchoProtocol::Udp,
            0,
            CloudConfig {
                throttle_pps: Some(0),
                record_packets: false,
            },
        )
        .unwrap();
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        for _ in 0..5 {
            sock.send_to(b"x", ("127.0.0.1", cloud.port)).unwrap();
        }
        wait_for(|| cloud.snapshot().dropped_count == 5);
        let snap = cloud.snapshot();
        assert_eq!(snap.received_count, 0);
        assert_eq!(snap.echoed_count, 0);
        cloud.shutdown();
    }

    #[test]
    fn throttle_caps_per_window() {
        let t = Throttle::new(Some(10)); // one token per 100ms
        let mut allowed = 0;
        for _ in 0..50 {
            if t.allow() {
                allowed += 1;
            }
        }
        assert!(allowed <= 2, "allowed {allowed} packets in a burst");
        assert!(allowed >= 1);
    }

    #[test]
    fn mqtt_sink_handshake_publish_and_other_topic() {
        let cloud = run_mqtt_sink(
            0,
            "up".to_string(),
            None,
            CloudConfig {
                record_packets: true,
                ..Default::default()
            },
        )
        .unwrap();
        let mut stream = TcpStream::connect(("127.0.0.1", cloud.port)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(2)))
            .unwrap();
        MqttPacket::Connect {
            protocol_level: 4,
            clean_session: true,
            keep_alive: 0,
            client_id: "t1".into(),
        }
        .write_to(&mut stream)
        .unwrap();
        assert_eq!(
            MqttPacket::read_from(&mut stream).unwrap(),
            MqttPacket::Connack {
                session_present: false,
                return_code: 0
            }
        );
        let mut payload = 9u64.to_be_bytes().to_vec();
        payload.push(0xff);
        MqttPacket::Publish {
            topic: "up".into(),
            payload,
        }
        .write_to(&mut stream)
        .unwrap();
        MqttPacket::Publish {
            topic: "elsewhere".into(),
            payload: vec![1],
        }
        .write_to(&mut stream)
        .unwrap();
        MqttPacket::Pingreq.write_to(&mut stream).unwrap();
        assert_eq!(
            MqttPacket::read_from(&mut stream).unwrap(),
            MqttPacket::Pingresp
        );
        wait_for(|| cloud.snapshot().other_topic_count == 1);
        let snap = cloud.snapshot();
        assert_eq!(snap.received_count, 1);
        assert_eq!(snap.records[0].seq, Some(9));
        MqttPacket::Disconnect.write_to(&mut stream).unwrap();
        cloud.shutdown();
    }

    #[test]
    fn mqtt_sink_refuses_wrong_protocol_level() {
        let cloud = run_mqtt_sink(0, "up".into(), None, CloudConfig::default()).unwrap();
        let mut stream = TcpStream::connect(("127.0.0.1", cloud.port)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(2)))
            .unwrap();
        MqttPacket::Connect {
            protocol_level: 3,
            clean_session: true,
            keep_alive: 0,
            client_id: "old".into(),
        }
        .write_to(&mut stream)
        .unwrap();
        assert_eq!(
            MqttPacket::read_from(&mut stream).unwrap(),
            MqttPacket::Connack {
                session_present: false,
                return_code: 1
            }
        );
        cloud.shutdown();
    }

    #[test]
    fn mqtt_echo_topic_reflects_to_subscribers() {
        let cloud = run_mqtt_sink(
            0,
            "up".to_string(),
            Some("down".to_string()),
            CloudConfig::default(),
        )
        .unwrap();
        let mut stream = TcpStream::connect(("127.0.0.1", cloud.port)).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(2)))
            .unwrap();
        MqttPacket::Connect {
            protocol_level: 4,
            clean_session: true,
            keep_alive: 0,
            client_id: "t2".into(),
        }
        .write_to(&mut stream)
        .unwrap();
        MqttPacket::read_from(&mut stream).unwrap();
        MqttPacket::Subscribe {
            packet_id: 1,
            filters: vec![("down".into(), 0)],
        }
        .write_to(&mut stream)
        .unwrap();
        assert_eq!(
            MqttPacket::read_from(&mut stream).unwrap(),
            MqttPacket::Suback {
                packet_id: 1,
                return_codes: vec![0]
            }
        );
        MqttPacket::Publish {
            topic: "up".into(),
            payload: vec![5, 6, 7],
        }
        .write_to(&mut stream)
        .unwrap();
        assert_eq!(
            MqttPacket::read_from(&mut stream).unwrap(),
            MqttPacket::Publish {
                topic: "down".into(),
                payload: vec![5, 6, 7]
            }
        );
        cloud.shutdown();
    }

    #[test]
    fn control_endpoint_stats_and_reset() {
        let cloud = run_echo(EchoProtocol::Udp, 0, CloudConfig::default()).unwrap();
        let addr = format!("127.0.0.1:{}", cloud.control_port);
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        sock.send_to(b"hello", ("127.0.0.1", cloud.port)).unwrap();
        wait_for(|| cloud.snapshot().received_count == 1);
        let snap = fetch_stats(&addr).unwrap();
        assert_eq!(snap.received_count, 1);
        reset_stats(&addr).unwrap();
        assert_eq!(fetch_stats(&addr).unwrap().received_count, 0);
        cloud.shutdown();
    }
}
