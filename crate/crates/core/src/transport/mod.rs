//! Protocol adapters: one send/receive contract over UDP, TCP and MQTT.
//!
//! Wire formats: raw UDP datagrams; TCP messages prefixed with a 4-byte
//! big-endian length (loss accounting needs message semantics, and TCP has
//! none of its own); MQTT 3.1.1 PUBLISH at QoS 0. Tracked payloads carry the
//! sequence number in their first 8 bytes, big-endian.

pub mod mqtt;

use crate::clock::monotonic_ns;
use crate::dsl::{CloudEndpoint, Protocol};
use crate::plan::{CloudPlan, PayloadPlan};
use mqtt::{MqttError, Packet as MqttPacket};
use std::io::{Read, Write};
use std::net::{TcpStream, UdpSocket};
use std::time::Duration;
use thiserror::Error;

pub const MQTT_DEFAULT_PORT: u16 = 1883;

/// Seq width; sized payloads below this are sent as untracked filler.
pub const SEQ_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub protocol: Protocol,
    pub host: String,
    pub port: u16,
    pub pub_topic: Option<String>,
    pub sub_topic: Option<String>,
}

impl Endpoint {
    pub fn from_cloud(protocol: Protocol, cloud: &CloudPlan) -> Endpoint {
        match &cloud.endpoint {
            CloudEndpoint::Port(port) => Endpoint {
                protocol,
                host: cloud.ip.clone(),
                port: *port,
                pub_topic: None,
                sub_topic: None,
            },
            CloudEndpoint::Topics {
                pub_topic,
                sub_topic,
            } => Endpoint {
                protocol,
                host: cloud.ip.clone(),
                port: MQTT_DEFAULT_PORT,
                pub_topic: Some(pub_topic.clone()),
                sub_topic: sub_topic.clone(),
            },
        }
    }

    fn addr(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Error)]
pub enum ConnectError {
    #[error("connect to {addr} failed: {source}")]
    Io {
        addr: String,
        source: std::io::Error,
    },
    #[error("MQTT CONNACK returned code {0}")]
    ConnackRefused(u8),
    #[error("MQTT handshake failed: {0}")]
    Mqtt(#[from] MqttError),
    #[error("MQTT endpoint requires a publish topic")]
    MissingTopic,
}

#[derive(Debug, Error)]
pub enum SendError {
    #[error("send failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("send buffer full after bounded retry")]
    BufferFull,
}

#[derive(Debug, Error)]
pub enum ReceiveError {
    #[error("connection torn down: {0}")]
    Io(#[from] std::io::Error),
    #[error("MQTT stream error: {0}")]
    Mqtt(MqttError),
}

/// Build the wire payload for one packet. Sized payloads of at least 8 bytes
/// carry the big-endian seq up front and deterministic filler after it;
/// smaller sizes and literals carry no seq.
pub fn encode_packet(seq: u64, payload: &PayloadPlan) -> Vec<u8> {
    match payload {
        PayloadPlan::Literal(s) => s.as_bytes().to_vec(),
        PayloadPlan::Bytes(n) => {
            let n = *n as usize;
            let mut buf = vec![0u8; n];
            if n >= SEQ_BYTES {
                buf[..SEQ_BYTES].copy_from_slice(&seq.to_be_bytes());
                for (i, b) in buf[SEQ_BYTES..].iter_mut().enumerate() {
                    *b = (i % 251) as u8;
                }
            } else {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = (i % 251) as u8;
                }
            }
            buf
        }
    }
}

pub fn decode_seq(bytes: &[u8]) -> Option<u64> {
    let head: [u8; SEQ_BYTES] = bytes.get(..SEQ_BYTES)?.try_into().ok()?;
    Some(u64::from_be_bytes(head))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendReceipt {
    pub seq: u64,
    pub t_send_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub seq: Option<u64>,
    pub bytes: Vec<u8>,
    pub t_recv_ns: u64,
}

/// An open connection. One edge device owns one handle for the whole run;
/// `split` yields independently usable send and receive halves (full duplex).
pub struct Connection {
    send: SendHalf,
    recv: RecvHalf,
    pub local_addr: Option<String>,
}

pub struct SendHalf(SendInner);

enum SendInner {
    Udp(UdpSocket),
    Tcp(TcpStream),
    Mqtt { stream: TcpStream, topic: String },
}

pub struct RecvHalf(RecvInner);

enum RecvInner {
    Udp(UdpSocket),
    Tcp(TcpStream),
    Mqtt { stream: TcpStream, subscribed: bool },
}

/// Open a connection per the endpoint's protocol. For MQTT this completes
/// the CONNECT/CONNACK handshake and issues SUBSCRIBE when a subscribe topic
/// is configured.
pub fn connect(endpoint: &Endpoint) -> Result<Connection, ConnectError> {
    let addr = endpoint.addr();
    let io_err = |source| ConnectError::Io {
        addr: addr.clone(),
        source,
    };
    match endpoint.protocol {
        Protocol::Udp => {
            let socket = UdpSocket::bind("0.0.0.0:0").map_err(io_err)?;
            socket.connect(&addr).map_err(io_err)?;
            let local = socket.local_addr().ok().map(|a| a.to_string());
            let recv = socket.try_clone().map_err(io_err)?;
            Ok(Connection {
                send: SendHalf(SendInner::Udp(socket)),
                recv: RecvHalf(RecvInner::Udp(recv)),
                local_addr: local,
            })
        }
        Protocol::Tcp => {
            let stream = TcpStream::connect(&addr).map_err(io_err)?;
            stream.set_nodelay(true).ok();
            let local = stream.local_addr().ok().map(|a| a.to_string());
            let recv = stream.try_clone().map_err(io_err)?;
            Ok(Connection {
                send: SendHalf(SendInner::Tcp(stream)),
                recv: RecvHalf(RecvInner::Tcp(recv)),
                local_addr: local,
            })
        }
        Protocol::Mqtt => {
            let topic = endpoint
                .pub_topic
                .clone()
                .ok_or(ConnectError::MissingTopic)?;
            let mut stream = TcpStream::connect(&addr).map_err(io_err)?;
            stream.set_nodelay(true).ok();
            let local = stream.local_addr().ok().map(|a| a.to_string());
            let client_id = format!("edgestress-{}", local.as_deref().unwrap_or("0"));
            MqttPacket::Connect {
                protocol_level: 4,
                clean_session: true,
                keep_alive: 0,
                client_id,
            }
            .write_to(&mut stream)?;
            match MqttPacket::read_from(&mut stream)? {
                MqttPacket::Connack { return_code: 0, .. } => {}
                MqttPacket::Connack { return_code, .. } => {
                    return Err(ConnectError::ConnackRefused(return_code))
                }
                _ => return Err(MqttError::Malformed("expected CONNACK").into()),
            }
            let mut subscribed = false;
            if let Some(sub) = &endpoint.sub_topic {
                MqttPacket::Subscribe {
                    packet_id: 1,
                    filters: vec![(sub.clone(), 0)],
                }
                .write_to(&mut stream)?;
                match MqttPacket::read_from(&mut stream)? {
                    MqttPacket::Suback { .. } => subscribed = true,
                    _ => return Err(MqttError::Malformed("expected SUBACK").into()),
                }
            }
            let recv = stream.try_clone().map_err(io_err)?;
            Ok(Connection {
                send: SendHalf(SendInner::Mqtt { stream, topic }),
                recv: RecvHalf(RecvInner::Mqtt {
                    stream: recv,
                    subscribed,
                }),
                local_addr: local,
            })
        }
    }
}

impl Connection {
    pub fn split(self) -> (SendHalf, RecvHalf) {
        (self.send, self.recv)
    }

    pub fn send(&mut self, seq: u64, payload: &[u8]) -> Result<SendReceipt, SendError> {
        self.send.send(seq, payload)
    }

    pub fn receive(&mut self, deadline: Duration) -> Result<Option<Received>, ReceiveError> {
        self.recv.receive(deadline)
    }
}

impl SendHalf {
    /// Transmit one packet; the receipt is timestamped from the monotonic
    /// clock immediately before the write.
    pub fn send(&mut self, seq: u64, payload: &[u8]) -> Result<SendReceipt, SendError> {
        let t_send_ns = monotonic_ns();
        match &mut self.0 {
            SendInner::Udp(socket) => {
                // a full socket buffer gets a short bounded retry, then counts
                // as a drop at the caller
                let mut attempts = 0;
                loop {
                    match socket.send(payload) {
                        Ok(_) => break,
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock && attempts < 3 => {
                            attempts += 1;
                            std::thread::sleep(Duration::from_micros(100));
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            return Err(SendError::BufferFull)
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            SendInner::Tcp(stream) => {
                stream.write_all(&(payload.len() as u32).to_be_bytes())?;
                stream.write_all(payload)?;
            }
            SendInner::Mqtt { stream, topic } => {
                MqttPacket::Publish {
                    topic: topic.clone(),
                    payload: payload.to_vec(),
                }
                .write_to(stream)
                .map_err(|e| match e {
                    MqttError::Io(io) => SendError::Io(io),
                    other => SendError::Io(std::io::Error::other(other)),
                })?;
            }
        }
        Ok(SendReceipt { seq, t_send_ns })
    }
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(
        e.kind(),
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
    )
}

impl RecvHalf {
    /// Next inbound packet, or `None` once the deadline passes with nothing
    /// to deliver.
    pub fn receive(&mut self, deadline: Duration) -> Result<Option<Received>, ReceiveError> {
        match &mut self.0 {
            RecvInner::Udp(socket) => {
                socket.set_read_timeout(Some(deadline))?;
                let mut buf = vec![0u8; 65536];
                match socket.recv(&mut buf) {
                    Ok(n) => {
                        buf.truncate(n);
                        Ok(Some(Received {
                            seq: decode_seq(&buf),
                            t_recv_ns: monotonic_ns(),
                            bytes: buf,
                        }))
                    }
                    Err(e) if is_timeout(&e) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            }
            RecvInner::Tcp(stream) => {
                stream.set_read_timeout(Some(deadline))?;
                let mut len_buf = [0u8; 4];
                match stream.read_exact(&mut len_buf) {
                    Ok(()) => {}
                    Err(e) if is_timeout(&e) => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
                let len = u32::from_be_bytes(len_buf) as usize;
                let mut buf = vec![0u8; len];
                stream.read_exact(&mut buf)?;
                Ok(Some(Received {
                    seq: decode_seq(&buf),
                    t_recv_ns: monotonic_ns(),
                    bytes: buf,
                }))
            }
            RecvInner::Mqtt { stream, subscribed } => {
                if !*subscribed {
                    // no subscription, nothing will ever arrive
                    std::thread::sleep(deadline);
                    return Ok(None);
                }
                stream.set_read_timeout(Some(deadline))?;
                loop {
                    match MqttPacket::read_from(stream) {
                        Ok(MqttPacket::Publish { payload, .. }) => {
                            return Ok(Some(Received {
                                seq: decode_seq(&payload),
                                t_recv_ns: monotonic_ns(),
                                bytes: payload,
                            }))
                        }
                        Ok(_) => continue, // PINGRESP and friends
                        Err(MqttError::Io(e)) if is_timeout(&e) => return Ok(None),
                        Err(MqttError::Io(e)) => return Err(e.into()),
                        Err(other) => return Err(ReceiveError::Mqtt(other)),
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_occupies_first_eight_bytes_big_endian() {
        let bytes = encode_packet(7, &PayloadPlan::Bytes(8));
        assert_eq!(bytes, vec![0, 0, 0, 0, 0, 0, 0, 7]);
        assert_eq!(decode_seq(&bytes), Some(7));
    }

    #[test]
    fn sized_payload_wire_size_is_exact() {
        for size in [8u64, 60, 100, 1024] {
            let bytes = encode_packet(42, &PayloadPlan::Bytes(size));
            assert_eq!(bytes.len() as u64, size);
            assert_eq!(decode_seq(&bytes), Some(42));
        }
        // 60b: 8 seq bytes + 52 filler
        let bytes = encode_packet(1, &PayloadPlan::Bytes(60));
        assert_eq!(bytes.len(), 60);
    }

    #[test]
    fn literal_payload_carries_no_seq() {
        let bytes = encode_packet(99, &PayloadPlan::Literal("23C".into()));
        assert_eq!(bytes, vec![0x32, 0x33, 0x43]);
    }

    #[test]
    fn tiny_sized_payload_is_untracked_filler() {
        let bytes = encode_packet(5, &PayloadPlan::Bytes(4));
        assert_eq!(bytes.len(), 4);
        assert_eq!(decode_seq(&bytes), None);
    }

    #[test]
    fn tcp_connect_to_closed_port_is_refused() {
        let ep = Endpoint {
            protocol: Protocol::Tcp,
            host: "127.0.0.1".into(),
            port: 1, // nothing listens there
            pub_topic: None,
            sub_topic: None,
        };
        assert!(matches!(connect(&ep), Err(ConnectError::Io { .. })));
    }

    #[test]
    fn udp_connect_is_connectionless() {
        let ep = Endpoint {
            protocol: Protocol::Udp,
            host: "127.0.0.1".into(),
            port: 9, // discard; no traffic is sent by connect
            pub_topic: None,
            sub_topic: None,
        };
        let conn = connect(&ep).unwrap();
        assert!(conn.local_addr.is_some());
    }

    #[test]
    fn udp_loopback_seq_round_trip() {
        let server = UdpSocket::bind("127.0.0.1:0").unwrap();
        let port = server.local_addr().unwrap().port();
        let ep = Endpoint {
            protocol: Protocol::Udp,
            host: "127.0.0.1".into(),
            port,
            pub_topic: None,
            sub_topic: None,
        };
        let mut conn = connect(&ep).unwrap();
        let payload = encode_packet(123, &PayloadPlan::Bytes(16));
        let receipt = conn.send(123, &payload).unwrap();

        let mut buf = [0u8; 64];
        let (n, from) = server.recv_from(&mut buf).unwrap();
        server.send_to(&buf[..n], from).unwrap();

        let got = conn
            .receive(Duration::from_millis(500))
            .unwrap()
            .expect("echo");
        assert_eq!(got.seq, Some(123));
        assert!(got.t_recv_ns >= receipt.t_send_ns);
        assert_eq!(got.bytes, payload);
    }

    #[test]
    fn receive_timeout_contract() {
        let ep = Endpoint {
            protocol: Protocol::Udp,
            host: "127.0.0.1".into(),
            port: 9,
            pub_topic: None,
            sub_topic: None,
        };
        let mut conn = connect(&ep).unwrap();
        let start = std::time::Instant::now();
        let got = conn.receive(Duration::from_millis(50)).unwrap();
        assert!(got.is_none());
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(50));
        assert!(elapsed < Duration::from_millis(500)); // scheduler slack
    }
}
