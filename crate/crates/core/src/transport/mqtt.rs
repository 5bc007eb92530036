//! MQTT 3.1.1 packet codec for the subset both sides of this toolkit speak:
//! CONNECT, CONNACK, SUBSCRIBE, SUBACK, PUBLISH (QoS 0), PINGREQ, PINGRESP,
//! DISCONNECT. Encoding is bit-exact per the OASIS wire format; everything
//! else is rejected.

use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MqttError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("unsupported packet type {0:#x}")]
    Unsupported(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect {
        protocol_level: u8,
        clean_session: bool,
        keep_alive: u16,
        client_id: String,
    },
    Connack {
        session_present: bool,
        return_code: u8,
    },
    Subscribe {
        packet_id: u16,
        filters: Vec<(String, u8)>,
    },
    Suback {
        packet_id: u16,
        return_codes: Vec<u8>,
    },
    Publish {
        topic: String,
        payload: Vec<u8>,
    },
    Pingreq,
    Pingresp,
    Disconnect,
}

fn encode_remaining_length(mut len: usize, out: &mut Vec<u8>) {
    loop {
        let mut byte = (len % 128) as u8;
        len /= 128;
        if len > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if len == 0 {
            break;
        }
    }
}

fn put_str(s: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Packet {
    pub fn encode(&self) -> Vec<u8> {
        let (first, body): (u8, Vec<u8>) = match self {
            Packet::Connect {
                protocol_level,
                clean_session,
                keep_alive,
                client_id,
            } => {
                let mut b = Vec::new();
                put_str("MQTT", &mut b);
                b.push(*protocol_level);
                b.push(if *clean_session { 0x02 } else { 0x00 });
                b.extend_from_slice(&keep_alive.to_be_bytes());
                put_str(client_id, &mut b);
                (0x10, b)
            }
            Packet::Connack {
                session_present,
                return_code,
            } => (0x20, vec![u8::from(*session_present), *return_code]),
            Packet::Subscribe { packet_id, filters } => {
                let mut b = Vec::new();
                b.extend_from_slice(&packet_id.to_be_bytes());
                for (topic, qos) in filters {
                    put_str(topic, &mut b);
                    b.push(*qos);
                }
                // bits 3..0 of the first byte are reserved as 0b0010
                (0x82, b)
            }
            Packet::Suback {
                packet_id,
                return_codes,
            } => {
                let mut b = Vec::new();
                b.extend_from_slice(&packet_id.to_be_bytes());
                b.extend_from_slice(return_codes);
                (0x90, b)
            }
            Packet::Publish { topic, payload } => {
                let mut b = Vec::new();
                put_str(topic, &mut b);
                b.extend_from_slice(payload);
                (0x30, b) // QoS 0: no packet identifier
            }
            Packet::Pingreq => (0xC0, Vec::new()),
            Packet::Pingresp => (0xD0, Vec::new()),
            Packet::Disconnect => (0xE0, Vec::new()),
        };
        let mut out = Vec::with_capacity(body.len() + 5);
        out.push(first);
        encode_remaining_length(body.len(), &mut out);
        out.extend_from_slice(&body);
        out
    }

    /// Read one packet off a stream. Blocks per the reader's timeout config.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Packet, MqttError> {
        let mut first = [0u8; 1];
        r.read_exact(&mut first)?;
        let mut remaining: usize = 0;
        let mut shift = 0u32;
        loop {
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            remaining |= ((b[0] & 0x7f) as usize) << shift;
            if b[0] & 0x80 == 0 {
                break;
            }
            shift += 7;
            if shift > 21 {
                return Err(MqttError::Malformed("remaining length over 4 bytes"));
            }
        }
        let mut body = vec![0u8; remaining];
        r.read_exact(&mut body)?;
        Packet::decode_body(first[0], &body)
    }

    fn decode_body(first: u8, body: &[u8]) -> Result<Packet, MqttError> {
        let mut cur = Cursor { buf: body, pos: 0 };
        match first & 0xf0 {
            0x10 => {
                let name = cur.take_str()?;
                if name != "MQTT" {
                    return Err(MqttError::Malformed("protocol name"));
                }
                let protocol_level = cur.take_u8()?;
                let flags = cur.take_u8()?;
                let keep_alive = cur.take_u16()?;
                let client_id = cur.take_str()?;
                Ok(Packet::Connect {
                    protocol_level,
                    clean_session: flags & 0x02 != 0,
                    keep_alive,
                    client_id,
                })
            }
            0x20 => Ok(Packet::Connack {
                session_present: cur.take_u8()? & 0x01 != 0,
                return_code: cur.take_u8()?,
            }),
            0x80 => {
                if first & 0x0f != 0x02 {
                    return Err(MqttError::Malformed("subscribe flags"));
                }
                let packet_id = cur.take_u16()?;
                let mut filters = Vec::new();
                while !cur.done() {
                    let topic = cur.take_str()?;
                    let qos = cur.take_u8()?;
                    filters.push((topic, qos));
                }
                if filters.is_empty() {
                    return Err(MqttError::Malformed("subscribe without filters"));
                }
                Ok(Packet::Subscribe { packet_id, filters })
            }
            0x90 => {
                let packet_id = cur.take_u16()?;
                Ok(Packet::Suback {
                    packet_id,
                    return_codes: cur.rest().to_vec(),
                })
            }
            0x30 => {
                let qos = (first >> 1) & 0x03;
                if qos != 0 {
                    return Err(MqttError::Unsupported(first));
                }
                let topic = cur.take_str()?;
                Ok(Packet::Publish {
                    topic,
                    payload: cur.rest().to_vec(),
                })
            }
            0xC0 => Ok(Packet::Pingreq),
            0xD0 => Ok(Packet::Pingresp),
            0xE0 => Ok(Packet::Disconnect),
            other => Err(MqttError::Unsupported(other)),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), MqttError> {
        w.write_all(&self.encode())?;
        Ok(())
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take_u8(&mut self) -> Result<u8, MqttError> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or(MqttError::Malformed("truncated"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take_u16(&mut self) -> Result<u16, MqttError> {
        let hi = self.take_u8()?;
        let lo = self.take_u8()?;
        Ok(u16::from_be_bytes([hi, lo]))
    }

    fn take_str(&mut self) -> Result<String, MqttError> {
        let len = self.take_u16()? as usize;
        let end = self.pos + len;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or(MqttError::Malformed("truncated string"))?;
        self.pos = end;
        String::from_utf8(bytes.to_vec()).map_err(|_| MqttError::Malformed("non-utf8 string"))
    }

    fn rest(&mut self) -> &'a [u8] {
        let r = &self.buf[self.pos..];
        self.pos = self.buf.len();
        r
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(p: Packet) {
        let bytes = p.encode();
        let mut cursor = io::Cursor::new(bytes);
        assert_eq!(Packet::read_from(&mut cursor).unwrap(), p);
    }

    #[test]
    fn connect_round_trip() {
        round_trip(Packet::Connect {
            protocol_level: 4,
            clean_session: true,
            keep_alive: 0,
            client_id: "edge-1".into(),
        });
    }

    #[test]
    fn publish_wire_format() {
        let p = Packet::Publish {
            topic: "t".into(),
            payload: vec![1, 2, 3],
        };
        // 0x30, remaining 6, topic len 0x0001, 't', payload
        assert_eq!(p.encode(), vec![0x30, 6, 0, 1, b't', 1, 2, 3]);
        round_trip(p);
    }

    #[test]
    fn remaining_length_varint_boundaries() {
        // payloads that push the remaining length across the 127 and 16383
        // one-byte/two-byte boundaries
        for payload_len in [120usize, 128, 16380, 16390] {
            round_trip(Packet::Publish {
                topic: "topic".into(),
                payload: vec![0xab; payload_len],
            });
        }
        let mut out = vec![];
        encode_remaining_length(127, &mut out);
        assert_eq!(out, vec![0x7f]);
        out.clear();
        encode_remaining_length(128, &mut out);
        assert_eq!(out, vec![0x80, 0x01]);
        out.clear();
        encode_remaining_length(16383, &mut out);
        assert_eq!(out, vec![0xff, 0x7f]);
        out.clear();
        encode_remaining_length(16384, &mut out);
        assert_eq!(out, vec![0x80, 0x80, 0x01]);
    }

    #[test]
    fn subscribe_and_control_packets() {
        round_trip(Packet::Subscribe {
            packet_id: 7,
            filters: vec![("sensors/up".into(), 0)],
        });
        round_trip(Packet::Suback {
            packet_id: 7,
            return_codes: vec![0],
        });
        round_trip(Packet::Pingreq);
        round_trip(Packet::Pingresp);
        round_trip(Packet::Disconnect);
        round_trip(Packet::Connack {
            session_present: false,
            return_code: 0,
        });
    }

    #[test]
    fn qos1_publish_is_rejected() {
        let mut bytes = Packet::Publish {
            topic: "t".into(),
            payload: vec![],
        }
        .encode();
        bytes[0] = 0x32; // QoS 1
        let mut cursor = io::Cursor::new(bytes);
        assert!(matches!(
            Packet::read_from(&mut cursor),
            Err(MqttError::Unsupported(_))
        ));
    }
}
