//! Hello and TC message codecs for the link-quality OLSR daemon layout and the
//! position-carrying variant.
//!
//! ```text
//! Hello, original (8-byte header)          Hello, modified (16-byte header)
//!  0      1      2      3                   0      1      2      3
//! +------+------+------+------+            +------+------+------+------+
//! | type | rsvd | htime| will |            | type | rsvd | htime| will |
//! +------+------+------+------+            +------+------+------+------+
//! |     seq     |    rsvd     |            |     seq     |  altitude   |
//! +------+------+------+------+            +------+------+------+------+
//!                                          |        latitude (f32)     |
//!                                          +------+------+------+------+
//!                                          |       longitude (f32)     |
//!                                          +------+------+------+------+
//! neighbour block (both variants)
//! +------+------+------+------+
//! |          address          |
//! +------+------+------+------+
//! |  lq  |  nlq | speed / rsvd|
//! +------+------+------+------+
//!
//! TC (both variants): 4-byte header [ansn:2][rsvd:2], then neighbour blocks.
//! ```
//!
//! Multi-byte fields are big-endian. Speeds are signed Q8.8 m/s, altitude is a
//! signed 16-bit integer in metres, ratios are `byte / 255`.
//!
//! The originator address is not part of these bodies; it travels in the
//! enclosing packet envelope and is passed to the decoders.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPosition;

/// Message type byte of a link-quality Hello.
pub const LQ_HELLO_TYPE: u8 = 201;

pub const HELLO_ORIGINAL_HEADER: usize = 8;
pub const HELLO_MODIFIED_HEADER: usize = 16;
pub const TC_HEADER: usize = 4;
pub const BLOCK_LEN: usize = 8;

/// 32-bit node address (an IPv4 address in a real deployment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeAddr(pub u32);

impl fmt::Display for NodeAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0.to_be_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

/// Which message layout is on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Modified,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("buffer too short: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("body length {body} is not a multiple of {BLOCK_LEN}")]
    Misaligned { body: usize },
    #[error("unexpected message type {0}")]
    MessageType(u8),
    #[error("ratio {0} outside [0, 1]")]
    Ratio(f64),
    #[error("altitude {0} m does not fit a signed 16-bit integer")]
    Altitude(f64),
    #[error("speed {0} m/s does not fit signed Q8.8")]
    Speed(f64),
    #[error("modified hello requires a position")]
    MissingPosition,
    #[error("original hello cannot carry a position")]
    UnexpectedPosition,
}

/// Ratio in [0, 1] to a byte, `round(r * 255)`.
pub fn quantize_ratio(r: f64) -> Result<u8, WireError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(WireError::Ratio(r));
    }
    Ok((r * 255.0).round() as u8)
}

pub fn dequantize_ratio(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Signed Q8.8 fixed point, `round(v * 256)`.
pub fn quantize_speed(v: f64) -> Result<i16, WireError> {
    let raw = (v * 256.0).round();
    if !raw.is_finite() || raw < f64::from(i16::MIN) || raw > f64::from(i16::MAX) {
        return Err(WireError::Speed(v));
    }
    Ok(raw as i16)
}

pub fn dequantize_speed(raw: i16) -> f64 {
    f64::from(raw) / 256.0
}

/// Speed clamped into the Q8.8 range before quantisation.
pub fn quantize_speed_saturating(v: f64) -> i16 {
    if v.is_nan() {
        return 0;
    }
    (v * 256.0).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

pub fn quantize_altitude(alt: f64) -> Result<i16, WireError> {
    let raw = alt.round();
    if !raw.is_finite() || raw < f64::from(i16::MIN) || raw > f64::from(i16::MAX) {
        return Err(WireError::Altitude(alt));
    }
    Ok(raw as i16)
}

/// OLSR mantissa/exponent time code: `C * (1 + a/16) * 2^b` with `C = 1/16 s`.
pub fn encode_vtime(seconds: f64) -> u8 {
    const C: f64 = 1.0 / 16.0;
    let mut best = (0u8, f64::INFINITY);
    for b in 0u8..16 {
        for a in 0u8..16 {
            let v = C * (1.0 + f64::from(a) / 16.0) * f64::from(1u32 << b);
            let err = (v - seconds).abs();
            if err < best.1 {
                best = ((a << 4) | b, err);
            }
        }
    }
    best.0
}

pub fn decode_vtime(code: u8) -> f64 {
    let a = f64::from(code >> 4);
    let b = i32::from(code & 0x0f);
    (1.0 / 16.0) * (1.0 + a / 16.0) * 2f64.powi(b)
}

/// One advertised link, as carried in both Hello and TC bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborBlock {
    pub addr: NodeAddr,
    /// The sender's receive ratio of this neighbour's Hellos.
    pub lq: u8,
    /// The ratio this neighbour reported back to the sender.
    pub nlq: u8,
    /// Averaged relative speed, Q8.8 m/s. Always zero in the original layout.
    pub speed: i16,
}

impl NeighborBlock {
    pub fn speed_mps(&self) -> f64 {
        dequantize_speed(self.speed)
    }

    fn write(&self, variant: Variant, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.addr.0.to_be_bytes());
        out.push(self.lq);
        out.push(self.nlq);
        match variant {
            Variant::Original => out.extend_from_slice(&[0, 0]),
            Variant::Modified => out.extend_from_slice(&self.speed.to_be_bytes()),
        }
    }

    fn read(chunk: &[u8], variant: Variant) -> Self {
        let addr = NodeAddr(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        let speed = match variant {
            Variant::Original => 0,
            Variant::Modified => i16::from_be_bytes([chunk[6], chunk[7]]),
        };
        NeighborBlock { addr, lq: chunk[4], nlq: chunk[5], speed }
    }
}

pub type HelloNeighborBlock = NeighborBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloMessage {
    pub variant: Variant,
    pub originator: NodeAddr,
    pub seq: u16,
    pub htime: u8,
    pub willingness: u8,
    pub position: Option<GeoPosition>,
    pub neighbors: Vec<NeighborBlock>,
}

impl HelloMessage {
    pub fn encoded_len(&self) -> usize {
        header_len(self.variant) + BLOCK_LEN * self.neighbors.len()
    }

    /// The block this Hello carries for `addr`, if any.
    pub fn block_for(&self, addr: NodeAddr) -> Option<&NeighborBlock> {
        self.neighbors.iter().find(|b| b.addr == addr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcMessage {
    pub variant: Variant,
    pub originator: NodeAddr,
    pub ansn: u16,
    pub advertised: Vec<NeighborBlock>,
}

impl TcMessage {
    pub fn encoded_len(&self) -> usize {
        TC_HEADER + BLOCK_LEN * self.advertised.len()
    }
}

fn header_len(variant: Variant) -> usize {
    match variant {
        Variant::Original => HELLO_ORIGINAL_HEADER,
        Variant::Modified => HELLO_MODIFIED_HEADER,
    }
}

pub fn encode_hello(m: &HelloMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(m.encoded_len());
    out.extend_from_slice(&[LQ_HELLO_TYPE, 0, m.htime, m.willingness]);
    out.extend_from_slice(&m.seq.to_be_bytes());
    match (m.variant, &m.position) {
        (Variant::Original, None) => out.extend_from_slice(&[0, 0]),
        (Variant::Original, Some(_)) => return Err(WireError::UnexpectedPosition),
        (Variant::Modified, None) => return Err(WireError::MissingPosition),
        (Variant::Modified, Some(p)) => {
            out.extend_from_slice(&quantize_altitude(p.alt)?.to_be_bytes());
            out.extend_from_slice(&(p.lat as f32).to_be_bytes());
            out.extend_from_slice(&(p.lon as f32).to_be_bytes());
        }
    }
    for block in &m.neighbors {
        block.write(m.variant, &mut out);
    }
    Ok(out)
}

pub fn decode_hello(buf: &[u8], variant: Variant, originator: NodeAddr) -> Result<HelloMessage, WireError> {
    let header = header_len(variant);
    let blocks = split_blocks(buf, header)?;
    if buf[0] != LQ_HELLO_TYPE {
        return Err(WireError::MessageType(buf[0]));
    }
    let seq = u16::from_be_bytes([buf[4], buf[5]]);
    let position = match variant {
        Variant::Original => None,
        Variant::Modified => {
            let alt = i16::from_be_bytes([buf[6], buf[7]]);
            let lat = f32::from_be_bytes([buf[8], buf[9], buf[10], buf[11]]);
            let lon = f32::from_be_bytes([buf[12], buf[13], buf[14], buf[15]]);
            Some(GeoPosition { lat: f64::from(lat), lon: f64::from(lon), alt: f64::from(alt) })
        }
    };
    Ok(HelloMessage {
        variant,
        originator,
        seq,
        htime: buf[2],
        willingness: buf[3],
        position,
        neighbors: blocks.map(|c| NeighborBlock::read(c, variant)).collect(),
    })
}

pub fn encode_tc(m: &TcMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(m.encoded_len());
    out.extend_from_slice(&m.ansn.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    for block in &m.advertised {
        block.write(m.variant, &mut out);
    }
    Ok(out)
}

pub fn decode_tc(buf: &[u8], variant: Variant, originator: NodeAddr) -> Result<TcMessage, WireError> {
    let blocks = split_blocks(buf, TC_HEADER)?;
    Ok(TcMessage {
        variant,
        originator,
        ansn: u16::from_be_bytes([buf[0], buf[1]]),
        advertised: blocks.map(|c| NeighborBlock::read(c, variant)).collect(),
    })
}

fn split_blocks(buf: &[u8], header: usize) -> Result<std::slice::ChunksExact<'_, u8>, WireError> {
    if buf.len() < header {
        return Err(WireError::Truncated { needed: header, got: buf.len() });
    }
    let body = buf.len() - header;
    if !body.is_multiple_of(BLOCK_LEN) {
        return Err(WireError::Misaligned { body });
    }
    Ok(buf[header..].chunks_exact(BLOCK_LEN))
}
