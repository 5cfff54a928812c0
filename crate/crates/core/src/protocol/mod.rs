//! Newline-delimited ASCII protocol between clients and a tissue server.
//!
//! ```text
//! HELLO <antigen|signal|response> 1
//! ANTIGEN <uint>
//! SIGNAL <uint> <decimal>
//! RESPONSE <uint> <uint_us>
//! BYE
//! ```
//!
//! The first message on every connection is `HELLO`. Antigen and signal
//! clients then stream events; response clients receive one `RESPONSE` per
//! response record produced after they connected.

mod client;
mod loopback;
mod server;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::AntigenValue;

pub use client::{Client, ResponseListener};
pub use loopback::{pipe, LoopbackReader, LoopbackStream, LoopbackWriter};
pub use server::{
    serve_clients, ClientEvent, Endpoint, Listeners, QueueItem, ResponseHub, ServerHandle,
    DEFAULT_QUEUE_CAPACITY, MAX_CONSECUTIVE_ERRORS,
};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClientKind {
    Antigen,
    Signal,
    Response,
}

impl ClientKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClientKind::Antigen => "antigen",
            ClientKind::Signal => "signal",
            ClientKind::Response => "response",
        }
    }
}

impl FromStr for ClientKind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "antigen" => Ok(ClientKind::Antigen),
            "signal" => Ok(ClientKind::Signal),
            "response" => Ok(ClientKind::Response),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WireMessage {
    Hello { kind: ClientKind, version: u32 },
    Antigen(AntigenValue),
    Signal { id: u32, level: f64 },
    Response { antigen: AntigenValue, t_us: u64 },
    Bye,
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireMessage::Hello { kind, version } => write!(f, "HELLO {} {version}", kind.as_str()),
            WireMessage::Antigen(v) => write!(f, "ANTIGEN {v}"),
            WireMessage::Signal { id, level } => write!(f, "SIGNAL {id} {level}"),
            WireMessage::Response { antigen, t_us } => write!(f, "RESPONSE {antigen} {t_us}"),
            WireMessage::Bye => f.write_str("BYE"),
        }
    }
}

/// Encodes one message as a newline-terminated line.
pub fn encode(msg: &WireMessage) -> String {
    format!("{msg}\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeFault {
    NotUtf8,
    Empty,
    UnknownKind,
    Arity,
    BadInteger,
    BadLevel,
    BadClientKind,
}

impl fmt::Display for DecodeFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeFault::NotUtf8 => "line is not valid text",
            DecodeFault::Empty => "empty line",
            DecodeFault::UnknownKind => "unknown message kind",
            DecodeFault::Arity => "wrong number of fields",
            DecodeFault::BadInteger => "malformed unsigned integer",
            DecodeFault::BadLevel => "malformed signal level",
            DecodeFault::BadClientKind => "unknown client kind",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol error ({fault}) in {:?}", String::from_utf8_lossy(.line))]
pub struct ProtocolError {
    pub fault: DecodeFault,
    pub line: Vec<u8>,
}

fn parse_uint<T: FromStr>(tok: &str) -> Result<T, DecodeFault> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DecodeFault::BadInteger);
    }
    tok.parse().map_err(|_| DecodeFault::BadInteger)
}

fn parse_level(tok: &str) -> Result<f64, DecodeFault> {
    let first = tok.bytes().next().ok_or(DecodeFault::BadLevel)?;
    if !(first.is_ascii_digit() || first == b'.') {
        return Err(DecodeFault::BadLevel);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(DecodeFault::BadLevel),
    }
}

/// Decodes one line. A trailing `\n` or `\r\n` is accepted; fields are
/// separated by exactly one space.
pub fn decode(line: &[u8]) -> Result<WireMessage, ProtocolError> {
    decode_inner(line).map_err(|fault| ProtocolError {
        fault,
        line: line.to_vec(),
    })
}

fn decode_inner(line: &[u8]) -> Result<WireMessage, DecodeFault> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let text = std::str::from_utf8(line).map_err(|_| DecodeFault::NotUtf8)?;
    if text.is_empty() {
        return Err(DecodeFault::Empty);
    }
    let fields: Vec<&str> = text.split(' ').collect();
    let want = |n: usize| {
        if fields.len() == n {
            Ok(())
        } else {
            Err(DecodeFault::Arity)
        }
    };
    match fields[0] {
        "HELLO" => {
            want(3)?;
            let kind = fields[1].parse().map_err(|_| DecodeFault::BadClientKind)?;
            Ok(WireMessage::Hello {
                kind,
                version: parse_uint(fields[2])?,
            })
        }
        "ANTIGEN" => {
            want(2)?;
            Ok(WireMessage::Antigen(AntigenValue(parse_uint(fields[1])?)))
        }
        "SIGNAL" => {
            want(3)?;
            Ok(WireMessage::Signal {
                id: parse_uint(fields[1])?,
                level: parse_level(fields[2])?,
            })
        }
        "RESPONSE" => {
            want(3)?;
            Ok(WireMessage::Response {
                antigen: AntigenValue(parse_uint(fields[1])?),
                t_us: parse_uint(fields[2])?,
            })
        }
        "BYE" => {
            want(1)?;
            Ok(WireMessage::Bye)
        }
        _ => Err(DecodeFault::UnknownKind),
    }
}
