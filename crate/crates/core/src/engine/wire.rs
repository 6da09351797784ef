//! Framed little-endian messages between the driver and its workers.
//!
//! ```text
//! frame   = version:u8 kind:u8 worker_id:u32 body
//! tensors = count:u32 { len:u32 f64 * len }
//! blob    = len:u32 bytes
//! ```
//!
//! Kinds `Params`, `Gradients` and `Averaged` carry tensors, `Shutdown`
//! carries nothing, every other kind carries a JSON blob.

use std::io::{self, Read, Write};

pub const WIRE_VERSION: u8 = 1;

/// Upper bound on a single length field, to reject corrupt streams early.
const MAX_LEN: u32 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Init = 1,
    Params = 2,
    Ready = 3,
    Start = 4,
    Gradients = 5,
    Averaged = 6,
    Done = 7,
    Failure = 8,
    Shutdown = 9,
}

impl FrameKind {
    fn from_u8(b: u8) -> Option<Self> {
        use FrameKind::*;
        Some(match b {
            1 => Init,
            2 => Params,
            3 => Ready,
            4 => Start,
            5 => Gradients,
            6 => Averaged,
            7 => Done,
            8 => Failure,
            9 => Shutdown,
            _ => return None,
        })
    }

    fn carries_tensors(self) -> bool {
        matches!(self, FrameKind::Params | FrameKind::Gradients | FrameKind::Averaged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Empty,
    Tensors(Vec<Vec<f64>>),
    Blob(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub worker: u32,
    pub body: Body,
}

impl Frame {
    pub fn tensors(kind: FrameKind, worker: u32, tensors: Vec<Vec<f64>>) -> Self {
        Self {
            kind,
            worker,
            body: Body::Tensors(tensors),
        }
    }

    pub fn json<T: serde::Serialize>(kind: FrameKind, worker: u32, value: &T) -> Self {
        Self {
            kind,
            worker,
            body: Body::Blob(serde_json::to_vec(value).expect("serializable message")),
        }
    }

    pub fn empty(kind: FrameKind, worker: u32) -> Self {
        Self {
            kind,
            worker,
            body: Body::Empty,
        }
    }

    pub fn into_tensors(self) -> io::Result<Vec<Vec<f64>>> {
        match self.body {
            Body::Tensors(t) => Ok(t),
            _ => Err(invalid(format!("{:?} frame has no tensors", self.kind))),
        }
    }

    pub fn parse_json<T: serde::de::DeserializeOwned>(&self) -> io::Result<T> {
        match &self.body {
            Body::Blob(b) => serde_json::from_slice(b).map_err(|e| invalid(e.to_string())),
            _ => Err(invalid(format!("{:?} frame has no blob", self.kind))),
        }
    }
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn encode(frame: &Frame, out: &mut Vec<u8>) {
    out.push(WIRE_VERSION);
    out.push(frame.kind as u8);
    out.extend_from_slice(&frame.worker.to_le_bytes());
    match &frame.body {
        Body::Empty => {}
        Body::Tensors(ts) => {
            out.extend_from_slice(&(ts.len() as u32).to_le_bytes());
            for t in ts {
                out.extend_from_slice(&(t.len() as u32).to_le_bytes());
                for v in t {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Body::Blob(b) => {
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(b);
        }
    }
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> io::Result<()> {
    let mut buf = Vec::new();
    encode(frame, &mut buf);
    w.write_all(&buf)?;
    w.flush()
}

fn read_u32<R: Read + ?Sized>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_len<R: Read + ?Sized>(r: &mut R) -> io::Result<usize> {
    let n = read_u32(r)?;
    if n > MAX_LEN {
        return Err(invalid(format!("length {n} exceeds limit")));
    }
    Ok(n as usize)
}

/// Read one frame; `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> io::Result<Option<Frame>> {
    let mut head = [0u8; 6];
    match r.read(&mut head[..1])? {
        0 => return Ok(None),
        _ => r.read_exact(&mut head[1..])?,
    }
    if head[0] != WIRE_VERSION {
        return Err(invalid(format!("wire version {} (expected {WIRE_VERSION})", head[0])));
    }
    let kind = FrameKind::from_u8(head[1]).ok_or_else(|| invalid(format!("unknown frame kind {}", head[1])))?;
    let worker = u32::from_le_bytes(head[2..6].try_into().unwrap());
    let body = if kind == FrameKind::Shutdown {
        Body::Empty
    } else if kind.carries_tensors() {
        let count = read_len(r)?;
        let mut ts = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = read_len(r)?;
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            ts.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        Body::Tensors(ts)
    } else {
        let len = read_len(r)?;
        let mut b = vec![0u8; len];
        r.read_exact(&mut b)?;
        Body::Blob(b)
    };
    Ok(Some(Frame { kind, worker, body }))
}
