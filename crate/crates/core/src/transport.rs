//! Framed, ordered, reliable classical channel between the two parties.
//!
//! Wire format: a 32-bit big-endian length (counting the tag byte), one
//! tag byte, then the payload. The framing layer accepts any tag;
//! unknown tags are the session layer's problem. An in-process loopback
//! serves tests and `--role both` runs, a TCP stream serves two-process
//! runs. Neither adds encryption or authentication: the protocols assume
//! an authenticated classical channel as an operational requirement.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use thiserror::Error;

pub const PROTOCOL_VERSION: u8 = 1;
pub const MAX_FRAME_BYTES: u32 = 1 << 30;

/// Frame type tags used across the stack.
pub mod tags {
    pub const HANDSHAKE: u8 = 0x01;

    pub const CTRL_START: u8 = 0x10;
    pub const CTRL_STOP: u8 = 0x11;
    pub const CTRL_DRAIN: u8 = 0x12;
    pub const CTRL_ACK: u8 = 0x13;

    pub const QKD_RECEIVED: u8 = 0x20;
    pub const QKD_BASES: u8 = 0x21;
    pub const QKD_SIFT_SET: u8 = 0x22;
    pub const QKD_SAMPLE_SET: u8 = 0x23;
    pub const QKD_SAMPLE_BITS: u8 = 0x24;
    pub const QKD_SYNDROME: u8 = 0x25;
    pub const QKD_CHECK: u8 = 0x26;
    pub const QKD_PA_SEED: u8 = 0x27;
    pub const QKD_STATUS: u8 = 0x2D;
    pub const QKD_ABORT: u8 = 0x2E;

    pub const OT_COMMITMENTS: u8 = 0x30;
    pub const OT_TEST_SET: u8 = 0x31;
    pub const OT_OPENINGS: u8 = 0x32;
    pub const OT_BASES: u8 = 0x33;
    pub const OT_PARTITION: u8 = 0x34;
    pub const OT_PAYLOAD: u8 = 0x35;
    pub const OT_ABORT: u8 = 0x36;
    pub const OT_RECEIVED: u8 = 0x37;
    pub const OT_STATUS: u8 = 0x38;

    pub const TOKEN_RECEIVED: u8 = 0x40;
    pub const TOKEN_MASKED_BASES: u8 = 0x41;
    pub const TOKEN_CHOICE: u8 = 0x42;
    pub const TOKEN_PRESENT: u8 = 0x43;
    pub const TOKEN_VERDICT: u8 = 0x44;
    pub const TOKEN_ABORT: u8 = 0x45;
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("channel closed")]
    Closed,
    #[error("connection refused: {0}")]
    Refused(String),
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    VersionMismatch { ours: u8, theirs: u8 },
    #[error("frame of {0} bytes exceeds the 2^30 limit")]
    Oversized(u64),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == ErrorKind::UnexpectedEof {
            TransportError::Closed
        } else {
            TransportError::Io(e.to_string())
        }
    }
}

/// One framed message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(tag: u8, payload: Vec<u8>) -> Self {
        Self { tag, payload }
    }

    pub fn encode(&self) -> Result<Vec<u8>, TransportError> {
        let length = self.payload.len() as u64 + 1;
        if length > MAX_FRAME_BYTES as u64 {
            return Err(TransportError::Oversized(length));
        }
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(length as u32).to_be_bytes());
        out.push(self.tag);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Reads one frame from a byte stream, blocking until complete.
    pub fn read_from(reader: &mut impl Read) -> Result<Self, TransportError> {
        let mut header = [0u8; 4];
        reader.read_exact(&mut header)?;
        let length = u32::from_be_bytes(header);
        if length == 0 {
            return Err(TransportError::Malformed("zero length".into()));
        }
        if length > MAX_FRAME_BYTES {
            return Err(TransportError::Oversized(length as u64));
        }
        let mut tag = [0u8; 1];
        reader.read_exact(&mut tag)?;
        let mut payload = vec![0u8; length as usize - 1];
        reader.read_exact(&mut payload)?;
        Ok(Self {
            tag: tag[0],
            payload,
        })
    }
}

/// Bidirectional ordered frame channel.
pub trait Channel: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError>;
    /// Blocks until a full frame arrives or the channel closes.
    fn recv(&mut self) -> Result<Frame, TransportError>;
    /// Returns a frame if one is already available, without blocking
    /// longer than a poll interval.
    fn try_recv(&mut self) -> Result<Option<Frame>, TransportError>;
    /// Pushes a frame back so the next receive returns it first. Used by
    /// pollers that must leave frames meant for another layer untouched.
    fn unrecv(&mut self, frame: Frame);
}

fn exchange_versions(chan: &mut dyn Channel) -> Result<(), TransportError> {
    chan.send(&Frame::new(tags::HANDSHAKE, vec![PROTOCOL_VERSION]))?;
    let reply = chan.recv()?;
    if reply.tag != tags::HANDSHAKE || reply.payload.len() != 1 {
        return Err(TransportError::Malformed("bad handshake frame".into()));
    }
    let theirs = reply.payload[0];
    if theirs != PROTOCOL_VERSION {
        return Err(TransportError::VersionMismatch {
            ours: PROTOCOL_VERSION,
            theirs,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------
// in-process loopback
// ---------------------------------------------------------------------

/// In-process channel end backed by paired queues. Frames round-trip
/// through their byte encoding so the framing path is exercised.
pub struct LoopbackChannel {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
    pushback: Vec<Frame>,
}

impl LoopbackChannel {
    fn decode(bytes: Vec<u8>) -> Result<Frame, TransportError> {
        let mut cursor = std::io::Cursor::new(bytes);
        Frame::read_from(&mut cursor)
    }
}

impl Channel for LoopbackChannel {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        self.tx
            .send(frame.encode()?)
            .map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        if let Some(frame) = self.pushback.pop() {
            return Ok(frame);
        }
        let bytes = self.rx.recv().map_err(|_| TransportError::Closed)?;
        Self::decode(bytes)
    }

    fn try_recv(&mut self) -> Result<Option<Frame>, TransportError> {
        if let Some(frame) = self.pushback.pop() {
            return Ok(Some(frame));
        }
        match self.rx.try_recv() {
            Ok(bytes) => Ok(Some(Self::decode(bytes)?)),
            Err(mpsc::TryRecvError::Empty) => Ok(None),
            Err(mpsc::TryRecvError::Disconnected) => Err(TransportError::Closed),
        }
    }

    fn unrecv(&mut self, frame: Frame) {
        self.pushback.push(frame);
    }
}

/// Connected pair of loopback ends with the version handshake already
/// exchanged. Both sends happen before either receive, since the pair
/// lives on one thread.
pub fn loopback_pair() -> (LoopbackChannel, LoopbackChannel) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    let mut a = LoopbackChannel {
        tx: tx_ab,
        rx: rx_ba,
        pushback: Vec::new(),
    };
    let mut b = LoopbackChannel {
        tx: tx_ba,
        rx: rx_ab,
        pushback: Vec::new(),
    };
    let hello = Frame::new(tags::HANDSHAKE, vec![PROTOCOL_VERSION]);
    a.send(&hello).expect("loopback handshake");
    b.send(&hello).expect("loopback handshake");
    for end in [&mut a, &mut b] {
        let reply = end.recv().expect("loopback handshake");
        assert_eq!(reply, hello);
    }
    (a, b)
}

// ---------------------------------------------------------------------
// stream sockets
// ---------------------------------------------------------------------

const POLL_INTERVAL: Duration = Duration::from_millis(20);

/// TCP-backed channel end with an internal reassembly buffer, so torn
/// reads never surface partial frames.
pub struct TcpChannel {
    stream: TcpStream,
    buf: Vec<u8>,
    pushback: Vec<Frame>,
}

impl TcpChannel {
    fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true).ok();
        stream.set_read_timeout(Some(POLL_INTERVAL))?;
        Ok(Self {
            stream,
            buf: Vec::new(),
            pushback: Vec::new(),
        })
    }

    /// Extracts one complete frame from the reassembly buffer.
    fn buffered_frame(&mut self) -> Result<Option<Frame>, TransportError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let length = u32::from_be_bytes(self.buf[..4].try_into().unwrap());
        if length == 0 {
            return Err(TransportError::Malformed("zero length".into()));
        }
        if length > MAX_FRAME_BYTES {
            return Err(TransportError::Oversized(length as u64));
        }
        let total = 4 + length as usize;
        if self.buf.len() < total {
            return Ok(None);
        }
        let frame = Frame {
            tag: self.buf[4],
            payload: self.buf[5..total].to_vec(),
        };
        self.buf.drain(..total);
        Ok(Some(frame))
    }

    /// Pulls whatever bytes are available within one poll interval.
    /// Returns false when the peer has closed.
    fn fill(&mut self) -> Result<bool, TransportError> {
        let mut chunk = [0u8; 64 * 1024];
        match self.stream.read(&mut chunk) {
            Ok(0) => Ok(false),
            Ok(n) => {
                self.buf.extend_from_slice(&chunk[..n]);
                Ok(true)
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                Ok(true)
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &Frame) -> Result<(), TransportError> {
        let bytes = frame.encode()?;
        self.stream.write_all(&bytes)?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        if let Some(frame) = self.pushback.pop() {
            return Ok(frame);
        }
        loop {
            if let Some(frame) = self.buffered_frame()? {
                return Ok(frame);
            }
            if !self.fill()? {
                return Err(TransportError::Closed);
            }
        }
    }

    fn try_recv(&mut self) -> Result<Option<Frame>, TransportError> {
        if let Some(frame) = self.pushback.pop() {
            return Ok(Some(frame));
        }
        if let Some(frame) = self.buffered_frame()? {
            return Ok(Some(frame));
        }
        if !self.fill()? {
            return Err(TransportError::Closed);
        }
        self.buffered_frame()
    }

    fn unrecv(&mut self, frame: Frame) {
        self.pushback.push(frame);
    }
}

/// Connects to a listening peer and performs the version handshake.
pub fn connect(addr: impl ToSocketAddrs) -> Result<TcpChannel, TransportError> {
    let stream = TcpStream::connect(addr).map_err(|e| TransportError::Refused(e.to_string()))?;
    let mut chan = TcpChannel::new(stream)?;
    exchange_versions(&mut chan)?;
    Ok(chan)
}

/// Accepts one connection on the given address and performs the version
/// handshake.
pub fn accept_once(addr: impl ToSocketAddrs) -> Result<TcpChannel, TransportError> {
    let listener = TcpListener::bind(addr).map_err(|e| TransportError::Refused(e.to_string()))?;
    let (stream, _) = listener.accept()?;
    let mut chan = TcpChannel::new(stream)?;
    exchange_versions(&mut chan)?;
    Ok(chan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_encoding_is_self_delimiting() {
        let a = Frame::new(0x20, vec![1, 2, 3]);
        let b = Frame::new(0x30, vec![]);
        let mut bytes = a.encode().unwrap();
        bytes.extend(b.encode().unwrap());
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), a);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), b);
        assert!(matches!(
            Frame::read_from(&mut cursor),
            Err(TransportError::Closed)
        ));
    }

    #[test]
    fn empty_payload_round_trips() {
        let f = Frame::new(0x11, vec![]);
        let bytes = f.encode().unwrap();
        assert_eq!(bytes.len(), 5);
        assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()), 1);
        let mut cursor = std::io::Cursor::new(bytes);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), f);
    }

    #[test]
    fn oversized_frames_rejected() {
        let f = Frame {
            tag: 0,
            payload: Vec::new(),
        };
        assert!(f.encode().is_ok());
        // forged header claiming an oversized length
        let mut bytes = ((MAX_FRAME_BYTES as u64 + 1) as u32).to_be_bytes().to_vec();
        bytes.push(0);
        let mut cursor = std::io::Cursor::new(bytes);
        assert!(matches!(
            Frame::read_from(&mut cursor),
            Err(TransportError::Oversized(_))
        ));
    }

    #[test]
    fn torn_frame_reports_closed() {
        let f = Frame::new(0x42, vec![9; 100]);
        let bytes = f.encode().unwrap();
        let mut cursor = std::io::Cursor::new(&bytes[..50]);
        assert!(matches!(
            Frame::read_from(&mut cursor),
            Err(TransportError::Closed)
        ));
    }

    #[test]
    fn loopback_round_trip_in_order() {
        let (mut a, mut b) = loopback_pair();
        for i in 0..100u8 {
            a.send(&Frame::new(0x20, vec![i; (i as usize) % 17])).unwrap();
        }
        for i in 0..100u8 {
            let f = b.recv().unwrap();
            assert_eq!(f.payload, vec![i; (i as usize) % 17]);
        }
        assert!(b.try_recv().unwrap().is_none());
    }

    #[test]
    fn loopback_closed_when_peer_dropped() {
        let (mut a, b) = loopback_pair();
        drop(b);
        assert!(matches!(
            a.send(&Frame::new(0, vec![])),
            Err(TransportError::Closed)
        ));
    }

    #[test]
    fn tcp_round_trip_fuzz() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let echo = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut chan = TcpChannel::new(stream).unwrap();
            exchange_versions(&mut chan).unwrap();
            loop {
                match chan.recv() {
                    Ok(f) => chan.send(&f).unwrap(),
                    Err(TransportError::Closed) => break,
                    Err(e) => panic!("echo error: {e}"),
                }
            }
        });

        let mut chan = connect(addr).unwrap();
        use rand_chacha::ChaCha8Rng;
        use rand_core::{RngCore, SeedableRng};
        let mut rng = ChaCha8Rng::from_seed([3u8; 32]);
        // batched so neither side's socket buffer fills while the other
        // waits to write
        for _ in 0..100 {
            let mut sent = Vec::new();
            for _ in 0..100 {
                let len = (rng.next_u32() % 200) as usize;
                let mut payload = vec![0u8; len];
                rng.fill_bytes(&mut payload);
                let f = Frame::new((rng.next_u32() % 256) as u8, payload);
                chan.send(&f).unwrap();
                sent.push(f);
            }
            for f in &sent {
                assert_eq!(&chan.recv().unwrap(), f);
            }
        }
        drop(chan);
        echo.join().unwrap();
    }

    #[test]
    fn version_mismatch_detected_deterministically() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let peer = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut chan = TcpChannel::new(stream).unwrap();
            // speak a future protocol version
            chan.send(&Frame::new(tags::HANDSHAKE, vec![PROTOCOL_VERSION + 1]))
                .unwrap();
            let reply = chan.recv().unwrap();
            assert_eq!(reply.tag, tags::HANDSHAKE);
            // the sane peer's version differs from ours
            reply.payload[0] != PROTOCOL_VERSION + 1
        });
        match connect(addr) {
            Err(TransportError::VersionMismatch { ours, theirs }) => {
                assert_eq!(ours, PROTOCOL_VERSION);
                assert_eq!(theirs, PROTOCOL_VERSION + 1);
            }
            Err(e) => panic!("expected version mismatch, got {e}"),
            Ok(_) => panic!("handshake unexpectedly succeeded"),
        }
        assert!(peer.join().unwrap());
    }
}
