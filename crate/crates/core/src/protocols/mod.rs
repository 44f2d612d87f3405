//! Executable two-party protocol state machines.
//!
//! Each protocol consumes an aligned record stream, exchanges framed
//! messages over the classical channel, and logs every message into a
//! transcript. Aborts are first-class outcomes: the aborting side sends
//! the protocol's abort frame with a reason code so the peer terminates
//! with the same verdict.

pub mod ot;
pub mod runner;
pub mod qkd;
pub mod token;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::BoundsError;
use crate::crypto::CryptoError;
use crate::ecc::EccError;
use crate::gc::StreamError;
use crate::transport::{Channel, Frame, TransportError};

/// Reasons a protocol run terminates without output.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbortReason {
    #[error("qber estimate above tolerance")]
    QberTooHigh,
    #[error("commitment check failed")]
    CommitCheck,
    #[error("undersized basis partition")]
    UndersizedPartition,
    #[error("syndrome decoding failed")]
    DecodeFailure,
    #[error("correctness hash mismatch")]
    HashMismatch,
    #[error("detection shortfall in block {0}")]
    DetectionShortfall(u32),
    #[error("token already presented")]
    DoublePresentation,
    #[error("no extractable key at these parameters")]
    NoExtractableKey,
}

impl AbortReason {
    fn code(&self) -> u8 {
        match self {
            AbortReason::QberTooHigh => 1,
            AbortReason::CommitCheck => 2,
            AbortReason::UndersizedPartition => 3,
            AbortReason::DecodeFailure => 4,
            AbortReason::HashMismatch => 5,
            AbortReason::DetectionShortfall(_) => 6,
            AbortReason::DoublePresentation => 7,
            AbortReason::NoExtractableKey => 8,
        }
    }

    fn from_code(code: u8, arg: u32) -> Option<Self> {
        Some(match code {
            1 => AbortReason::QberTooHigh,
            2 => AbortReason::CommitCheck,
            3 => AbortReason::UndersizedPartition,
            4 => AbortReason::DecodeFailure,
            5 => AbortReason::HashMismatch,
            6 => AbortReason::DetectionShortfall(arg),
            7 => AbortReason::DoublePresentation,
            8 => AbortReason::NoExtractableKey,
            _ => return None,
        })
    }

    /// Whether both parties should retry with fresh states.
    pub fn retryable(&self) -> bool {
        matches!(
            self,
            AbortReason::UndersizedPartition | AbortReason::DecodeFailure
        )
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("aborted: {0}")]
    Abort(AbortReason),
    #[error("peer aborted: {0}")]
    PeerAbort(AbortReason),
    #[error("unexpected frame tag 0x{got:02x}, expected 0x{want:02x}")]
    UnexpectedFrame { want: u8, got: u8 },
    #[error("malformed payload for tag 0x{0:02x}")]
    Malformed(u8),
    #[error("retries exhausted after {0} attempts")]
    RetriesExhausted(u32),
    #[error("phase ordering violated: {0}")]
    PhaseOrder(&'static str),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ecc(#[from] EccError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

impl ProtocolError {
    /// The abort reason, from either side's perspective.
    pub fn abort_reason(&self) -> Option<&AbortReason> {
        match self {
            ProtocolError::Abort(r) | ProtocolError::PeerAbort(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One logged message: direction, tag, and full payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub tag: u8,
    pub payload: Vec<u8>,
}

/// Digest over the ordered transcript, identical on byte-identical runs.
pub fn transcript_digest(entries: &[TranscriptEntry]) -> String {
    let mut hasher = Sha256::new();
    for e in entries {
        Digest::update(&mut hasher, [e.tag, matches!(e.direction, Direction::Sent) as u8]);
        Digest::update(&mut hasher, (e.payload.len() as u64).to_be_bytes());
        Digest::update(&mut hasher, &e.payload);
    }
    hex_string(&hasher.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Channel wrapper that logs traffic and converts incoming abort frames
/// into typed errors.
pub struct SessionChannel<'a> {
    chan: &'a mut dyn Channel,
    abort_tag: u8,
    pub transcript: Vec<TranscriptEntry>,
}

impl<'a> SessionChannel<'a> {
    pub fn new(chan: &'a mut dyn Channel, abort_tag: u8) -> Self {
        Self {
            chan,
            abort_tag,
            transcript: Vec::new(),
        }
    }

    pub fn inner(&mut self) -> &mut dyn Channel {
        self.chan
    }

    pub fn send(&mut self, tag: u8, payload: Vec<u8>) -> Result<(), ProtocolError> {
        self.chan.send(&Frame::new(tag, payload.clone()))?;
        self.transcript.push(TranscriptEntry {
            direction: Direction::Sent,
            tag,
            payload,
        });
        Ok(())
    }

    /// Receives the next frame, requiring the given tag. An abort frame
    /// is decoded into `PeerAbort` instead.
    pub fn recv_expect(&mut self, want: u8) -> Result<Vec<u8>, ProtocolError> {
        let frame = self.chan.recv()?;
        self.transcript.push(TranscriptEntry {
            direction: Direction::Received,
            tag: frame.tag,
            payload: frame.payload.clone(),
        });
        if frame.tag == self.abort_tag {
            let reason = decode_abort(&frame.payload)
                .ok_or(ProtocolError::Malformed(self.abort_tag))?;
            return Err(ProtocolError::PeerAbort(reason));
        }
        if frame.tag != want {
            return Err(ProtocolError::UnexpectedFrame {
                want,
                got: frame.tag,
            });
        }
        Ok(frame.payload)
    }

    /// Sends the abort frame and returns the local abort error.
    pub fn abort(&mut self, reason: AbortReason) -> ProtocolError {
        let arg = match &reason {
            AbortReason::DetectionShortfall(block) => *block,
            _ => 0,
        };
        let mut payload = vec![reason.code()];
        payload.extend_from_slice(&arg.to_be_bytes());
        // best effort: the peer may already be gone
        let _ = self.send(self.abort_tag, payload);
        ProtocolError::Abort(reason)
    }
}

fn decode_abort(payload: &[u8]) -> Option<AbortReason> {
    if payload.len() != 5 {
        return None;
    }
    let arg = u32::from_be_bytes(payload[1..5].try_into().ok()?);
    AbortReason::from_code(payload[0], arg)
}

/// Derives a party-local deterministic RNG from the shared seed and a
/// role label, so runs are reproducible end to end.
pub fn party_rng(seed: &[u8; 32], label: &str) -> rand_chacha::ChaCha8Rng {
    use rand_core::SeedableRng;
    let mut hasher = Sha256::new();
    Digest::update(&mut hasher, seed);
    Digest::update(&mut hasher, label.as_bytes());
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    rand_chacha::ChaCha8Rng::from_seed(out)
}

/// Samples `k` distinct positions from [0, n) in sorted order.
pub(crate) fn sample_positions(
    n: u64,
    k: u64,
    rng: &mut dyn rand_core::RngCore,
) -> Vec<u64> {
    debug_assert!(k <= n);
    // Floyd's algorithm keeps this O(k) memory
    let mut chosen = std::collections::BTreeSet::new();
    for j in (n - k)..n {
        let t = rng.next_u64() % (j + 1);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abort_reason_codes_round_trip() {
        for reason in [
            AbortReason::QberTooHigh,
            AbortReason::CommitCheck,
            AbortReason::UndersizedPartition,
            AbortReason::DecodeFailure,
            AbortReason::HashMismatch,
            AbortReason::DetectionShortfall(3),
            AbortReason::DoublePresentation,
            AbortReason::NoExtractableKey,
        ] {
            let arg = match &reason {
                AbortReason::DetectionShortfall(b) => *b,
                _ => 0,
            };
            assert_eq!(AbortReason::from_code(reason.code(), arg), Some(reason));
        }
        assert_eq!(AbortReason::from_code(200, 0), None);
    }

    #[test]
    fn sample_positions_distinct_sorted_in_range() {
        let mut rng = party_rng(&[9u8; 32], "test");
        for _ in 0..20 {
            let sample = sample_positions(1000, 400, &mut rng);
            assert_eq!(sample.len(), 400);
            assert!(sample.windows(2).all(|w| w[0] < w[1]));
            assert!(sample.iter().all(|&p| p < 1000));
        }
    }

    #[test]
    fn transcript_digest_sensitive_to_content_and_order() {
        let a = TranscriptEntry {
            direction: Direction::Sent,
            tag: 1,
            payload: vec![1, 2],
        };
        let b = TranscriptEntry {
            direction: Direction::Received,
            tag: 2,
            payload: vec![3],
        };
        let d1 = transcript_digest(&[a.clone(), b.clone()]);
        let d2 = transcript_digest(&[b, a]);
        assert_ne!(d1, d2);
    }
}
