//! Global-counter synchronization layer.
//!
//! Both parties consume index-aligned correlated records through buffered
//! streams, oblivious of the backend that produced them. A control
//! handshake over the classical channel starts and stops the stream with
//! acknowledgment before effect, so the two ends always agree on the
//! global counter value at which a transition happened: the cut index of
//! a stop or drain is the maximum of the two generation cursors, and the
//! lagging side generates-and-buffers up to the cut so no record index is
//! delivered on one side only.
//!
//! Control frames are expected only inside stream calls (reads poll for
//! them between chunks) and at the explicit rendezvous points; a control
//! frame arriving during protocol traffic is a session error.

use std::collections::VecDeque;

use thiserror::Error;

use crate::bits::{FieldReader, FieldWriter};
use crate::hwsim::{
    detections_range, emissions_range, ChannelProfile, DetectionRecord, EmissionRecord,
    ProfileError,
};
use crate::transport::{tags, Channel, Frame, TransportError};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("stream is not running")]
    NotRunning,
    #[error("stream already running")]
    AlreadyRunning,
    #[error("session id mismatch: ours {ours}, theirs {theirs}")]
    SessionMismatch { ours: u64, theirs: u64 },
    #[error("control handshake failed: {0}")]
    HandshakeFailed(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unexpected frame tag 0x{0:02x} on control path")]
    UnexpectedFrame(u8),
    #[error("buffer capacity {capacity} exceeded (need {needed})")]
    BufferOverflow { capacity: usize, needed: u64 },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Produces the records of one party's view for a contiguous index range.
pub trait RecordSource: Send {
    type Record: Clone + Send;
    fn generate(&mut self, start: u64, count: usize) -> Result<Vec<Self::Record>, StreamError>;
}

/// Emission-side backend over the hardware emulator.
pub struct EmissionSource {
    profile: ChannelProfile,
}

impl EmissionSource {
    pub fn new(profile: ChannelProfile) -> Self {
        Self { profile }
    }
}

impl RecordSource for EmissionSource {
    type Record = EmissionRecord;
    fn generate(&mut self, start: u64, count: usize) -> Result<Vec<EmissionRecord>, StreamError> {
        Ok(emissions_range(&self.profile, start, count)?)
    }
}

/// Detection-side backend over the hardware emulator.
pub struct DetectionSource {
    profile: ChannelProfile,
}

impl DetectionSource {
    pub fn new(profile: ChannelProfile) -> Self {
        Self { profile }
    }
}

impl RecordSource for DetectionSource {
    type Record = DetectionRecord;
    fn generate(&mut self, start: u64, count: usize) -> Result<Vec<DetectionRecord>, StreamError> {
        Ok(detections_range(&self.profile, start, count)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamState {
    Stopped,
    Running,
}

/// Result of a read: the records delivered, and whether the stream
/// stopped before the request was satisfied.
#[derive(Debug, Clone)]
pub struct ReadOutcome<R> {
    pub records: Vec<R>,
    pub end_of_stream: bool,
}

const READ_CHUNK: usize = 4096;

fn is_control_tag(tag: u8) -> bool {
    (tags::CTRL_START..=tags::CTRL_ACK).contains(&tag)
}
pub const DEFAULT_CAPACITY: usize = 1 << 24;

/// One party's end of the aligned record stream.
pub struct AlignedStream<S: RecordSource> {
    session_id: u64,
    source: S,
    state: StreamState,
    /// Generation cursor: the next global counter value to generate.
    next_index: u64,
    /// Delivery cursor: the next global counter value to hand to the
    /// application. Lags `next_index` by exactly the buffer length.
    consumed: u64,
    buffer: VecDeque<S::Record>,
    capacity: usize,
}

impl<S: RecordSource> AlignedStream<S> {
    pub fn new(session_id: u64, source: S) -> Self {
        Self {
            session_id,
            source,
            state: StreamState::Stopped,
            next_index: 0,
            consumed: 0,
            buffer: VecDeque::new(),
            capacity: DEFAULT_CAPACITY,
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn state(&self) -> StreamState {
        self.state
    }

    /// The global counter value of the next record to generate.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// The global counter value of the next record to deliver.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    fn ack(chan: &mut dyn Channel, verb: u8, status: u8, value: u64) -> Result<(), StreamError> {
        let mut w = FieldWriter::new();
        w.put(&[verb]).put(&[status]).put_u64(value);
        chan.send(&Frame::new(tags::CTRL_ACK, w.finish()))?;
        Ok(())
    }

    fn parse_ack(frame: &Frame, want_verb: u8) -> Result<(u8, u64), StreamError> {
        if frame.tag != tags::CTRL_ACK {
            return Err(StreamError::UnexpectedFrame(frame.tag));
        }
        let mut r = FieldReader::new(&frame.payload);
        let verb = r.take().filter(|f| f.len() == 1).map(|f| f[0]);
        let status = r.take().filter(|f| f.len() == 1).map(|f| f[0]);
        let value = r.take_u64();
        match (verb, status, value) {
            (Some(v), Some(s), Some(val)) if v == want_verb => Ok((s, val)),
            _ => Err(StreamError::HandshakeFailed("malformed ack".into())),
        }
    }

    /// Opens the stream from the initiating side. Both parties must be
    /// at the same counter value with matching session ids.
    pub fn start_initiate(&mut self, chan: &mut dyn Channel) -> Result<(), StreamError> {
        if self.state == StreamState::Running {
            return Err(StreamError::AlreadyRunning);
        }
        let mut w = FieldWriter::new();
        w.put_u64(self.session_id).put_u64(self.next_index);
        chan.send(&Frame::new(tags::CTRL_START, w.finish()))?;
        let reply = chan.recv()?;
        let (status, value) = Self::parse_ack(&reply, tags::CTRL_START)?;
        match status {
            0 => {
                self.state = StreamState::Running;
                Ok(())
            }
            1 => Err(StreamError::SessionMismatch {
                ours: self.session_id,
                theirs: value,
            }),
            _ => Err(StreamError::HandshakeFailed(format!(
                "peer at counter {value}, ours {}",
                self.next_index
            ))),
        }
    }

    /// Waits for the peer's start request and acknowledges it.
    pub fn start_accept(&mut self, chan: &mut dyn Channel) -> Result<(), StreamError> {
        if self.state == StreamState::Running {
            return Err(StreamError::AlreadyRunning);
        }
        let frame = chan.recv()?;
        if frame.tag != tags::CTRL_START {
            return Err(StreamError::UnexpectedFrame(frame.tag));
        }
        let mut r = FieldReader::new(&frame.payload);
        let (sid, idx) = match (r.take_u64(), r.take_u64()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(StreamError::HandshakeFailed("malformed start".into())),
        };
        if sid != self.session_id {
            Self::ack(chan, tags::CTRL_START, 1, self.session_id)?;
            return Err(StreamError::SessionMismatch {
                ours: self.session_id,
                theirs: sid,
            });
        }
        if idx != self.next_index {
            Self::ack(chan, tags::CTRL_START, 2, self.next_index)?;
            return Err(StreamError::HandshakeFailed(format!(
                "counter mismatch: peer {idx}, ours {}",
                self.next_index
            )));
        }
        Self::ack(chan, tags::CTRL_START, 0, self.next_index)?;
        self.state = StreamState::Running;
        Ok(())
    }

    /// Generates records up to `cut` into the buffer so the peer's lead
    /// is never lost.
    fn catch_up(&mut self, cut: u64) -> Result<(), StreamError> {
        if cut <= self.next_index {
            return Ok(());
        }
        let needed = cut - self.consumed;
        if needed > self.capacity as u64 {
            return Err(StreamError::BufferOverflow {
                capacity: self.capacity,
                needed,
            });
        }
        let count = (cut - self.next_index) as usize;
        let records = self.source.generate(self.next_index, count)?;
        self.buffer.extend(records);
        self.next_index = cut;
        Ok(())
    }

    fn handle_control(&mut self, frame: Frame, chan: &mut dyn Channel) -> Result<(), StreamError> {
        match frame.tag {
            tags::CTRL_STOP => {
                let peer = FieldReader::new(&frame.payload)
                    .take_u64()
                    .ok_or_else(|| StreamError::HandshakeFailed("malformed stop".into()))?;
                let cut = peer.max(self.next_index);
                Self::ack(chan, tags::CTRL_STOP, 0, cut)?;
                self.catch_up(cut)?;
                self.state = StreamState::Stopped;
                Ok(())
            }
            tags::CTRL_DRAIN => {
                let peer = FieldReader::new(&frame.payload)
                    .take_u64()
                    .ok_or_else(|| StreamError::HandshakeFailed("malformed drain".into()))?;
                let cut = peer.max(self.next_index);
                Self::ack(chan, tags::CTRL_DRAIN, 0, cut)?;
                self.buffer.clear();
                self.consumed = cut;
                self.next_index = cut;
                Ok(())
            }
            other => Err(StreamError::UnexpectedFrame(other)),
        }
    }

    /// Delivers the next `n` records. Returns early with an end marker
    /// when a stop lands while the read is in progress.
    pub fn read(
        &mut self,
        n: usize,
        chan: &mut dyn Channel,
    ) -> Result<ReadOutcome<S::Record>, StreamError> {
        if self.state != StreamState::Running {
            return Err(StreamError::NotRunning);
        }
        let mut records = Vec::with_capacity(n.min(1 << 20));
        loop {
            while records.len() < n {
                match self.buffer.pop_front() {
                    Some(r) => {
                        records.push(r);
                        self.consumed += 1;
                    }
                    None => break,
                }
            }
            if records.len() == n {
                return Ok(ReadOutcome {
                    records,
                    end_of_stream: false,
                });
            }
            // a stop handled below fills the buffer up to the cut, so the
            // loop keeps serving; once the buffer is dry the read ends
            if self.state == StreamState::Stopped {
                return Ok(ReadOutcome {
                    records,
                    end_of_stream: true,
                });
            }
            // a closed channel cannot carry control traffic anymore;
            // reads keep serving from the local backend. Frames outside
            // the control range belong to the protocol layer and are
            // pushed back untouched.
            let mut handled_control = false;
            loop {
                match chan.try_recv() {
                    Ok(Some(frame)) if is_control_tag(frame.tag) => {
                        self.handle_control(frame, chan)?;
                        handled_control = true;
                        if self.state == StreamState::Stopped {
                            break;
                        }
                    }
                    Ok(Some(frame)) => {
                        chan.unrecv(frame);
                        break;
                    }
                    Ok(None) | Err(TransportError::Closed) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            if handled_control {
                continue;
            }
            let want = (n - records.len()).min(READ_CHUNK);
            let mut generated = self.source.generate(self.next_index, want)?;
            self.next_index += generated.len() as u64;
            self.consumed += generated.len() as u64;
            records.append(&mut generated);
        }
    }

    /// Stops the stream, negotiating the cut index with the peer.
    /// Returns the agreed cut.
    pub fn stop_initiate(&mut self, chan: &mut dyn Channel) -> Result<u64, StreamError> {
        if self.state != StreamState::Running {
            return Err(StreamError::NotRunning);
        }
        let mut w = FieldWriter::new();
        w.put_u64(self.next_index);
        chan.send(&Frame::new(tags::CTRL_STOP, w.finish()))?;
        let reply = chan.recv()?;
        let (status, cut) = Self::parse_ack(&reply, tags::CTRL_STOP)?;
        if status != 0 {
            return Err(StreamError::HandshakeFailed(format!("stop status {status}")));
        }
        self.catch_up(cut)?;
        self.state = StreamState::Stopped;
        Ok(cut)
    }

    /// Waits for the peer's stop request and completes the handshake.
    /// Returns immediately when the stop already landed inside an
    /// in-progress read.
    pub fn expect_stop(&mut self, chan: &mut dyn Channel) -> Result<u64, StreamError> {
        if self.state == StreamState::Stopped {
            return Ok(self.next_index);
        }
        let frame = chan.recv()?;
        if frame.tag != tags::CTRL_STOP {
            return Err(StreamError::UnexpectedFrame(frame.tag));
        }
        self.handle_control(frame, chan)?;
        Ok(self.next_index)
    }

    /// Discards buffered-but-unread records on both sides and advances
    /// both cursors to a common cut. The stream stays running.
    pub fn drain_initiate(&mut self, chan: &mut dyn Channel) -> Result<u64, StreamError> {
        if self.state != StreamState::Running {
            return Err(StreamError::NotRunning);
        }
        let mut w = FieldWriter::new();
        w.put_u64(self.next_index);
        chan.send(&Frame::new(tags::CTRL_DRAIN, w.finish()))?;
        let reply = chan.recv()?;
        let (status, cut) = Self::parse_ack(&reply, tags::CTRL_DRAIN)?;
        if status != 0 {
            return Err(StreamError::HandshakeFailed(format!(
                "drain status {status}"
            )));
        }
        self.buffer.clear();
        self.consumed = cut;
        self.next_index = cut;
        Ok(cut)
    }

    /// Waits for the peer's drain request and completes the handshake.
    pub fn expect_drain(&mut self, chan: &mut dyn Channel) -> Result<u64, StreamError> {
        if self.state != StreamState::Running {
            return Err(StreamError::NotRunning);
        }
        let frame = chan.recv()?;
        if frame.tag != tags::CTRL_DRAIN {
            return Err(StreamError::UnexpectedFrame(frame.tag));
        }
        self.handle_control(frame, chan)?;
        Ok(self.next_index)
    }
}

/// The set of global counter values at which a detection fired.
pub fn reconcile_received(detections: &[DetectionRecord]) -> Vec<u64> {
    detections
        .iter()
        .filter(|d| d.outcome.is_some())
        .map(|d| d.index)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::loopback_pair;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn profile(tag: u8) -> ChannelProfile {
        let mut seed = [0u8; 32];
        seed[0] = tag;
        ChannelProfile {
            seed,
            mu: 40.0,
            ..ChannelProfile::default()
        }
    }

    /// Runs the emission side on this thread and the detection side on a
    /// helper thread, returning both results.
    fn run_pair<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
    where
        A: FnOnce(&mut AlignedStream<EmissionSource>, &mut dyn Channel) -> RA,
        B: FnOnce(&mut AlignedStream<DetectionSource>, &mut dyn Channel) -> RB + Send + 'static,
        RA: Send,
        RB: Send + 'static,
    {
        let (mut chan_a, mut chan_b) = loopback_pair();
        let p = profile(1);
        let mut alice = AlignedStream::new(7, EmissionSource::new(p.clone()));
        let handle = std::thread::spawn(move || {
            let mut bob = AlignedStream::new(7, DetectionSource::new(p));
            b(&mut bob, &mut chan_b)
        });
        let ra = a(&mut alice, &mut chan_a);
        let rb = handle.join().expect("detection side");
        (ra, rb)
    }

    #[test]
    fn fresh_session_starts_at_zero_and_aligns() {
        let (a_idx, b_idx) = run_pair(
            |alice, chan| {
                assert_eq!(alice.next_index(), 0);
                alice.start_initiate(chan).unwrap();
                let out = alice.read(10, chan).unwrap();
                assert!(!out.end_of_stream);
                out.records.iter().map(|r| r.index).collect::<Vec<_>>()
            },
            |bob, chan| {
                bob.start_accept(chan).unwrap();
                let out = bob.read(10, chan).unwrap();
                out.records.iter().map(|r| r.index).collect::<Vec<_>>()
            },
        );
        assert_eq!(a_idx, (0..10).collect::<Vec<u64>>());
        assert_eq!(a_idx, b_idx);
    }

    #[test]
    fn read_zero_returns_empty() {
        run_pair(
            |alice, chan| {
                alice.start_initiate(chan).unwrap();
                let out = alice.read(0, chan).unwrap();
                assert!(out.records.is_empty());
                assert!(!out.end_of_stream);
                alice.stop_initiate(chan).unwrap();
            },
            |bob, chan| {
                bob.start_accept(chan).unwrap();
                bob.expect_stop(chan).unwrap();
            },
        );
    }

    #[test]
    fn counter_continues_across_stop_start() {
        run_pair(
            |alice, chan| {
                alice.start_initiate(chan).unwrap();
                alice.read(100, chan).unwrap();
                let cut = alice.stop_initiate(chan).unwrap();
                assert_eq!(cut, 100);
                assert_eq!(alice.next_index(), 100);
                alice.start_initiate(chan).unwrap();
                let out = alice.read(5, chan).unwrap();
                assert_eq!(out.records[0].index, 100);
            },
            |bob, chan| {
                bob.start_accept(chan).unwrap();
                bob.read(100, chan).unwrap();
                let cut = bob.expect_stop(chan).unwrap();
                assert_eq!(cut, 100);
                assert_eq!(bob.next_index(), 100);
                bob.start_accept(chan).unwrap();
                let out = bob.read(5, chan).unwrap();
                assert_eq!(out.records[0].index, 100);
            },
        );
    }

    #[test]
    fn mismatched_session_ids_fail_handshake() {
        let (mut chan_a, mut chan_b) = loopback_pair();
        let p = profile(2);
        let mut alice = AlignedStream::new(1, EmissionSource::new(p.clone()));
        let handle = std::thread::spawn(move || {
            let mut bob = AlignedStream::new(2, DetectionSource::new(p));
            bob.start_accept(&mut chan_b)
        });
        let res_a = alice.start_initiate(&mut chan_a);
        let res_b = handle.join().unwrap();
        assert!(matches!(
            res_a,
            Err(StreamError::SessionMismatch { ours: 1, theirs: 2 })
        ));
        assert!(matches!(
            res_b,
            Err(StreamError::SessionMismatch { ours: 2, theirs: 1 })
        ));
    }

    #[test]
    fn double_start_rejected_locally() {
        run_pair(
            |alice, chan| {
                alice.start_initiate(chan).unwrap();
                assert!(matches!(
                    alice.start_initiate(chan),
                    Err(StreamError::AlreadyRunning)
                ));
                alice.stop_initiate(chan).unwrap();
            },
            |bob, chan| {
                bob.start_accept(chan).unwrap();
                bob.expect_stop(chan).unwrap();
            },
        );
    }

    #[test]
    fn read_before_start_rejected() {
        let p = profile(3);
        let (mut chan, _keep) = loopback_pair();
        let mut alice = AlignedStream::new(9, EmissionSource::new(p));
        assert!(matches!(
            alice.read(1, &mut chan),
            Err(StreamError::NotRunning)
        ));
    }

    #[test]
    fn stop_mid_read_randomized_cut_points() {
        let mut rng = ChaCha8Rng::from_seed([5u8; 32]);
        for round in 0..15 {
            let stop_after = 1 + (rng.next_u32() as usize) % 20_000;
            let ((a_count, a_next), (b_count, b_next, b_end)) = run_pair(
                move |alice, chan| {
                    alice.start_initiate(chan).unwrap();
                    let out = alice.read(stop_after, chan).unwrap();
                    let cut = alice.stop_initiate(chan).unwrap();
                    assert!(cut >= stop_after as u64);
                    (out.records.len(), alice.next_index())
                },
                |bob, chan| {
                    bob.start_accept(chan).unwrap();
                    // a read far larger than the stop point, interrupted
                    // by the peer's stop
                    let out = bob.read(1_000_000, chan).unwrap();
                    (out.records.len(), bob.next_index(), out.end_of_stream)
                },
            );
            assert!(b_end, "round {round}: read must end with the stop marker");
            assert_eq!(
                a_next, b_next,
                "round {round}: cursors disagree after stop"
            );
            assert_eq!(a_count, stop_after);
            // the interrupted read was served all the way to the cut, so
            // both sides delivered exactly the same index range
            assert_eq!(b_count as u64, b_next, "round {round}");
        }
    }

    #[test]
    fn no_record_delivered_twice_across_stop_restart() {
        let (a_indices, b_indices) = run_pair(
            |alice, chan| {
                let mut seen = Vec::new();
                alice.start_initiate(chan).unwrap();
                for r in alice.read(1000, chan).unwrap().records {
                    seen.push(r.index);
                }
                alice.stop_initiate(chan).unwrap();
                alice.start_initiate(chan).unwrap();
                for r in alice.read(1000, chan).unwrap().records {
                    seen.push(r.index);
                }
                alice.stop_initiate(chan).unwrap();
                seen
            },
            |bob, chan| {
                let mut seen = Vec::new();
                bob.start_accept(chan).unwrap();
                // interrupted long read
                for r in bob.read(1_000_000, chan).unwrap().records {
                    seen.push(r.index);
                }
                bob.start_accept(chan).unwrap();
                let out = bob.read(1_000_000, chan).unwrap();
                for r in out.records {
                    seen.push(r.index);
                }
                seen
            },
        );
        for seen in [&a_indices, &b_indices] {
            for pair in seen.windows(2) {
                assert!(pair[0] < pair[1], "duplicate or out-of-order delivery");
            }
        }
        // every index delivered to alice was delivered to bob too, up to
        // the final common cursor
        let common = *a_indices.last().unwrap().min(b_indices.last().unwrap());
        let a_set: Vec<u64> = a_indices.iter().copied().filter(|&i| i <= common).collect();
        let b_set: Vec<u64> = b_indices.iter().copied().filter(|&i| i <= common).collect();
        assert_eq!(a_set, b_set);
    }

    #[test]
    fn drain_discards_identically_and_keeps_running() {
        let (mut chan_a, mut chan_b) = loopback_pair();
        let p = profile(4);
        // rendezvous keeps the drain out of bob's in-progress read
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let mut alice = AlignedStream::new(7, EmissionSource::new(p.clone()));
        let handle = std::thread::spawn(move || {
            let mut bob = AlignedStream::new(7, DetectionSource::new(p));
            bob.start_accept(&mut chan_b).unwrap();
            // bob lags: he has read less when the drain arrives
            bob.read(120, &mut chan_b).unwrap();
            ready_tx.send(()).unwrap();
            let cut = bob.expect_drain(&mut chan_b).unwrap();
            assert_eq!(cut, 300);
            assert_eq!(bob.consumed(), 300);
            let out = bob.read(10, &mut chan_b).unwrap();
            assert_eq!(out.records[0].index, 300);
            bob.expect_stop(&mut chan_b).unwrap();
        });
        alice.start_initiate(&mut chan_a).unwrap();
        alice.read(300, &mut chan_a).unwrap();
        ready_rx.recv().unwrap();
        let cut = alice.drain_initiate(&mut chan_a).unwrap();
        assert_eq!(cut, 300);
        let out = alice.read(10, &mut chan_a).unwrap();
        assert_eq!(out.records[0].index, 300);
        alice.stop_initiate(&mut chan_a).unwrap();
        handle.join().unwrap();
    }

    #[test]
    fn reconcile_received_edges_and_statistics() {
        // all detected
        let all: Vec<DetectionRecord> = (0..100)
            .map(|i| DetectionRecord {
                index: i,
                detected: true,
                basis: 0,
                outcome: Some(0),
            })
            .collect();
        assert_eq!(reconcile_received(&all), (0..100).collect::<Vec<u64>>());

        // none detected
        let none: Vec<DetectionRecord> = (0..100)
            .map(|i| DetectionRecord {
                index: i,
                detected: false,
                basis: 0,
                outcome: None,
            })
            .collect();
        assert!(reconcile_received(&none).is_empty());

        // binomial statistics at p_det one half
        let mut p = profile(6);
        p.mu = 0.5f64.ln().abs(); // 1 - e^-mu = 0.5
        let n = 10_000;
        let detections = detections_range(&p, 0, n).unwrap();
        let lambda = reconcile_received(&detections);
        let count = lambda.len() as f64;
        assert!(
            (count - 5000.0).abs() < 250.0,
            "detected {count}, expected 5000 +- 250"
        );
    }

    #[test]
    fn catch_up_respects_capacity() {
        let (mut chan_a, mut chan_b) = loopback_pair();
        let p = profile(7);
        let mut alice =
            AlignedStream::new(3, EmissionSource::new(p.clone())).with_capacity(100);
        let handle = std::thread::spawn(move || {
            let mut bob = AlignedStream::new(3, DetectionSource::new(p));
            bob.start_accept(&mut chan_b).unwrap();
            bob.read(5000, &mut chan_b).unwrap();
            bob.stop_initiate(&mut chan_b).unwrap();
        });
        alice.start_initiate(&mut chan_a).unwrap();
        // the peer is 5000 ahead; catching up would overflow capacity 100
        let err = alice.expect_stop(&mut chan_a).unwrap_err();
        assert!(matches!(err, StreamError::BufferOverflow { .. }));
        handle.join().unwrap();
    }
}
