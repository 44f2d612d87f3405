//! Unforgeable-token issuance and presentation over 2^M presentation
//! points.
//!
//! The issuer streams encoded pulses; the holder measures, reports the
//! received positions, and masks her measurement bases with an M-bit
//! secret extended blockwise over the received pulses. Each issuer-side
//! verification agent unmasks with its own address, so after the masked
//! choice string is broadcast exactly one agent reconstructs the true
//! bases and can check the presented outcomes by Hamming distance on the
//! matching-basis positions.
//!
//! Spatial separation of the presentation points is modeled as logical
//! phase barriers: every step is logged with a logical timestamp and a
//! run fails if validation ever reads data from the wrong side of a
//! barrier. Verification agents never see the holder's outcomes before a
//! presentation, and reconstruction happens only after the choice string
//! arrived.

use rand_core::RngCore;

use crate::bits::{
    decode_index_runs, encode_index_runs, hamming, pack_bits, restrict, unpack_bits, xor_bits,
    FieldReader, FieldWriter,
};
use crate::gc::{AlignedStream, DetectionSource, EmissionSource};
use crate::report::{PhaseTimer, RunReport};
use crate::transport::{tags, Channel};

use super::{transcript_digest, AbortReason, ProtocolError, SessionChannel};

#[derive(Debug, Clone)]
pub struct TokenParams {
    /// Address bits M; the token can be presented at 2^M points.
    pub m_bits: usize,
    /// Pulses per block (N); a run consumes N * M pulses.
    pub n_per_block: u64,
    /// Minimum per-block detection rate before the issuer aborts.
    pub gamma_det: f64,
    /// Maximum tolerated error fraction on matching-basis positions.
    pub gamma_err: f64,
}

/// Extends each address bit over its block's received-pulse count.
pub fn rep_extend(bits: &[u8], counts: &[u64]) -> Vec<u8> {
    debug_assert_eq!(bits.len(), counts.len());
    bits.iter()
        .zip(counts)
        .flat_map(|(&b, &c)| std::iter::repeat_n(b, c as usize))
        .collect()
}

/// Validation rule: restrict to the positions where the reconstructed
/// bases match the preparation bases and compare outcomes there. An
/// empty matching set is no evidence and invalidates the token.
pub fn token_validate(
    x_presented: &[u8],
    x_prepared: &[u8],
    bases_prepared: &[u8],
    d_tilde: &[u8],
    gamma_err: f64,
) -> Result<TokenVerdict, ProtocolError> {
    let n = x_presented.len();
    if x_prepared.len() != n || bases_prepared.len() != n || d_tilde.len() != n {
        return Err(ProtocolError::Malformed(tags::TOKEN_PRESENT));
    }
    let delta: Vec<u64> = (0..n as u64)
        .filter(|&j| d_tilde[j as usize] == bases_prepared[j as usize])
        .collect();
    let matched = delta.len() as u64;
    if matched == 0 {
        return Ok(TokenVerdict::Invalid {
            matched: 0,
            distance: 0,
        });
    }
    let distance = hamming(&restrict(x_presented, &delta), &restrict(x_prepared, &delta)) as u64;
    if distance as f64 <= matched as f64 * gamma_err {
        Ok(TokenVerdict::Valid { matched, distance })
    } else {
        Ok(TokenVerdict::Invalid { matched, distance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenVerdict {
    Valid { matched: u64, distance: u64 },
    Invalid { matched: u64, distance: u64 },
    /// A repeated presentation, refused outright.
    Rejected,
}

impl TokenVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, TokenVerdict::Valid { .. })
    }

    fn code(&self) -> u8 {
        match self {
            TokenVerdict::Valid { .. } => 0,
            TokenVerdict::Invalid { .. } => 1,
            TokenVerdict::Rejected => 2,
        }
    }
}

/// Logical phase-barrier events, logged with a monotone timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenEvent {
    Stage1Complete,
    ChoiceBroadcast,
    Reconstruction(usize),
    Presentation,
    Validation,
}

#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<(TokenEvent, u64)>,
    clock: u64,
}

impl EventLog {
    fn record(&mut self, event: TokenEvent) {
        self.clock += 1;
        self.events.push((event, self.clock));
    }

    fn last_of(&self, pred: impl Fn(&TokenEvent) -> bool) -> Option<u64> {
        self.events
            .iter()
            .filter(|(e, _)| pred(e))
            .map(|(_, t)| *t)
            .max()
    }

    pub fn entries(&self) -> &[(TokenEvent, u64)] {
        &self.events
    }

    /// The barrier ordering every run must satisfy: stage 1 completes
    /// before the choice broadcast, reconstruction follows the broadcast,
    /// and validation comes last.
    pub fn check_order(&self) -> Result<(), ProtocolError> {
        let stage1 = self.last_of(|e| *e == TokenEvent::Stage1Complete);
        let choice = self.last_of(|e| *e == TokenEvent::ChoiceBroadcast);
        let recon = self.last_of(|e| matches!(e, TokenEvent::Reconstruction(_)));
        match (stage1, choice, recon) {
            (Some(s), Some(c), Some(r)) if s < c && c < r => Ok(()),
            _ => Err(ProtocolError::PhaseOrder(
                "validation requires stage1 < choice broadcast < reconstruction",
            )),
        }
    }
}

/// Issuer-side verification agent at one presentation point.
#[derive(Debug)]
struct VerifyAgent {
    address: Vec<u8>,
    masked: Vec<u8>,
    reconstructed: Option<Vec<u8>>,
}

/// The issuing party (sends the pulses, validates presentations).
pub struct TokenIssuer {
    params: TokenParams,
    bits: Vec<u8>,
    bases: Vec<u8>,
    counts: Vec<u64>,
    agents: Vec<VerifyAgent>,
    presented: bool,
    pub events: EventLog,
}

fn address_bits(index: usize, m: usize) -> Vec<u8> {
    (0..m).map(|l| ((index >> l) & 1) as u8).collect()
}

/// Per-block received counts for a set of global indices.
fn block_counts(lambda: &[u64], start: u64, n_per_block: u64, m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; m];
    for &i in lambda {
        let block = ((i - start) / n_per_block) as usize;
        counts[block] += 1;
    }
    counts
}

impl TokenIssuer {
    /// Stage 1: stream the pulses, learn the received set, check the
    /// per-block detection rate, take the masked bases, and hand every
    /// verification agent its unmasking of them.
    pub fn run_stage1(
        params: &TokenParams,
        stream: &mut AlignedStream<EmissionSource>,
        session: &mut SessionChannel,
    ) -> Result<Self, ProtocolError> {
        let total = (params.n_per_block * params.m_bits as u64) as usize;
        let start = stream.next_index();
        let out = stream.read(total, session.inner())?;
        if out.records.len() < total {
            return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
        }
        let emissions = out.records;

        let payload = session.recv_expect(tags::TOKEN_RECEIVED)?;
        let lambda =
            decode_index_runs(&payload).ok_or(ProtocolError::Malformed(tags::TOKEN_RECEIVED))?;
        if lambda.iter().any(|&i| i < start || i >= start + total as u64) {
            return Err(ProtocolError::Malformed(tags::TOKEN_RECEIVED));
        }
        let counts = block_counts(&lambda, start, params.n_per_block, params.m_bits);
        for (block, &count) in counts.iter().enumerate() {
            if (count as f64) < params.gamma_det * params.n_per_block as f64 {
                return Err(session.abort(AbortReason::DetectionShortfall(block as u32)));
            }
        }

        let bits: Vec<u8> = lambda
            .iter()
            .map(|&i| emissions[(i - start) as usize].bit)
            .collect();
        let bases: Vec<u8> = lambda
            .iter()
            .map(|&i| emissions[(i - start) as usize].basis)
            .collect();

        let payload = session.recv_expect(tags::TOKEN_MASKED_BASES)?;
        let masked = unpack_bits(&payload, lambda.len())
            .ok_or(ProtocolError::Malformed(tags::TOKEN_MASKED_BASES))?;

        let agents = (0..1usize << params.m_bits)
            .map(|i| {
                let address = address_bits(i, params.m_bits);
                let unmask = rep_extend(&address, &counts);
                VerifyAgent {
                    address,
                    masked: xor_bits(&masked, &unmask),
                    reconstructed: None,
                }
            })
            .collect();

        let mut issuer = Self {
            params: params.clone(),
            bits,
            bases,
            counts,
            agents,
            presented: false,
            events: EventLog::default(),
        };
        issuer.events.record(TokenEvent::Stage1Complete);
        Ok(issuer)
    }

    /// Stage 2, first half: broadcast the masked choice to every agent,
    /// which reconstructs its candidate bases.
    pub fn serve_choice(&mut self, session: &mut SessionChannel) -> Result<(), ProtocolError> {
        let payload = session.recv_expect(tags::TOKEN_CHOICE)?;
        let choice = unpack_bits(&payload, self.params.m_bits)
            .ok_or(ProtocolError::Malformed(tags::TOKEN_CHOICE))?;
        self.events.record(TokenEvent::ChoiceBroadcast);
        let unmask = rep_extend(&choice, &self.counts);
        for (i, agent) in self.agents.iter_mut().enumerate() {
            agent.reconstructed = Some(xor_bits(&agent.masked, &unmask));
            self.events.record(TokenEvent::Reconstruction(i));
        }
        Ok(())
    }

    /// Stage 2, second half: accept one presentation and validate it at
    /// the named point. Repeats are rejected without looking at the data.
    pub fn serve_presentation(
        &mut self,
        session: &mut SessionChannel,
    ) -> Result<TokenVerdict, ProtocolError> {
        let payload = session.recv_expect(tags::TOKEN_PRESENT)?;
        let mut r = FieldReader::new(&payload);
        let point = r
            .take()
            .and_then(|f| unpack_bits(f, self.params.m_bits))
            .ok_or(ProtocolError::Malformed(tags::TOKEN_PRESENT))?;
        let presented = r
            .take()
            .and_then(|f| unpack_bits(f, self.bits.len()))
            .ok_or(ProtocolError::Malformed(tags::TOKEN_PRESENT))?;

        let verdict = if self.presented {
            TokenVerdict::Rejected
        } else {
            self.presented = true;
            self.events.record(TokenEvent::Presentation);
            self.events.check_order()?;
            let index = point
                .iter()
                .enumerate()
                .fold(0usize, |acc, (l, &b)| acc | ((b as usize) << l));
            let agent = &self.agents[index];
            debug_assert_eq!(agent.address, point);
            let d_tilde = agent
                .reconstructed
                .as_ref()
                .ok_or(ProtocolError::PhaseOrder("presentation before choice"))?;
            let verdict =
                token_validate(&presented, &self.bits, &self.bases, d_tilde, self.params.gamma_err)?;
            self.events.record(TokenEvent::Validation);
            verdict
        };

        let mut w = FieldWriter::new();
        let (matched, distance) = match verdict {
            TokenVerdict::Valid { matched, distance }
            | TokenVerdict::Invalid { matched, distance } => (matched, distance),
            TokenVerdict::Rejected => (0, 0),
        };
        w.put(&[verdict.code()]).put_u64(matched).put_u64(distance);
        session.send(tags::TOKEN_VERDICT, w.finish())?;
        Ok(verdict)
    }

    /// Reconstructed bases per agent, for completeness checks.
    pub fn reconstructions(&self) -> Vec<Option<&[u8]>> {
        self.agents
            .iter()
            .map(|a| a.reconstructed.as_deref())
            .collect()
    }

    pub fn prepared_bases(&self) -> &[u8] {
        &self.bases
    }

    pub fn prepared_bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn received_counts(&self) -> &[u64] {
        &self.counts
    }
}

/// Holder-side presentation agent: each point holds a copy of the
/// measured outcomes, nothing else.
#[derive(Debug, Clone)]
struct PresentAgent {
    outcomes: Vec<u8>,
}

/// The receiving party (measures the pulses, later presents the token).
pub struct TokenHolder {
    params: TokenParams,
    secret: Vec<u8>,
    outcomes: Vec<u8>,
    bases: Vec<u8>,
    agents: Vec<PresentAgent>,
    choice_sent: bool,
    pub events: EventLog,
}

impl TokenHolder {
    /// Stage 1: measure, report the received set, distribute the
    /// outcomes to the presentation agents, and send the masked bases.
    pub fn run_stage1(
        params: &TokenParams,
        stream: &mut AlignedStream<DetectionSource>,
        session: &mut SessionChannel,
        rng: &mut dyn RngCore,
    ) -> Result<Self, ProtocolError> {
        let total = (params.n_per_block * params.m_bits as u64) as usize;
        let start = stream.next_index();
        let out = stream.read(total, session.inner())?;
        if out.records.len() < total {
            return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
        }
        let detections = out.records;

        let lambda: Vec<u64> = detections
            .iter()
            .filter(|d| d.outcome.is_some())
            .map(|d| d.index)
            .collect();
        session.send(tags::TOKEN_RECEIVED, encode_index_runs(&lambda))?;
        let counts = block_counts(&lambda, start, params.n_per_block, params.m_bits);

        let outcomes: Vec<u8> = lambda
            .iter()
            .map(|&i| detections[(i - start) as usize].outcome.expect("received"))
            .collect();
        let bases: Vec<u8> = lambda
            .iter()
            .map(|&i| detections[(i - start) as usize].basis)
            .collect();

        let secret: Vec<u8> = (0..params.m_bits)
            .map(|_| (rng.next_u32() & 1) as u8)
            .collect();
        let masked = xor_bits(&bases, &rep_extend(&secret, &counts));
        session.send(tags::TOKEN_MASKED_BASES, pack_bits(&masked))?;

        let agents = vec![
            PresentAgent {
                outcomes: outcomes.clone(),
            };
            1 << params.m_bits
        ];
        let mut holder = Self {
            params: params.clone(),
            secret,
            outcomes,
            bases,
            agents,
            choice_sent: false,
            events: EventLog::default(),
        };
        holder.events.record(TokenEvent::Stage1Complete);
        Ok(holder)
    }

    /// Stage 2: unveil the masked choice for the chosen point and present
    /// the token there. A second call presents again without a new
    /// choice; the issuer refuses it.
    pub fn present(
        &mut self,
        point: &[u8],
        session: &mut SessionChannel,
    ) -> Result<TokenVerdict, ProtocolError> {
        assert_eq!(point.len(), self.params.m_bits);
        if !self.choice_sent {
            let choice = xor_bits(point, &self.secret);
            session.send(tags::TOKEN_CHOICE, pack_bits(&choice))?;
            self.choice_sent = true;
            self.events.record(TokenEvent::ChoiceBroadcast);
        }
        self.events.record(TokenEvent::Presentation);
        let index = point
            .iter()
            .enumerate()
            .fold(0usize, |acc, (l, &b)| acc | ((b as usize) << l));
        let token = self.agents[index].outcomes.clone();
        let mut w = FieldWriter::new();
        w.put(&pack_bits(point)).put(&pack_bits(&token));
        session.send(tags::TOKEN_PRESENT, w.finish())?;

        let payload = session.recv_expect(tags::TOKEN_VERDICT)?;
        let mut r = FieldReader::new(&payload);
        let code = r
            .take()
            .filter(|f| f.len() == 1)
            .map(|f| f[0])
            .ok_or(ProtocolError::Malformed(tags::TOKEN_VERDICT))?;
        let matched = r
            .take_u64()
            .ok_or(ProtocolError::Malformed(tags::TOKEN_VERDICT))?;
        let distance = r
            .take_u64()
            .ok_or(ProtocolError::Malformed(tags::TOKEN_VERDICT))?;
        Ok(match code {
            0 => TokenVerdict::Valid { matched, distance },
            1 => TokenVerdict::Invalid { matched, distance },
            2 => TokenVerdict::Rejected,
            _ => return Err(ProtocolError::Malformed(tags::TOKEN_VERDICT)),
        })
    }

    pub fn measured_bases(&self) -> &[u8] {
        &self.bases
    }

    pub fn measured_outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn secret(&self) -> &[u8] {
        &self.secret
    }
}

/// Full honest run of the issuing side: stage 1, the choice broadcast,
/// and one presentation.
pub fn run_token_issuer(
    params: &TokenParams,
    stream: &mut AlignedStream<EmissionSource>,
    chan: &mut dyn Channel,
) -> Result<(TokenVerdict, RunReport), ProtocolError> {
    let mut session = SessionChannel::new(chan, tags::TOKEN_ABORT);
    let mut timer = PhaseTimer::new();
    timer.enter("stage1");
    let mut issuer = TokenIssuer::run_stage1(params, stream, &mut session)?;
    timer.enter("stage2");
    issuer.serve_choice(&mut session)?;
    let verdict = issuer.serve_presentation(&mut session)?;
    let mut report = RunReport {
        protocol: "token".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "issuer");
    report.put("received", issuer.prepared_bits().len());
    report.put("verdict", format!("{verdict:?}"));
    // preparation biases over the reported-received pulses feed the
    // unforgeability bound
    let received: Vec<crate::hwsim::EmissionRecord> = issuer
        .prepared_bits()
        .iter()
        .zip(issuer.prepared_bases())
        .enumerate()
        .map(|(j, (&bit, &basis))| crate::hwsim::EmissionRecord {
            index: j as u64,
            bit,
            basis,
        })
        .collect();
    if let Ok((beta_pb, beta_ps)) = crate::hwsim::measured_biases(&received) {
        report.put("beta_pb_measured", format!("{beta_pb:.6}"));
        report.put("beta_ps_measured", format!("{beta_ps:.6}"));
    }
    Ok((verdict, report))
}

/// Full honest run of the holding side; presents at `point` (or at a
/// random point when none is given).
pub fn run_token_holder(
    params: &TokenParams,
    stream: &mut AlignedStream<DetectionSource>,
    chan: &mut dyn Channel,
    rng: &mut dyn RngCore,
    point: Option<Vec<u8>>,
) -> Result<(TokenVerdict, RunReport), ProtocolError> {
    let mut session = SessionChannel::new(chan, tags::TOKEN_ABORT);
    let mut timer = PhaseTimer::new();
    timer.enter("stage1");
    let mut holder = TokenHolder::run_stage1(params, stream, &mut session, rng)?;
    timer.enter("stage2");
    let point = point.unwrap_or_else(|| {
        (0..params.m_bits)
            .map(|_| (rng.next_u32() & 1) as u8)
            .collect()
    });
    let verdict = holder.present(&point, &mut session)?;
    let mut report = RunReport {
        protocol: "token".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "holder");
    report.put("received", holder.measured_outcomes().len());
    report.put("verdict", format!("{verdict:?}"));
    Ok((verdict, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rep_extend_definition() {
        assert_eq!(rep_extend(&[1, 0], &[3, 2]), vec![1, 1, 1, 0, 0]);
        assert_eq!(rep_extend(&[1, 0], &[0, 0]), Vec::<u8>::new());
        assert_eq!(rep_extend(&[1], &[4]), vec![1, 1, 1, 1]);
    }

    #[test]
    fn validate_threshold_boundaries() {
        // identical strings pass at zero tolerance
        let x = vec![1, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let bases = vec![0; 10];
        let d_tilde = vec![0; 10];
        let v = token_validate(&x, &x, &bases, &d_tilde, 0.0).unwrap();
        assert!(v.is_valid());

        // exactly floor(|delta| gamma_err) mismatches pass, one more fails
        let gamma = 0.25;
        let mut forged = x.clone();
        forged[0] ^= 1;
        forged[1] ^= 1;
        let v = token_validate(&forged, &x, &bases, &d_tilde, gamma).unwrap();
        assert!(v.is_valid(), "2 of 10 within 0.25");
        forged[2] ^= 1;
        let v = token_validate(&forged, &x, &bases, &d_tilde, gamma).unwrap();
        assert!(!v.is_valid(), "3 of 10 above 0.25");
    }

    #[test]
    fn validate_empty_matching_set_is_invalid() {
        let x = vec![1, 0];
        let bases = vec![0, 0];
        let d_tilde = vec![1, 1];
        let v = token_validate(&x, &x, &bases, &d_tilde, 0.5).unwrap();
        assert_eq!(
            v,
            TokenVerdict::Invalid {
                matched: 0,
                distance: 0
            }
        );
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        assert!(token_validate(&[1], &[1, 0], &[0, 0], &[0, 0], 0.1).is_err());
    }

    #[test]
    fn event_order_enforced() {
        let mut log = EventLog::default();
        log.record(TokenEvent::Stage1Complete);
        assert!(log.check_order().is_err());
        log.record(TokenEvent::ChoiceBroadcast);
        log.record(TokenEvent::Reconstruction(0));
        assert!(log.check_order().is_ok());
    }

    #[test]
    fn address_bits_round_trip() {
        for m in 1..=3usize {
            for i in 0..(1usize << m) {
                let bits = address_bits(i, m);
                let back = bits
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (l, &b)| acc | ((b as usize) << l));
                assert_eq!(back, i);
            }
        }
    }
}
