//! 1-out-of-2 oblivious transfer over the prepare-and-measure layer.
//!
//! The sender feeds random encoded pulses; the receiver measures, reports
//! which arrived, and commits to every measured value and basis. The
//! sender spot-checks half the positions against her own records, then
//! announces her bases; the receiver partitions the unopened positions by
//! basis agreement and labels the two sets with his choice bit. Syndromes
//! and one-time-padded messages for both partitions let the receiver
//! recover exactly the message at his label while the spot check bounds
//! his information about the other.
//!
//! The receiver's choice bit influences nothing but the labeling of the
//! partition message: every other byte he transmits is computed without
//! reading it.

use rand_core::RngCore;

use crate::bits::{
    decode_index_runs, encode_index_runs, pack_bits, restrict, unpack_bits, xor_bits,
    FieldReader, FieldWriter,
};
use crate::bounds::ot_final_length;
use crate::crypto::{
    batch_verify, commit_string, prg_expand, toeplitz_hash, verify, CommitParams, Commitment,
    Decommitment, ToeplitzSeed,
};
use crate::ecc::{chunked_decode, chunked_syndrome, ParityCheckMatrix};
use crate::gc::{AlignedStream, DetectionSource, EmissionSource};
use crate::report::{PhaseTimer, RunReport};
use crate::transport::{tags, Channel};

use super::{
    sample_positions, transcript_digest, AbortReason, ProtocolError, SessionChannel,
};


#[derive(Debug, Clone)]
pub struct OtParams {
    /// Half the number of received pulses the run waits for.
    pub lambda_ot: u64,
    pub q_tol: f64,
    pub eps_sec1: f64,
    pub eps_sec2: f64,
    /// Message length in bits.
    pub w: usize,
    pub commit: CommitParams,
    /// Privacy-amplification output length in bits.
    pub lambda_pqs: usize,
    /// Minimum size of each basis partition; falling short aborts the
    /// attempt and retries with fresh states.
    pub min_partition: u64,
    pub max_retries: u32,
    /// Spot-check counts only commitment-verification failures, not
    /// value errors, when set.
    pub step6_literal: bool,
    /// Evaluate the reported secure length with the literal final
    /// penalty term.
    pub eq4_literal: bool,
}

impl OtParams {
    pub fn desk_scale(lambda_ot: u64, w: usize) -> Self {
        Self {
            lambda_ot,
            q_tol: 0.025,
            eps_sec1: (2f64).powi(-23),
            eps_sec2: (2f64).powi(-23),
            w,
            commit: CommitParams::default(),
            lambda_pqs: 256,
            min_partition: ((lambda_ot as f64 * 0.45) as u64).max(256),
            max_retries: 3,
            step6_literal: false,
            eq4_literal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OtSenderOutcome {
    pub report: RunReport,
    /// Full ordered message log, for audits and tests.
    pub transcript: Vec<super::TranscriptEntry>,
}

#[derive(Debug, Clone)]
pub struct OtReceiverOutcome {
    /// The recovered message m_b, as bits.
    pub message: Vec<u8>,
    pub report: RunReport,
    /// Full ordered message log, for audits and tests.
    pub transcript: Vec<super::TranscriptEntry>,
}

struct SenderAttempt {
    n0: usize,
    n1: usize,
    q_leak: usize,
    received: u64,
}

/// Runs the sending side. `m0` and `m1` are bit strings of length `w`.
pub fn run_ot_sender(
    params: &OtParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<EmissionSource>,
    chan: &mut dyn Channel,
    m0: &[u8],
    m1: &[u8],
    rng: &mut dyn RngCore,
) -> Result<OtSenderOutcome, ProtocolError> {
    assert_eq!(m0.len(), params.w, "m0 must be w bits");
    assert_eq!(m1.len(), params.w, "m1 must be w bits");
    let mut session = SessionChannel::new(chan, tags::OT_ABORT);
    let mut timer = PhaseTimer::new();
    let mut attempts = 0u32;
    let result = loop {
        attempts += 1;
        match sender_attempt(params, matrix, stream, &mut session, &mut timer, m0, m1, rng) {
            Ok(done) => break done,
            Err(e) if attempts <= params.max_retries
                && e.abort_reason().is_some_and(AbortReason::retryable) =>
            {
                continue;
            }
            Err(e) => return Err(e),
        }
    };

    let mut report = RunReport {
        protocol: "ot".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "sender");
    report.put("attempts", attempts);
    report.put("received", result.received);
    report.put("n0", result.n0);
    report.put("n1", result.n1);
    report.put("q_leak_bits", result.q_leak);
    let n0 = result.n0.min(result.n1) as f64;
    let secure_len = ot_final_length(
        params.eps_sec1,
        params.eps_sec2,
        2.0 * n0,
        params.q_tol,
        result.q_leak as f64 / 2.0,
        params.eq4_literal,
    )?;
    report.put("bound_final_length", format!("{secure_len:.1}"));
    report.put(
        "bound_secure",
        secure_len >= params.lambda_pqs as f64,
    );
    Ok(OtSenderOutcome {
        report,
        transcript: session.transcript,
    })
}

#[allow(clippy::too_many_arguments)]
fn sender_attempt(
    params: &OtParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<EmissionSource>,
    session: &mut SessionChannel,
    timer: &mut PhaseTimer,
    m0: &[u8],
    m1: &[u8],
    rng: &mut dyn RngCore,
) -> Result<SenderAttempt, ProtocolError> {
    let two_lambda = (2 * params.lambda_ot) as usize;

    // the receiver reports how much of the stream he consumed and which
    // pulses arrived
    timer.enter("q-receive");
    let payload = session.recv_expect(tags::OT_RECEIVED)?;
    let mut r = FieldReader::new(&payload);
    let consumed = r
        .take_u64()
        .ok_or(ProtocolError::Malformed(tags::OT_RECEIVED))?;
    let lambda_set = r
        .take()
        .and_then(decode_index_runs)
        .ok_or(ProtocolError::Malformed(tags::OT_RECEIVED))?;
    if lambda_set.len() != two_lambda {
        return Err(ProtocolError::Malformed(tags::OT_RECEIVED));
    }
    let start = stream.next_index();
    let out = stream.read(consumed as usize, session.inner())?;
    if out.records.len() < consumed as usize {
        return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
    }
    let bits: Vec<u8> = lambda_set
        .iter()
        .map(|&i| out.records[(i - start) as usize].bit)
        .collect();
    let bases: Vec<u8> = lambda_set
        .iter()
        .map(|&i| out.records[(i - start) as usize].basis)
        .collect();

    // spot check: receive commitments, sample half the positions, verify
    // the openings and compare values where bases agree
    timer.enter("commitment");
    let payload = session.recv_expect(tags::OT_COMMITMENTS)?;
    let (t_bits, t_bases) = decode_commitments(&payload, two_lambda, &params.commit)?;
    let test_set = sample_positions(two_lambda as u64, params.lambda_ot, rng);
    session.send(tags::OT_TEST_SET, encode_index_runs(&test_set))?;
    let payload = session.recv_expect(tags::OT_OPENINGS)?;
    let openings = decode_openings(&payload, test_set.len(), &params.commit)?;

    let mut bad = 0usize;
    if params.step6_literal {
        let (ts, ds): (Vec<Commitment>, Vec<Decommitment>) = test_set
            .iter()
            .zip(&openings)
            .flat_map(|(&j, (dx, dt))| {
                [
                    (t_bits[j as usize].clone(), dx.clone()),
                    (t_bases[j as usize].clone(), dt.clone()),
                ]
            })
            .unzip();
        let ok = batch_verify(&ts, &ds, &params.commit)?;
        bad = 2 * test_set.len() - ok;
    } else {
        for (&j, (d_bit, d_basis)) in test_set.iter().zip(&openings) {
            let j = j as usize;
            let ok_bit = verify(&t_bits[j], d_bit, &params.commit)? == 1;
            let ok_basis = verify(&t_bases[j], d_basis, &params.commit)? == 1;
            let value_error = d_basis.bit == bases[j] && d_bit.bit != bits[j];
            if !ok_bit || !ok_basis || value_error {
                bad += 1;
            }
        }
    }
    if bad as f64 / params.lambda_ot as f64 > params.q_tol {
        return Err(session.abort(AbortReason::CommitCheck));
    }

    // basis reconciliation
    session.send(tags::OT_BASES, pack_bits(&bases))?;
    let payload = session.recv_expect(tags::OT_PARTITION)?;
    let mut r = FieldReader::new(&payload);
    let i0 = r
        .take()
        .and_then(decode_index_runs)
        .ok_or(ProtocolError::Malformed(tags::OT_PARTITION))?;
    let i1 = r
        .take()
        .and_then(decode_index_runs)
        .ok_or(ProtocolError::Malformed(tags::OT_PARTITION))?;
    if (i0.len() as u64) < params.min_partition || (i1.len() as u64) < params.min_partition {
        return Err(session.abort(AbortReason::UndersizedPartition));
    }

    // syndromes for both partitions
    timer.enter("decoding");
    let x0 = restrict(&bits, &i0);
    let x1 = restrict(&bits, &i1);
    let sigma0 = chunked_syndrome(matrix, &x0)?;
    let sigma1 = chunked_syndrome(matrix, &x1)?;

    // hash keys, expand, encrypt
    timer.enter("PA");
    let mut draw_seed = |n: usize| -> Vec<u8> {
        let mut bytes = vec![0u8; (n + params.lambda_pqs).div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        unpack_bits(&bytes, n + params.lambda_pqs).expect("sized")
    };
    let s0 = draw_seed(x0.len());
    let s1 = draw_seed(x1.len());
    let e0 = encrypt(&x0, &s0, m0, params)?;
    let e1 = encrypt(&x1, &s1, m1, params)?;

    let mut w = FieldWriter::new();
    w.put_u64(sigma0.len() as u64)
        .put(&pack_bits(&sigma0))
        .put_u64(sigma1.len() as u64)
        .put(&pack_bits(&sigma1))
        .put(&pack_bits(&s0))
        .put(&pack_bits(&s1))
        .put(&pack_bits(&e0))
        .put(&pack_bits(&e1));
    session.send(tags::OT_PAYLOAD, w.finish())?;

    let status = session.recv_expect(tags::OT_STATUS)?;
    if status != [0] {
        return Err(ProtocolError::Malformed(tags::OT_STATUS));
    }
    Ok(SenderAttempt {
        n0: i0.len(),
        n1: i1.len(),
        q_leak: sigma0.len() + sigma1.len(),
        received: two_lambda as u64,
    })
}

fn encrypt(
    x: &[u8],
    seed_bits: &[u8],
    message: &[u8],
    params: &OtParams,
) -> Result<Vec<u8>, ProtocolError> {
    let seed = ToeplitzSeed::from_stream(seed_bits, x.len(), params.lambda_pqs)?;
    let key = toeplitz_hash(&seed, x)?;
    let pad = prg_expand(&pack_bits(&key), message.len());
    Ok(xor_bits(&pad, message))
}

/// Runs the receiving side; returns m_b.
pub fn run_ot_receiver(
    params: &OtParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<DetectionSource>,
    chan: &mut dyn Channel,
    choice: u8,
    rng: &mut dyn RngCore,
) -> Result<OtReceiverOutcome, ProtocolError> {
    assert!(choice <= 1);
    let mut session = SessionChannel::new(chan, tags::OT_ABORT);
    let mut timer = PhaseTimer::new();
    let mut attempts = 0u32;
    let message = loop {
        attempts += 1;
        match receiver_attempt(params, matrix, stream, &mut session, &mut timer, choice, rng) {
            Ok(message) => break message,
            Err(e) if attempts <= params.max_retries
                && e.abort_reason().is_some_and(AbortReason::retryable) =>
            {
                continue;
            }
            Err(e) => return Err(e),
        }
    };
    let mut report = RunReport {
        protocol: "ot".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "receiver");
    report.put("attempts", attempts);
    Ok(OtReceiverOutcome {
        message,
        report,
        transcript: session.transcript,
    })
}

fn receiver_attempt(
    params: &OtParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<DetectionSource>,
    session: &mut SessionChannel,
    timer: &mut PhaseTimer,
    choice: u8,
    rng: &mut dyn RngCore,
) -> Result<Vec<u8>, ProtocolError> {
    let two_lambda = (2 * params.lambda_ot) as usize;

    // accumulate detections until 2*lambda_ot pulses arrived
    timer.enter("q-receive");
    let start = stream.next_index();
    let mut records = Vec::new();
    let mut detected = 0usize;
    while detected < two_lambda {
        let out = stream.read(4096, session.inner())?;
        detected += out.records.iter().filter(|d| d.detected).count();
        records.extend(out.records);
        if out.end_of_stream {
            return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
        }
    }
    let consumed = records.len() as u64;
    let lambda_set: Vec<u64> = records
        .iter()
        .filter(|d| d.outcome.is_some())
        .map(|d| d.index)
        .take(two_lambda)
        .collect();
    let outcomes: Vec<u8> = lambda_set
        .iter()
        .map(|&i| records[(i - start) as usize].outcome.expect("detected"))
        .collect();
    let bases: Vec<u8> = lambda_set
        .iter()
        .map(|&i| records[(i - start) as usize].basis)
        .collect();
    let mut w = FieldWriter::new();
    w.put_u64(consumed).put(&encode_index_runs(&lambda_set));
    session.send(tags::OT_RECEIVED, w.finish())?;

    // commit to every measured value and basis
    timer.enter("commitment");
    let (t_bits, d_bits) = commit_string(&outcomes, &params.commit, rng);
    let (t_bases, d_bases) = commit_string(&bases, &params.commit, rng);
    session.send(
        tags::OT_COMMITMENTS,
        encode_commitments(&t_bits, &t_bases, &params.commit),
    )?;

    let payload = session.recv_expect(tags::OT_TEST_SET)?;
    let test_set =
        decode_index_runs(&payload).ok_or(ProtocolError::Malformed(tags::OT_TEST_SET))?;
    if test_set.len() != params.lambda_ot as usize
        || test_set.iter().any(|&j| j >= two_lambda as u64)
    {
        return Err(ProtocolError::Malformed(tags::OT_TEST_SET));
    }
    let mut openings = Vec::with_capacity(2 * test_set.len());
    for &j in &test_set {
        openings.push(&d_bits[j as usize]);
        openings.push(&d_bases[j as usize]);
    }
    session.send(tags::OT_OPENINGS, encode_openings(&openings, &params.commit))?;

    // basis reconciliation: the matched set is decoded regardless of the
    // choice bit, which only picks which label the two sets carry
    let payload = session.recv_expect(tags::OT_BASES)?;
    let their_bases = unpack_bits(&payload, two_lambda)
        .ok_or(ProtocolError::Malformed(tags::OT_BASES))?;
    let in_test: std::collections::HashSet<u64> = test_set.iter().copied().collect();
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for j in 0..two_lambda as u64 {
        if in_test.contains(&j) {
            continue;
        }
        if their_bases[j as usize] == bases[j as usize] {
            matched.push(j);
        } else {
            unmatched.push(j);
        }
    }
    if (matched.len() as u64) < params.min_partition
        || (unmatched.len() as u64) < params.min_partition
    {
        return Err(session.abort(AbortReason::UndersizedPartition));
    }
    let (i0, i1) = if choice == 0 {
        (&matched, &unmatched)
    } else {
        (&unmatched, &matched)
    };
    let mut w = FieldWriter::new();
    w.put(&encode_index_runs(i0)).put(&encode_index_runs(i1));
    session.send(tags::OT_PARTITION, w.finish())?;

    // error correction on the matched partition
    timer.enter("decoding");
    let payload = session.recv_expect(tags::OT_PAYLOAD)?;
    let mut r = FieldReader::new(&payload);
    let take_bits = |r: &mut FieldReader, n: usize| -> Option<Vec<u8>> {
        r.take().and_then(|f| unpack_bits(f, n))
    };
    let sigma0_len = r.take_u64().ok_or(ProtocolError::Malformed(tags::OT_PAYLOAD))? as usize;
    let sigma0 = take_bits(&mut r, sigma0_len);
    let sigma1_len = r.take_u64().ok_or(ProtocolError::Malformed(tags::OT_PAYLOAD))? as usize;
    let sigma1 = take_bits(&mut r, sigma1_len);
    let n0 = i0.len();
    let n1 = i1.len();
    let s0 = take_bits(&mut r, n0 + params.lambda_pqs);
    let s1 = take_bits(&mut r, n1 + params.lambda_pqs);
    let e0 = take_bits(&mut r, params.w);
    let e1 = take_bits(&mut r, params.w);
    let (Some(sigma0), Some(sigma1), Some(s0), Some(s1), Some(e0), Some(e1)) =
        (sigma0, sigma1, s0, s1, e0, e1)
    else {
        return Err(ProtocolError::Malformed(tags::OT_PAYLOAD));
    };

    let x_tilde = restrict(&outcomes, &matched);
    let sigma_b = if choice == 0 { &sigma0 } else { &sigma1 };
    let decode = chunked_decode(matrix, params.q_tol, &x_tilde, sigma_b, 60)?;
    if !decode.success {
        return Err(session.abort(AbortReason::DecodeFailure));
    }

    // recover m_b
    timer.enter("PA");
    let (s_b, e_b) = if choice == 0 { (&s0, &e0) } else { (&s1, &e1) };
    let seed = ToeplitzSeed::from_stream(s_b, decode.x_guess.len(), params.lambda_pqs)?;
    let key = toeplitz_hash(&seed, &decode.x_guess)?;
    let pad = prg_expand(&pack_bits(&key), params.w);
    let message = xor_bits(&pad, e_b);
    session.send(tags::OT_STATUS, vec![0])?;
    Ok(message)
}

fn encode_commitments(
    t_bits: &[Commitment],
    t_bases: &[Commitment],
    params: &CommitParams,
) -> Vec<u8> {
    let cb = params.commitment_bytes();
    let mut out = Vec::with_capacity(8 + 2 * cb * t_bits.len());
    out.extend_from_slice(&(t_bits.len() as u64).to_be_bytes());
    for t in t_bits.iter().chain(t_bases) {
        debug_assert_eq!(t.bits.len(), cb);
        out.extend_from_slice(&t.bits);
    }
    out
}

fn decode_commitments(
    payload: &[u8],
    expected: usize,
    params: &CommitParams,
) -> Result<(Vec<Commitment>, Vec<Commitment>), ProtocolError> {
    let cb = params.commitment_bytes();
    let malformed = || ProtocolError::Malformed(tags::OT_COMMITMENTS);
    if payload.len() < 8 {
        return Err(malformed());
    }
    let count = u64::from_be_bytes(payload[..8].try_into().unwrap()) as usize;
    if count != expected || payload.len() != 8 + 2 * cb * count {
        return Err(malformed());
    }
    let parse = |off: usize| -> Vec<Commitment> {
        (0..count)
            .map(|i| Commitment {
                bits: payload[off + i * cb..off + (i + 1) * cb].to_vec(),
                n_bits: params.lambda_bs,
            })
            .collect()
    };
    Ok((parse(8), parse(8 + cb * count)))
}

fn encode_openings(openings: &[&Decommitment], params: &CommitParams) -> Vec<u8> {
    let nb = params.nonce_bytes();
    let mut out = Vec::with_capacity(openings.len() * (nb + 1));
    for d in openings {
        debug_assert_eq!(d.nonce.len(), nb);
        out.extend_from_slice(&d.nonce);
        out.push(d.bit);
    }
    out
}

/// Decodes interleaved (value, basis) opening pairs.
fn decode_openings(
    payload: &[u8],
    pairs: usize,
    params: &CommitParams,
) -> Result<Vec<(Decommitment, Decommitment)>, ProtocolError> {
    let nb = params.nonce_bytes();
    let rec = nb + 1;
    if payload.len() != 2 * pairs * rec {
        return Err(ProtocolError::Malformed(tags::OT_OPENINGS));
    }
    let parse_one = |off: usize| -> Result<Decommitment, ProtocolError> {
        let bit = payload[off + nb];
        if bit > 1 {
            return Err(ProtocolError::Malformed(tags::OT_OPENINGS));
        }
        Ok(Decommitment {
            bit,
            nonce: payload[off..off + nb].to_vec(),
        })
    };
    (0..pairs)
        .map(|i| Ok((parse_one(2 * i * rec)?, parse_one((2 * i + 1) * rec)?)))
        .collect()
}
