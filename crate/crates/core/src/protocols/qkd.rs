//! Key distribution pipeline: sifting, parameter estimation, syndrome
//! error correction, a correctness hash, and privacy amplification.
//!
//! The final length comes straight from the finite-size bound evaluated
//! at the run's actual leak, so a successful run hands both parties
//! exactly that many identical secret bits. Classical leakage is
//! accounted as syndrome bits plus correctness-hash bits plus the
//! disclosed sample.

use rand_core::RngCore;

use crate::bits::{
    decode_index_runs, encode_index_runs, pack_bits, restrict, unpack_bits, FieldReader,
    FieldWriter,
};
use crate::bounds::qkd_final_length;
use crate::crypto::{toeplitz_hash, ToeplitzSeed};
use crate::ecc::{chunked_decode, chunked_syndrome, ParityCheckMatrix};
use crate::gc::{AlignedStream, DetectionSource, EmissionSource};
use crate::report::{PhaseTimer, RunReport};
use crate::transport::{tags, Channel};

use super::{sample_positions, transcript_digest, AbortReason, ProtocolError, SessionChannel};

#[derive(Debug, Clone)]
pub struct QkdParams {
    /// Pulses read from the stream in one run.
    pub n_pulses: u64,
    pub q_tol: f64,
    pub eps_sec: f64,
    /// Correctness-hash length in bits; the correctness failure
    /// probability is 2^-r.
    pub r_bits: usize,
    /// Sample size constant: k = k_factor * ceil(sqrt(n)).
    pub k_factor: u64,
}

impl QkdParams {
    pub fn desk_scale(n_pulses: u64) -> Self {
        Self {
            n_pulses,
            q_tol: 0.02,
            eps_sec: 1e-3,
            r_bits: 32,
            k_factor: 10,
        }
    }

    fn eps_cor(&self) -> f64 {
        (2f64).powi(-(self.r_bits as i32))
    }
}

#[derive(Debug, Clone)]
pub struct QkdOutcome {
    /// The final secret key, bit per element.
    pub key: Vec<u8>,
    pub report: RunReport,
}

/// Splits the sifted budget into raw length and sample length.
fn split_lengths(sifted: usize, k_factor: u64) -> Result<(usize, usize), ProtocolError> {
    let rule = |n: u64| k_factor * (n as f64).sqrt().ceil() as u64;
    let mut n = sifted as u64;
    for _ in 0..8 {
        n = (sifted as u64).saturating_sub(rule(n));
    }
    let k = sifted as u64 - n;
    if n == 0 || k == 0 {
        return Err(ProtocolError::Abort(AbortReason::NoExtractableKey));
    }
    Ok((n as usize, k as usize))
}

/// Runs the emitting side; on success both parties hold the same key.
pub fn run_qkd_sender(
    params: &QkdParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<EmissionSource>,
    chan: &mut dyn Channel,
    rng: &mut dyn RngCore,
) -> Result<QkdOutcome, ProtocolError> {
    let mut session = SessionChannel::new(chan, tags::QKD_ABORT);
    let mut timer = PhaseTimer::new();

    // exchange: both sides consume the same pulse window
    timer.enter("q-receive");
    let start = stream.next_index();
    let out = stream.read(params.n_pulses as usize, session.inner())?;
    if out.records.len() < params.n_pulses as usize {
        return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
    }
    let emissions = out.records;

    let payload = session.recv_expect(tags::QKD_RECEIVED)?;
    let lambda = decode_index_runs(&payload).ok_or(ProtocolError::Malformed(tags::QKD_RECEIVED))?;
    let bits: Vec<u8> = lambda
        .iter()
        .map(|&i| emissions[(i - start) as usize].bit)
        .collect();
    let bases: Vec<u8> = lambda
        .iter()
        .map(|&i| emissions[(i - start) as usize].basis)
        .collect();

    // sifting: announce bases over the received set, learn the matched set
    timer.enter("sifting");
    session.send(tags::QKD_BASES, pack_bits(&bases))?;
    let payload = session.recv_expect(tags::QKD_SIFT_SET)?;
    let matched =
        decode_index_runs(&payload).ok_or(ProtocolError::Malformed(tags::QKD_SIFT_SET))?;
    let sifted = restrict(&bits, &matched);

    // parameter estimation on a random sample
    timer.enter("estimation");
    let (n, k) = split_lengths(sifted.len(), params.k_factor)?;
    let sample = sample_positions(sifted.len() as u64, k as u64, rng);
    session.send(tags::QKD_SAMPLE_SET, encode_index_runs(&sample))?;
    let payload = session.recv_expect(tags::QKD_SAMPLE_BITS)?;
    let their_sample =
        unpack_bits(&payload, k).ok_or(ProtocolError::Malformed(tags::QKD_SAMPLE_BITS))?;
    let mine = restrict(&sifted, &sample);
    let errors = crate::bits::hamming(&mine, &their_sample);
    let estimate = errors as f64 / k as f64;
    if estimate > params.q_tol {
        return Err(session.abort(AbortReason::QberTooHigh));
    }

    // error correction on the remaining raw key
    timer.enter("correction");
    let in_sample: std::collections::HashSet<u64> = sample.iter().copied().collect();
    let raw_positions: Vec<u64> = (0..sifted.len() as u64)
        .filter(|p| !in_sample.contains(p))
        .collect();
    let raw = restrict(&sifted, &raw_positions);
    debug_assert_eq!(raw.len(), n);
    let syndrome = chunked_syndrome(matrix, &raw)?;
    let mut w = FieldWriter::new();
    w.put_u64(syndrome.len() as u64).put(&pack_bits(&syndrome));
    session.send(tags::QKD_SYNDROME, w.finish())?;

    // correctness hash
    let check_seed = draw_bits(rng, raw.len() + params.r_bits - 1);
    let check = toeplitz_hash(
        &ToeplitzSeed::new(check_seed.clone(), raw.len(), params.r_bits)?,
        &raw,
    )?;
    let mut w = FieldWriter::new();
    w.put(&pack_bits(&check_seed)).put(&pack_bits(&check));
    session.send(tags::QKD_CHECK, w.finish())?;

    // privacy amplification at exactly the bound's final length
    timer.enter("PA");
    let l = qkd_final_length(
        params.eps_sec,
        params.eps_cor(),
        n as u64,
        k as u64,
        params.q_tol,
        syndrome.len() as f64,
    )?;
    if l < 1.0 {
        return Err(session.abort(AbortReason::NoExtractableKey));
    }
    let l = l as usize;
    let pa_seed = draw_bits(rng, raw.len() + l - 1);
    let key = toeplitz_hash(&ToeplitzSeed::new(pa_seed.clone(), raw.len(), l)?, &raw)?;
    let mut w = FieldWriter::new();
    w.put_u64(l as u64).put(&pack_bits(&pa_seed));
    session.send(tags::QKD_PA_SEED, w.finish())?;

    let status = session.recv_expect(tags::QKD_STATUS)?;
    if status != [0] {
        return Err(ProtocolError::Malformed(tags::QKD_STATUS));
    }

    let mut report = RunReport {
        protocol: "qkd".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "sender");
    report.put("received", lambda.len());
    report.put("sifted", sifted.len());
    report.put("n", n);
    report.put("k", k);
    report.put("qber_estimate", format!("{estimate:.5}"));
    report.put("q_leak_bits", syndrome.len());
    report.put(
        "leaked_bits_total",
        syndrome.len() + params.r_bits + k,
    );
    report.put("final_length", key.len());
    Ok(QkdOutcome { key, report })
}

/// Runs the measuring side.
pub fn run_qkd_receiver(
    params: &QkdParams,
    matrix: &ParityCheckMatrix,
    stream: &mut AlignedStream<DetectionSource>,
    chan: &mut dyn Channel,
) -> Result<QkdOutcome, ProtocolError> {
    let mut session = SessionChannel::new(chan, tags::QKD_ABORT);
    let mut timer = PhaseTimer::new();

    timer.enter("q-receive");
    let start = stream.next_index();
    let out = stream.read(params.n_pulses as usize, session.inner())?;
    if out.records.len() < params.n_pulses as usize {
        return Err(ProtocolError::Stream(crate::gc::StreamError::NotRunning));
    }
    let detections = out.records;
    let lambda: Vec<u64> = detections
        .iter()
        .filter(|d| d.outcome.is_some())
        .map(|d| d.index)
        .collect();
    session.send(tags::QKD_RECEIVED, encode_index_runs(&lambda))?;
    let outcomes: Vec<u8> = lambda
        .iter()
        .map(|&i| detections[(i - start) as usize].outcome.expect("received"))
        .collect();
    let bases: Vec<u8> = lambda
        .iter()
        .map(|&i| detections[(i - start) as usize].basis)
        .collect();

    timer.enter("sifting");
    let payload = session.recv_expect(tags::QKD_BASES)?;
    let their_bases =
        unpack_bits(&payload, lambda.len()).ok_or(ProtocolError::Malformed(tags::QKD_BASES))?;
    let matched: Vec<u64> = (0..lambda.len() as u64)
        .filter(|&p| their_bases[p as usize] == bases[p as usize])
        .collect();
    session.send(tags::QKD_SIFT_SET, encode_index_runs(&matched))?;
    let sifted = restrict(&outcomes, &matched);

    timer.enter("estimation");
    let (n, k) = split_lengths(sifted.len(), params.k_factor)?;
    let payload = session.recv_expect(tags::QKD_SAMPLE_SET)?;
    let sample =
        decode_index_runs(&payload).ok_or(ProtocolError::Malformed(tags::QKD_SAMPLE_SET))?;
    if sample.len() != k || sample.iter().any(|&p| p >= sifted.len() as u64) {
        return Err(ProtocolError::Malformed(tags::QKD_SAMPLE_SET));
    }
    session.send(tags::QKD_SAMPLE_BITS, pack_bits(&restrict(&sifted, &sample)))?;

    timer.enter("correction");
    let in_sample: std::collections::HashSet<u64> = sample.iter().copied().collect();
    let raw_positions: Vec<u64> = (0..sifted.len() as u64)
        .filter(|p| !in_sample.contains(p))
        .collect();
    let noisy = restrict(&sifted, &raw_positions);
    debug_assert_eq!(noisy.len(), n);

    let payload = session.recv_expect(tags::QKD_SYNDROME)?;
    let mut r = FieldReader::new(&payload);
    let q_len = r
        .take_u64()
        .ok_or(ProtocolError::Malformed(tags::QKD_SYNDROME))? as usize;
    let syndrome = r
        .take()
        .and_then(|f| unpack_bits(f, q_len))
        .ok_or(ProtocolError::Malformed(tags::QKD_SYNDROME))?;
    let decode = chunked_decode(matrix, params.q_tol.max(0.005), &noisy, &syndrome, 60)?;
    if !decode.success {
        return Err(session.abort(AbortReason::DecodeFailure));
    }
    let corrected = decode.x_guess;

    let payload = session.recv_expect(tags::QKD_CHECK)?;
    let mut r = FieldReader::new(&payload);
    let check_seed = r
        .take()
        .and_then(|f| unpack_bits(f, n + params.r_bits - 1))
        .ok_or(ProtocolError::Malformed(tags::QKD_CHECK))?;
    let their_check = r
        .take()
        .and_then(|f| unpack_bits(f, params.r_bits))
        .ok_or(ProtocolError::Malformed(tags::QKD_CHECK))?;
    let my_check = toeplitz_hash(
        &ToeplitzSeed::new(check_seed, n, params.r_bits)?,
        &corrected,
    )?;
    if my_check != their_check {
        return Err(session.abort(AbortReason::HashMismatch));
    }

    timer.enter("PA");
    let payload = session.recv_expect(tags::QKD_PA_SEED)?;
    let mut r = FieldReader::new(&payload);
    let l = r
        .take_u64()
        .ok_or(ProtocolError::Malformed(tags::QKD_PA_SEED))? as usize;
    let expected_l = qkd_final_length(
        params.eps_sec,
        params.eps_cor(),
        n as u64,
        k as u64,
        params.q_tol,
        q_len as f64,
    )?;
    if l == 0 || (l as f64) > expected_l {
        // the peer may not stretch the key beyond what the bound allows
        return Err(ProtocolError::Malformed(tags::QKD_PA_SEED));
    }
    let pa_seed = r
        .take()
        .and_then(|f| unpack_bits(f, n + l - 1))
        .ok_or(ProtocolError::Malformed(tags::QKD_PA_SEED))?;
    let key = toeplitz_hash(&ToeplitzSeed::new(pa_seed, n, l)?, &corrected)?;
    session.send(tags::QKD_STATUS, vec![0])?;

    let mut report = RunReport {
        protocol: "qkd".into(),
        phases: timer.finish(),
        transcript_sha256: transcript_digest(&session.transcript),
        ..Default::default()
    };
    report.put("role", "receiver");
    report.put("received", lambda.len());
    report.put("sifted", sifted.len());
    report.put("n", n);
    report.put("k", k);
    report.put("q_leak_bits", q_len);
    report.put("leaked_bits_total", q_len + params.r_bits + k);
    report.put("final_length", key.len());
    Ok(QkdOutcome { key, report })
}

fn draw_bits(rng: &mut dyn RngCore, n: usize) -> Vec<u8> {
    let mut bytes = vec![0u8; n.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    unpack_bits(&bytes, n).expect("sized")
}
