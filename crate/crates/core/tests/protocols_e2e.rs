//! End-to-end protocol runs over the in-process loopback.

use qstack_core::bits::{decode_index_runs, hamming, restrict, unpack_bits, FieldReader};
use qstack_core::bounds::qkd_final_length;
use qstack_core::crypto::{prg_expand, toeplitz_hash, ToeplitzSeed};
use qstack_core::ecc::gallager;
use qstack_core::gc::{AlignedStream, DetectionSource, EmissionSource};
use qstack_core::hwsim::{detections_range, ChannelProfile};
use qstack_core::protocols::ot::OtParams;
use qstack_core::protocols::qkd::QkdParams;
use qstack_core::protocols::runner::{ot_loopback, qkd_loopback, token_loopback};
use qstack_core::protocols::token::{
    token_validate, TokenHolder, TokenIssuer, TokenParams, TokenVerdict,
};
use qstack_core::protocols::{
    party_rng, AbortReason, Direction, ProtocolError, SessionChannel,
};
use qstack_core::transport::{loopback_pair, tags};
use rand_core::RngCore;

fn profile(tag: u8, qber: f64) -> ChannelProfile {
    let mut seed = [0u8; 32];
    seed[0] = tag;
    seed[1] = 0xA5;
    ChannelProfile {
        qber,
        mu: 40.0, // detection probability indistinguishable from 1
        seed,
        ..ChannelProfile::default()
    }
}

fn message(tag: u8, w: usize) -> Vec<u8> {
    let mut rng = party_rng(&[tag; 32], "message");
    (0..w).map(|_| (rng.next_u32() & 1) as u8).collect()
}

#[test]
fn ot_noiseless_recovers_each_message() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = OtParams::desk_scale(1 << 14, 128);
    let m0 = message(1, 128);
    let m1 = message(2, 128);
    for choice in [0u8, 1] {
        let p = profile(10 + choice, 0.0);
        let (sender, receiver) = ot_loopback(&p, &params, &matrix, m0.clone(), m1.clone(), choice);
        let sender = sender.unwrap();
        let receiver = receiver.unwrap();
        let expected = if choice == 0 { &m0 } else { &m1 };
        assert_eq!(&receiver.message, expected, "choice {choice}");
        assert_eq!(sender.report.get("attempts"), Some("1"));
    }
}

#[test]
fn ot_noisy_channel_recovers_messages() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = OtParams::desk_scale(1 << 14, 128);
    let m0 = message(3, 128);
    let m1 = message(4, 128);
    for choice in [0u8, 1] {
        let p = profile(20 + choice, 0.02);
        let (sender, receiver) = ot_loopback(&p, &params, &matrix, m0.clone(), m1.clone(), choice);
        sender.unwrap();
        let receiver = receiver.unwrap();
        let expected = if choice == 0 { &m0 } else { &m1 };
        assert_eq!(&receiver.message, expected, "choice {choice}");
    }
}

#[test]
fn ot_transcripts_deterministic_for_fixed_seed() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = OtParams::desk_scale(1 << 13, 64);
    let p = profile(30, 0.02);
    let m0 = message(5, 64);
    let m1 = message(6, 64);
    let digest = |b| {
        let (s, r) = ot_loopback(&p, &params, &matrix, m0.clone(), m1.clone(), b);
        (
            s.unwrap().report.transcript_sha256,
            r.unwrap().report.transcript_sha256,
        )
    };
    assert_eq!(digest(0), digest(0));
}

/// The receiver's choice influences exactly one message: the labeling of
/// the partition pair. Every other byte he sends is identical between
/// the two choices.
#[test]
fn ot_receiver_messages_independent_of_choice_except_labeling() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = OtParams::desk_scale(1 << 13, 64);
    let p = profile(31, 0.02);
    let m0 = message(7, 64);
    let m1 = message(8, 64);
    let run = |b| {
        let (_, r) = ot_loopback(&p, &params, &matrix, m0.clone(), m1.clone(), b);
        r.unwrap().transcript
    };
    let t0 = run(0);
    let t1 = run(1);
    assert_eq!(t0.len(), t1.len());
    for (e0, e1) in t0.iter().zip(&t1) {
        if e0.direction != Direction::Sent {
            continue;
        }
        assert_eq!(e0.tag, e1.tag);
        if e0.tag == tags::OT_PARTITION {
            // the two run-length fields swap places
            let fields = |payload: &[u8]| {
                let mut r = FieldReader::new(payload);
                (r.take().unwrap().to_vec(), r.take().unwrap().to_vec())
            };
            let (a0, a1) = fields(&e0.payload);
            let (b0, b1) = fields(&e1.payload);
            assert_eq!(a0, b1, "partition labels must swap");
            assert_eq!(a1, b0, "partition labels must swap");
        } else {
            assert_eq!(
                e0.payload, e1.payload,
                "tag 0x{:02x} depends on the choice bit",
                e0.tag
            );
        }
    }
}

/// Decrypting the other ciphertext with the undecodable partition's
/// outcomes yields a string independent of the other message.
#[test]
fn ot_other_ciphertext_reveals_nothing() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let w = 128usize;
    let params = OtParams::desk_scale(1 << 13, w);
    let m0 = message(9, w);
    let m1 = message(10, w);
    let mut total_distance = 0usize;
    let mut total_bits = 0usize;
    for round in 0..30u8 {
        let p = profile(100 + round, 0.02);
        let (_, receiver) = ot_loopback(&p, &params, &matrix, m0.clone(), m1.clone(), 0);
        let receiver = receiver.unwrap();
        // reconstruct the receiver's view of the unchosen partition from
        // the transcript and the shared emulation seed
        let t = &receiver.transcript;
        let find = |dir: Direction, tag: u8| {
            t.iter()
                .find(|e| e.direction == dir && e.tag == tag)
                .map(|e| e.payload.clone())
                .expect("message present")
        };
        let received = find(Direction::Sent, tags::OT_RECEIVED);
        let mut r = FieldReader::new(&received);
        let consumed = r.take_u64().unwrap() as usize;
        let lambda = decode_index_runs(r.take().unwrap()).unwrap();
        let partition = find(Direction::Sent, tags::OT_PARTITION);
        let mut r = FieldReader::new(&partition);
        let _i0 = r.take().unwrap();
        let i1 = decode_index_runs(r.take().unwrap()).unwrap();

        let payload = find(Direction::Received, tags::OT_PAYLOAD);
        let mut r = FieldReader::new(&payload);
        let sigma0_len = r.take_u64().unwrap() as usize;
        let _sigma0 = r.take().unwrap();
        let _sigma1_len = r.take_u64().unwrap();
        let _sigma1 = r.take().unwrap();
        let _ = sigma0_len;
        let _s0 = r.take().unwrap();
        let s1 = unpack_bits(r.take().unwrap(), i1.len() + 256).unwrap();
        let _e0 = r.take().unwrap();
        let e1 = unpack_bits(r.take().unwrap(), w).unwrap();

        let detections = detections_range(&p, 0, consumed).unwrap();
        let outcomes: Vec<u8> = lambda
            .iter()
            .map(|&i| detections[i as usize].outcome.unwrap())
            .collect();
        let x_other = restrict(&outcomes, &i1);
        let seed = ToeplitzSeed::from_stream(&s1, x_other.len(), 256).unwrap();
        let key = toeplitz_hash(&seed, &x_other).unwrap();
        let pad = prg_expand(&qstack_core::bits::pack_bits(&key), w);
        let guess: Vec<u8> = pad.iter().zip(&e1).map(|(a, b)| a ^ b).collect();
        total_distance += hamming(&guess, &m1);
        total_bits += w;
    }
    let expected = total_bits as f64 / 2.0;
    let sigma = (total_bits as f64 * 0.25).sqrt();
    assert!(
        (total_distance as f64 - expected).abs() < 5.0 * sigma,
        "distance {total_distance} of {total_bits} bits strays from one half"
    );
}

#[test]
fn ot_commit_check_aborts_on_noisy_test_values() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = OtParams::desk_scale(1 << 12, 64);
    let p = profile(32, 0.2); // far above the 0.025 tolerance
    let (sender, receiver) = ot_loopback(&p, &params, &matrix, message(1, 64), message(2, 64), 0);
    match sender {
        Err(ProtocolError::Abort(AbortReason::CommitCheck)) => {}
        other => panic!("sender should abort on the spot check: {other:?}"),
    }
    match receiver {
        Err(ProtocolError::PeerAbort(AbortReason::CommitCheck)) => {}
        other => panic!("receiver should see the abort: {other:?}"),
    }
}

#[test]
fn ot_literal_check_mode_ignores_value_errors() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let mut params = OtParams::desk_scale(1 << 12, 64);
    params.step6_literal = true;
    params.max_retries = 1;
    let p = profile(33, 0.2);
    let (sender, _receiver) = ot_loopback(&p, &params, &matrix, message(1, 64), message(2, 64), 0);
    // the literal check counts only opening failures, so the run gets
    // past the spot check and dies much later, in decoding
    match sender {
        Err(ProtocolError::Abort(AbortReason::CommitCheck))
        | Err(ProtocolError::PeerAbort(AbortReason::CommitCheck)) => {
            panic!("literal mode must not abort at the spot check")
        }
        Err(_) => {}
        Ok(_) => panic!("a 20% qber run cannot decode"),
    }
}

#[test]
fn qkd_noiseless_keys_equal_at_exact_bound_length() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = QkdParams::desk_scale(1 << 16);
    let p = profile(40, 0.0);
    let (alice, bob) = qkd_loopback(&p, &params, &matrix);
    let alice = alice.unwrap();
    let bob = bob.unwrap();
    assert_eq!(alice.key, bob.key);
    assert!(!alice.key.is_empty());
    assert_eq!(alice.report.get("qber_estimate"), Some("0.00000"));

    // the key is exactly as long as the bound allows
    let n: u64 = alice.report.get("n").unwrap().parse().unwrap();
    let k: u64 = alice.report.get("k").unwrap().parse().unwrap();
    let q: f64 = alice.report.get("q_leak_bits").unwrap().parse().unwrap();
    let l = qkd_final_length(params.eps_sec, 2f64.powi(-32), n, k, params.q_tol, q).unwrap();
    assert_eq!(alice.key.len(), l as usize);

    // leak accounting: syndrome plus hash plus disclosed sample
    let leaked: u64 = alice
        .report
        .get("leaked_bits_total")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(leaked, q as u64 + 32 + k);
}

#[test]
fn qkd_aborts_when_qber_above_tolerance() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = QkdParams::desk_scale(1 << 14);
    let p = profile(41, 0.05);
    let (alice, bob) = qkd_loopback(&p, &params, &matrix);
    match alice {
        Err(ProtocolError::Abort(AbortReason::QberTooHigh)) => {}
        other => panic!("expected qber abort, got {other:?}"),
    }
    match bob {
        Err(ProtocolError::PeerAbort(AbortReason::QberTooHigh)) => {}
        other => panic!("expected peer qber abort, got {other:?}"),
    }
}

#[test]
fn qkd_transcripts_deterministic() {
    let matrix = gallager(512, 1024, 3, 7).unwrap();
    let params = QkdParams::desk_scale(1 << 16);
    let p = profile(42, 0.01);
    let run = || {
        let (a, b) = qkd_loopback(&p, &params, &matrix);
        (
            a.unwrap().report.transcript_sha256,
            b.unwrap().report.transcript_sha256,
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn token_honest_runs_validate_for_one_and_two_address_bits() {
    for m_bits in [1usize, 2] {
        let params = TokenParams {
            m_bits,
            n_per_block: 20_000,
            gamma_det: 0.9,
            gamma_err: 0.05,
        };
        let p = profile(50 + m_bits as u8, 0.02);
        let (issuer, holder) = token_loopback(&p, &params, None);
        let (verdict_i, _) = issuer.unwrap();
        let (verdict_h, _) = holder.unwrap();
        assert!(verdict_i.is_valid(), "M={m_bits}: {verdict_i:?}");
        assert_eq!(verdict_i, verdict_h);
    }
}

#[test]
fn token_aborts_on_detection_shortfall_naming_the_block() {
    let params = TokenParams {
        m_bits: 2,
        n_per_block: 10_000,
        gamma_det: 0.6,
        gamma_err: 0.05,
    };
    let mut p = profile(52, 0.02);
    p.mu = 0.5f64.ln().abs(); // detection probability one half
    let (issuer, holder) = token_loopback(&p, &params, None);
    match issuer {
        Err(ProtocolError::Abort(AbortReason::DetectionShortfall(block))) => {
            assert!(block < 2);
        }
        other => panic!("expected detection shortfall, got {other:?}"),
    }
    match holder {
        Err(ProtocolError::PeerAbort(AbortReason::DetectionShortfall(_))) => {}
        other => panic!("expected peer shortfall, got {other:?}"),
    }
}

/// Step-level run driving both parties manually, returning the pieces
/// the structural assertions need.
fn token_step_run(
    p: &ChannelProfile,
    params: &TokenParams,
    point: Vec<u8>,
    scripted_secret: Option<Vec<u8>>,
) -> (TokenIssuer, Vec<u8>, Vec<u8>, TokenVerdict, TokenVerdict) {
    use qstack_core::transport::Channel;

    /// Feeds scripted low bits before falling back to a real stream.
    struct ScriptedRng {
        script: Vec<u8>,
        pos: usize,
        inner: rand_chacha::ChaCha8Rng,
    }
    impl RngCore for ScriptedRng {
        fn next_u32(&mut self) -> u32 {
            if self.pos < self.script.len() {
                self.pos += 1;
                self.script[self.pos - 1] as u32
            } else {
                self.inner.next_u32()
            }
        }
        fn next_u64(&mut self) -> u64 {
            self.next_u32() as u64
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            self.inner.fill_bytes(dest);
        }
    }

    let (mut chan_a, mut chan_b) = loopback_pair();
    let sid = 77;
    let params_b = params.clone();
    let p_b = p.clone();
    let seed = p.seed;
    let handle = std::thread::spawn(move || {
        let mut stream = AlignedStream::new(sid, DetectionSource::new(p_b));
        stream.start_accept(&mut chan_b).unwrap();
        let mut session = SessionChannel::new(&mut chan_b, tags::TOKEN_ABORT);
        let mut rng = ScriptedRng {
            script: scripted_secret.unwrap_or_default(),
            pos: 0,
            inner: party_rng(&seed, "token-holder"),
        };
        let mut holder =
            TokenHolder::run_stage1(&params_b, &mut stream, &mut session, &mut rng).unwrap();
        let verdict1 = holder.present(&point, &mut session).unwrap();
        // a second presentation at the complementary point
        let other: Vec<u8> = point.iter().map(|b| b ^ 1).collect();
        let verdict2 = holder.present(&other, &mut session).unwrap();
        (
            holder.measured_bases().to_vec(),
            holder.secret().to_vec(),
            verdict1,
            verdict2,
        )
    });
    let mut stream = AlignedStream::new(sid, EmissionSource::new(p.clone()));
    stream.start_initiate(&mut chan_a).unwrap();
    let mut session = SessionChannel::new(&mut chan_a, tags::TOKEN_ABORT);
    let mut issuer = TokenIssuer::run_stage1(params, &mut stream, &mut session).unwrap();
    issuer.serve_choice(&mut session).unwrap();
    let _first = issuer.serve_presentation(&mut session).unwrap();
    let _second = issuer.serve_presentation(&mut session).unwrap();
    let (bases, secret, verdict1, verdict2) = handle.join().unwrap();
    let _ = chan_a.try_recv();
    (issuer, bases, secret, verdict1, verdict2)
}

#[test]
fn token_reconstruction_matches_only_at_presented_point() {
    let params = TokenParams {
        m_bits: 2,
        n_per_block: 5_000,
        gamma_det: 0.9,
        gamma_err: 0.05,
    };
    let p = profile(53, 0.02);
    let point = vec![1u8, 0];
    let (issuer, holder_bases, _, verdict1, verdict2) =
        token_step_run(&p, &params, point.clone(), None);
    assert!(verdict1.is_valid());
    assert_eq!(verdict2, TokenVerdict::Rejected, "double presentation");

    let index = (point[0] as usize) | ((point[1] as usize) << 1);
    for (i, recon) in issuer.reconstructions().into_iter().enumerate() {
        let recon = recon.expect("choice was broadcast");
        if i == index {
            assert_eq!(recon, &holder_bases[..], "agent at the presented point");
        } else {
            assert_ne!(recon, &holder_bases[..], "agent {i} must not reconstruct");
        }
    }
    issuer.events.check_order().unwrap();
}

/// Exhaustive single-bit truth table: for every (z, p) the masking
/// algebra hands the true bases to exactly the presented point's agent.
#[test]
fn token_single_bit_truth_table() {
    for z in [0u8, 1] {
        for p_bit in [0u8, 1] {
            let params = TokenParams {
                m_bits: 1,
                n_per_block: 2_000,
                gamma_det: 0.9,
                gamma_err: 0.05,
            };
            let prof = profile(60 + 2 * z + p_bit, 0.0);
            let (issuer, holder_bases, secret, verdict1, _) =
                token_step_run(&prof, &params, vec![p_bit], Some(vec![z]));
            assert_eq!(secret, vec![z], "scripted secret");
            assert!(verdict1.is_valid(), "(z={z}, p={p_bit})");
            let recon = issuer.reconstructions();
            let at_p = recon[p_bit as usize].unwrap();
            let at_other = recon[1 - p_bit as usize].unwrap();
            assert_eq!(at_p, &holder_bases[..]);
            let complfloor: Vec<u8> = holder_bases.iter().map(|b| b ^ 1).collect();
            assert_eq!(at_other, &complfloor[..]);
        }
    }
}

/// An issuer-side smoke check that measuring everything in one basis and
/// double-presenting fails where the honest single presentation
/// succeeds.
#[test]
fn token_fixed_basis_adversary_cannot_validate_both_points() {
    let mut rng = party_rng(&[77u8; 32], "adversary");
    let n = 10_000usize;
    let qber = 0.02;
    let gamma_err = 0.05;
    let mut honest_ok = 0;
    let mut double_ok = 0;
    let trials = 100;
    for _ in 0..trials {
        let issuer_bits: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
        let issuer_bases: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
        let noise = |bit: u8, rng: &mut dyn RngCore| {
            bit ^ u8::from((rng.next_u32() as f64 / 4294967296.0) < qber)
        };

        // honest holder measures in random bases
        let honest_bases: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
        let honest_outcomes: Vec<u8> = (0..n)
            .map(|j| {
                if honest_bases[j] == issuer_bases[j] {
                    noise(issuer_bits[j], &mut rng)
                } else {
                    (rng.next_u32() & 1) as u8
                }
            })
            .collect();
        let v = token_validate(
            &honest_outcomes,
            &issuer_bits,
            &issuer_bases,
            &honest_bases,
            gamma_err,
        )
        .unwrap();
        honest_ok += v.is_valid() as u32;

        // the adversary measures everything in basis zero and presents
        // everywhere, claiming matching reconstructions at both points
        let adv_outcomes: Vec<u8> = (0..n)
            .map(|j| {
                if issuer_bases[j] == 0 {
                    noise(issuer_bits[j], &mut rng)
                } else {
                    (rng.next_u32() & 1) as u8
                }
            })
            .collect();
        let at_zero = token_validate(
            &adv_outcomes,
            &issuer_bits,
            &issuer_bases,
            &vec![0u8; n],
            gamma_err,
        )
        .unwrap();
        let at_one = token_validate(
            &adv_outcomes,
            &issuer_bits,
            &issuer_bases,
            &vec![1u8; n],
            gamma_err,
        )
        .unwrap();
        double_ok += (at_zero.is_valid() && at_one.is_valid()) as u32;
    }
    assert!(honest_ok >= 99, "honest rate {honest_ok}/{trials}");
    assert_eq!(double_ok, 0, "double-spend rate must collapse");
}
