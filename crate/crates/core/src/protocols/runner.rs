//! In-process execution of both parties over the loopback transport,
//! used by `--role both` runs, the test suites, and the Python bindings.

use crate::ecc::ParityCheckMatrix;
use crate::gc::{AlignedStream, DetectionSource, EmissionSource};
use crate::hwsim::ChannelProfile;
use crate::transport::loopback_pair;

use super::ot::{run_ot_receiver, run_ot_sender, OtParams, OtReceiverOutcome, OtSenderOutcome};
use super::qkd::{run_qkd_receiver, run_qkd_sender, QkdOutcome, QkdParams};
use super::token::{run_token_holder, run_token_issuer, TokenParams, TokenVerdict};
use super::{party_rng, ProtocolError};
use crate::report::RunReport;

fn session_id(profile: &ChannelProfile) -> u64 {
    u64::from_be_bytes(profile.seed[..8].try_into().expect("32-byte seed"))
}

/// Spawns the detection side on a helper thread and runs the emission
/// side here, returning both results once both are done.
fn run_both<A, B, RA, RB>(profile: &ChannelProfile, alice: A, bob: B) -> (RA, RB)
where
    A: FnOnce(
        &mut AlignedStream<EmissionSource>,
        &mut dyn crate::transport::Channel,
    ) -> RA,
    B: FnOnce(&mut AlignedStream<DetectionSource>, &mut dyn crate::transport::Channel) -> RB
        + Send
        + 'static,
    RB: Send + 'static,
{
    let (mut chan_a, mut chan_b) = loopback_pair();
    let sid = session_id(profile);
    let mut stream_a = AlignedStream::new(sid, EmissionSource::new(profile.clone()));
    let profile_b = profile.clone();
    let handle = std::thread::spawn(move || {
        let mut stream_b = AlignedStream::new(sid, DetectionSource::new(profile_b));
        stream_b
            .start_accept(&mut chan_b)
            .expect("stream handshake");
        bob(&mut stream_b, &mut chan_b)
    });
    stream_a
        .start_initiate(&mut chan_a)
        .expect("stream handshake");
    let ra = alice(&mut stream_a, &mut chan_a);
    let rb = handle.join().expect("detection-side thread");
    (ra, rb)
}

/// One oblivious transfer over the loopback: the sender inputs two w-bit
/// messages, the receiver a choice bit.
pub fn ot_loopback(
    profile: &ChannelProfile,
    params: &OtParams,
    matrix: &ParityCheckMatrix,
    m0: Vec<u8>,
    m1: Vec<u8>,
    choice: u8,
) -> (
    Result<OtSenderOutcome, ProtocolError>,
    Result<OtReceiverOutcome, ProtocolError>,
) {
    let params_b = params.clone();
    let matrix_b = matrix.clone();
    let seed = profile.seed;
    run_both(
        profile,
        |stream, chan| {
            let mut rng = party_rng(&seed, "ot-sender");
            run_ot_sender(params, matrix, stream, chan, &m0, &m1, &mut rng)
        },
        move |stream, chan| {
            let mut rng = party_rng(&seed, "ot-receiver");
            run_ot_receiver(&params_b, &matrix_b, stream, chan, choice, &mut rng)
        },
    )
}

/// One key-distribution run over the loopback.
pub fn qkd_loopback(
    profile: &ChannelProfile,
    params: &QkdParams,
    matrix: &ParityCheckMatrix,
) -> (
    Result<QkdOutcome, ProtocolError>,
    Result<QkdOutcome, ProtocolError>,
) {
    let params_b = params.clone();
    let matrix_b = matrix.clone();
    let seed = profile.seed;
    run_both(
        profile,
        |stream, chan| {
            let mut rng = party_rng(&seed, "qkd-sender");
            run_qkd_sender(params, matrix, stream, chan, &mut rng)
        },
        move |stream, chan| run_qkd_receiver(&params_b, &matrix_b, stream, chan),
    )
}

/// One token issuance and presentation over the loopback. The holder
/// presents at `point` when given, else at a random point.
pub fn token_loopback(
    profile: &ChannelProfile,
    params: &TokenParams,
    point: Option<Vec<u8>>,
) -> (
    Result<(TokenVerdict, RunReport), ProtocolError>,
    Result<(TokenVerdict, RunReport), ProtocolError>,
) {
    let params_b = params.clone();
    let seed = profile.seed;
    run_both(
        profile,
        |stream, chan| run_token_issuer(params, stream, chan),
        move |stream, chan| {
            let mut rng = party_rng(&seed, "token-holder");
            run_token_holder(&params_b, stream, chan, &mut rng, point)
        },
    )
}
