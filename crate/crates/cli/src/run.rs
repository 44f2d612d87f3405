//! Protocol execution: single-process loopback or one side of a
//! two-process run.

use anyhow::{anyhow, Context, Result};

use qstack_core::gc::{AlignedStream, DetectionSource, EmissionSource};
use qstack_core::hwsim::ChannelProfile;
use qstack_core::protocols::ot::{run_ot_receiver, run_ot_sender};
use qstack_core::protocols::qkd::{run_qkd_receiver, run_qkd_sender};
use qstack_core::protocols::runner;
use qstack_core::protocols::token::{run_token_holder, run_token_issuer};
use qstack_core::protocols::{party_rng, ProtocolError};
use qstack_core::report::RunReport;
use qstack_core::transport::{accept_once, connect, Channel};

use crate::config::{message_bits, RunConfig};
use crate::{Protocol, Role};

/// A completed run (exit 0) or a protocol abort (exit 2); setup and
/// usage problems surface as errors (exit 1).
pub enum RunStatus {
    Completed(Vec<RunReport>),
    Aborted(String),
}

pub fn cmd_run(
    config: &RunConfig,
    protocol: Protocol,
    role: Role,
    seed_override: Option<[u8; 32]>,
    eq4_literal: bool,
    step6_literal: bool,
) -> Result<RunStatus> {
    let profile = config.profile(seed_override)?;
    match role {
        Role::Both => run_both(config, protocol, &profile, eq4_literal, step6_literal),
        Role::Alice | Role::Bob => run_networked(
            config,
            protocol,
            role,
            &profile,
            eq4_literal,
            step6_literal,
        ),
    }
}

fn status_from<T>(
    results: Vec<std::result::Result<(T, RunReport), ProtocolError>>,
) -> Result<RunStatus>
where
    T: std::fmt::Debug,
{
    let mut reports = Vec::new();
    for res in results {
        match res {
            Ok((_, report)) => reports.push(report),
            Err(e) => {
                if let Some(reason) = e.abort_reason() {
                    return Ok(RunStatus::Aborted(reason.to_string()));
                }
                return Err(anyhow!(e));
            }
        }
    }
    Ok(RunStatus::Completed(reports))
}

fn run_both(
    config: &RunConfig,
    protocol: Protocol,
    profile: &ChannelProfile,
    eq4_literal: bool,
    step6_literal: bool,
) -> Result<RunStatus> {
    match protocol {
        Protocol::Ot => {
            let params = config.ot_params(eq4_literal, step6_literal);
            let matrix = config.matrix(&config.ot.matrix_path)?;
            let mut msg_rng = party_rng(&profile.seed, "cli-messages");
            let m0 = message_bits(&config.ot.m0_hex, params.w, &mut msg_rng)?;
            let m1 = message_bits(&config.ot.m1_hex, params.w, &mut msg_rng)?;
            let (sender, receiver) =
                runner::ot_loopback(profile, &params, &matrix, m0, m1, config.ot.choice);
            status_from(vec![
                sender.map(|o| ((), o.report)),
                receiver.map(|o| ((), o.report)),
            ])
        }
        Protocol::Qkd => {
            let params = config.qkd_params();
            let matrix = config.matrix(&config.qkd.matrix_path)?;
            let (alice, bob) = runner::qkd_loopback(profile, &params, &matrix);
            status_from(vec![
                alice.map(|o| ((), o.report)),
                bob.map(|o| ((), o.report)),
            ])
        }
        Protocol::Token => {
            let params = config.token_params();
            let (issuer, holder) = runner::token_loopback(profile, &params, config.token_point());
            let issuer = issuer.map(|(v, r)| ((), token_bound_fields(config, profile, r, v)));
            status_from(vec![issuer, holder.map(|(v, r)| ((), annotate(r, v)))])
        }
    }
}

fn run_networked(
    config: &RunConfig,
    protocol: Protocol,
    role: Role,
    profile: &ChannelProfile,
    eq4_literal: bool,
    step6_literal: bool,
) -> Result<RunStatus> {
    let session_id = u64::from_be_bytes(profile.seed[..8].try_into().expect("32-byte seed"));
    let mut chan: Box<dyn Channel> = match role {
        Role::Alice => {
            let addr = config
                .net
                .connect
                .as_ref()
                .context("net.connect required for --role alice")?;
            Box::new(connect(addr.as_str()).map_err(|e| anyhow!("peer unreachable: {e}"))?)
        }
        Role::Bob => {
            let addr = config
                .net
                .listen
                .as_ref()
                .context("net.listen required for --role bob")?;
            Box::new(accept_once(addr.as_str()).map_err(|e| anyhow!("accept failed: {e}"))?)
        }
        Role::Both => unreachable!(),
    };

    if role == Role::Alice {
        let mut stream = AlignedStream::new(session_id, EmissionSource::new(profile.clone()));
        stream.start_initiate(chan.as_mut())?;
        let result = match protocol {
            Protocol::Ot => {
                let params = config.ot_params(eq4_literal, step6_literal);
                let matrix = config.matrix(&config.ot.matrix_path)?;
                let mut msg_rng = party_rng(&profile.seed, "cli-messages");
                let m0 = message_bits(&config.ot.m0_hex, params.w, &mut msg_rng)?;
                let m1 = message_bits(&config.ot.m1_hex, params.w, &mut msg_rng)?;
                let mut rng = party_rng(&profile.seed, "ot-sender");
                run_ot_sender(&params, &matrix, &mut stream, chan.as_mut(), &m0, &m1, &mut rng)
                    .map(|o| ((), o.report))
            }
            Protocol::Qkd => {
                let params = config.qkd_params();
                let matrix = config.matrix(&config.qkd.matrix_path)?;
                let mut rng = party_rng(&profile.seed, "qkd-sender");
                run_qkd_sender(&params, &matrix, &mut stream, chan.as_mut(), &mut rng)
                    .map(|o| ((), o.report))
            }
            Protocol::Token => {
                let params = config.token_params();
                run_token_issuer(&params, &mut stream, chan.as_mut())
                    .map(|(v, r)| ((), token_bound_fields(config, profile, r, v)))
            }
        };
        status_from(vec![result])
    } else {
        let mut stream = AlignedStream::new(session_id, DetectionSource::new(profile.clone()));
        stream.start_accept(chan.as_mut())?;
        let result = match protocol {
            Protocol::Ot => {
                let params = config.ot_params(eq4_literal, step6_literal);
                let matrix = config.matrix(&config.ot.matrix_path)?;
                let mut rng = party_rng(&profile.seed, "ot-receiver");
                run_ot_receiver(
                    &params,
                    &matrix,
                    &mut stream,
                    chan.as_mut(),
                    config.ot.choice,
                    &mut rng,
                )
                .map(|o| ((), o.report))
            }
            Protocol::Qkd => {
                let params = config.qkd_params();
                let matrix = config.matrix(&config.qkd.matrix_path)?;
                run_qkd_receiver(&params, &matrix, &mut stream, chan.as_mut())
                    .map(|o| ((), o.report))
            }
            Protocol::Token => {
                let params = config.token_params();
                let mut rng = party_rng(&profile.seed, "token-holder");
                run_token_holder(
                    &params,
                    &mut stream,
                    chan.as_mut(),
                    &mut rng,
                    config.token_point(),
                )
                .map(|(v, r)| ((), annotate(r, v)))
            }
        };
        status_from(vec![result])
    }
}

fn annotate(report: RunReport, verdict: qstack_core::protocols::token::TokenVerdict) -> RunReport {
    let mut report = report;
    if report.get("verdict").is_none() {
        report.put("verdict", format!("{verdict:?}"));
    }
    report
}

/// Evaluates the unforgeability bound at the run's operating point and
/// folds the result into the issuer's report: the epsilon, a security
/// flag, and one flag per constraint of the analysis.
fn token_bound_fields(
    config: &RunConfig,
    profile: &ChannelProfile,
    report: RunReport,
    verdict: qstack_core::protocols::token::TokenVerdict,
) -> RunReport {
    let mut report = annotate(report, verdict);
    let parse = |key: &str| report.get(key).and_then(|v| v.parse::<f64>().ok());
    let beta_pb = parse("beta_pb_measured").unwrap_or(profile.beta_pb_inject);
    let beta_ps = parse("beta_ps_measured").unwrap_or(profile.beta_ps_inject);
    let bound = qstack_core::bounds::token_bound_report(
        config.token.n_per_block,
        config.token.gamma_det,
        config.token.gamma_err,
        profile.mu,
        beta_pb,
        beta_ps,
        profile.phi,
    );
    if let Ok(bound) = bound {
        report.put("bound_eps_unf", format!("{:.3e}", bound.value));
        report.put("bound_secure", bound.feasible && bound.value <= 1e-10);
        for (name, ok) in &bound.constraints {
            report.put(&format!("constraint_{name}"), ok);
        }
    }
    report
}

/// Prints a report in the machine-readable one-key-per-line form plus a
/// short human summary.
pub fn print_reports(reports: &[RunReport], rep_rate_hz: f64) {
    for report in reports {
        println!("{}", report.to_text().trim_end());
        let total: f64 = report.phases.iter().map(|(_, s)| s).sum();
        let role = report.get("role").unwrap_or("party");
        println!("summary: {} {} finished in {total:.3}s", report.protocol, role);
        if let Some(received) = report.get("received").and_then(|v| v.parse::<f64>().ok()) {
            // expected wall time on hardware at the configured repetition rate
            println!(
                "hardware_equiv_time_s: {:.3}",
                received / rep_rate_hz.max(1.0)
            );
        }
        println!();
    }
}

pub fn verbosity() -> u8 {
    match std::env::var("QSTACK_LOG").as_deref() {
        Ok("debug") | Ok("trace") => 2,
        Ok("info") => 1,
        _ => 0,
    }
}
