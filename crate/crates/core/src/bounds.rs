//! Finite-size security bounds and minimal-resource searches.
//!
//! Three bound families are evaluated: the key-distribution trace-distance
//! bound and its final-length function, the oblivious-transfer bound with
//! its statistical margins xi and delta, and the token unforgeability
//! bound with its auxiliary functions and constraint system. On top of
//! the evaluators sit searches for the minimum block size, the minimum
//! number of received photons, and the maximum tolerable code
//! inefficiency, all by exponential bracketing plus bisection, with
//! golden-section refinement for the continuous free parameters.
//!
//! Evaluators are pure and total on their precondition domain:
//! out-of-domain input yields an error or a negative-infinity sentinel,
//! never NaN.

use thiserror::Error;

use crate::crypto::binary_entropy;
use crate::hwsim::p_noqubit;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("parameter {name} out of domain: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("constraint violated: {0}")]
    ConstraintViolation(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Evaluated security quantity together with the parameter point and
/// constraint flags that produced it.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// The bound value: an epsilon or a final length, by context.
    pub value: f64,
    pub feasible: bool,
    pub point: Vec<(String, f64)>,
    pub constraints: Vec<(String, bool)>,
}

fn h(p: f64) -> f64 {
    binary_entropy(p).expect("entropy argument checked by caller")
}

fn check_eps(name: &'static str, eps: f64) -> Result<(), BoundsError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BoundsError::Domain { name, value: eps });
    }
    Ok(())
}

fn check_q_tol(q_tol: f64) -> Result<(), BoundsError> {
    if !(0.0..0.5).contains(&q_tol) {
        return Err(BoundsError::Domain {
            name: "q_tol",
            value: q_tol,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------
// key distribution
// ---------------------------------------------------------------------

/// Final secret-key length for the key-distribution bound.
///
/// l = n [1 - h(Q_tol + delta)] - q - log2(1/(eps_sec^2 eps_cor)), with
/// delta = sqrt((n+k)/(n k) * (k+1)/k * ln(4/eps_sec)). Returns negative
/// infinity when the entropy argument reaches 1/2 (no key extractable at
/// any length).
pub fn qkd_final_length(
    eps_sec: f64,
    eps_cor: f64,
    n: u64,
    k: u64,
    q_tol: f64,
    q_leak: f64,
) -> Result<f64, BoundsError> {
    check_eps("eps_sec", eps_sec)?;
    check_eps("eps_cor", eps_cor)?;
    check_q_tol(q_tol)?;
    if n == 0 {
        return Err(BoundsError::Domain {
            name: "n",
            value: 0.0,
        });
    }
    if k == 0 {
        return Err(BoundsError::Domain {
            name: "k",
            value: 0.0,
        });
    }
    if !(q_leak >= 0.0) {
        return Err(BoundsError::Domain {
            name: "q_leak",
            value: q_leak,
        });
    }
    let (nf, kf) = (n as f64, k as f64);
    let delta = ((nf + kf) / (nf * kf) * (kf + 1.0) / kf * (4.0 / eps_sec).ln()).sqrt();
    let arg = q_tol + delta;
    if arg >= 0.5 {
        return Ok(f64::NEG_INFINITY);
    }
    let penalty = -2.0 * eps_sec.log2() - eps_cor.log2();
    Ok(nf * (1.0 - h(arg)) - q_leak - penalty)
}

/// Default sample-length rule: k = 10 ceil(sqrt(n)).
pub fn default_k_rule(n: u64) -> u64 {
    10 * (n as f64).sqrt().ceil() as u64
}

/// Splits a sifted-key budget into raw length n and sample length k
/// according to a k-rule, by fixed point.
fn split_sifted(sifted: u64, k_rule: &dyn Fn(u64) -> u64) -> Option<(u64, u64)> {
    let mut n = sifted;
    for _ in 0..8 {
        n = sifted.checked_sub(k_rule(n).min(sifted))?;
    }
    if n == 0 || sifted == n {
        return None;
    }
    Some((n, sifted - n))
}

/// Smallest number of received pulses for which the key-distribution
/// bound yields at least one secret bit, with half the received pulses
/// surviving sifting, k from the k-rule, and syndrome leakage
/// inefficiency * n * h(qber).
pub fn qkd_min_received(
    eps_sec: f64,
    eps_cor: f64,
    qber: f64,
    inefficiency: f64,
    k_rule: impl Fn(u64) -> u64,
) -> Result<u64, BoundsError> {
    check_eps("eps_sec", eps_sec)?;
    check_eps("eps_cor", eps_cor)?;
    check_q_tol(qber)?;
    if !(inefficiency >= 0.0) {
        return Err(BoundsError::Domain {
            name: "inefficiency",
            value: inefficiency,
        });
    }
    let feasible = |received: u64| -> bool {
        let sifted = received / 2;
        let Some((n, k)) = split_sifted(sifted, &k_rule) else {
            return false;
        };
        let q_leak = inefficiency * n as f64 * h(qber);
        matches!(
            qkd_final_length(eps_sec, eps_cor, n, k, qber, q_leak),
            Ok(l) if l >= 1.0
        )
    };
    search_min_u64(feasible, 1 << 10, 1 << 60).ok_or_else(|| {
        BoundsError::Infeasible(format!("no received count up to 2^60 at qber {qber}"))
    })
}

// ---------------------------------------------------------------------
// oblivious transfer
// ---------------------------------------------------------------------

/// Final key length for the oblivious-transfer bound.
///
/// l = (lambda_ot/2) [1/2 - sqrt(2/lambda_ot ln(4/eps_sec2))
///     - h(Q_tol + sqrt(100/lambda_ot ln(2 sqrt6 / eps_sec1)))] - q - P,
/// where the penalty P is 2 log2(1/(eps_sec1+eps_sec2)), or the literal
/// 1/(eps_sec1+eps_sec2)^2 when `eq4_literal` is set (kept for auditing;
/// it makes the length unusable at practical security levels).
pub fn ot_final_length(
    eps_sec1: f64,
    eps_sec2: f64,
    lambda_ot: f64,
    q_tol: f64,
    q_leak: f64,
    eq4_literal: bool,
) -> Result<f64, BoundsError> {
    check_eps("eps_sec1", eps_sec1)?;
    check_eps("eps_sec2", eps_sec2)?;
    check_q_tol(q_tol)?;
    if !(lambda_ot > 0.0) {
        return Err(BoundsError::Domain {
            name: "lambda_ot",
            value: lambda_ot,
        });
    }
    if !(q_leak >= 0.0) {
        return Err(BoundsError::Domain {
            name: "q_leak",
            value: q_leak,
        });
    }
    let xi = (2.0 / lambda_ot * (4.0 / eps_sec2).ln()).sqrt();
    let delta = (100.0 / lambda_ot * (2.0 * 6f64.sqrt() / eps_sec1).ln()).sqrt();
    let arg = q_tol + delta;
    if arg >= 0.5 {
        return Ok(f64::NEG_INFINITY);
    }
    let penalty = if eq4_literal {
        (eps_sec1 + eps_sec2).powi(-2)
    } else {
        -2.0 * (eps_sec1 + eps_sec2).log2()
    };
    Ok(lambda_ot / 2.0 * (0.5 - xi - h(arg)) - q_leak - penalty)
}

/// Smallest (even) number of received pulses 2*lambda_ot such that the
/// oblivious-transfer final length reaches `target_l`, with syndrome
/// leakage inefficiency * (lambda_ot/2) * h(Q_tol).
pub fn ot_min_lambda(
    eps_sec1: f64,
    eps_sec2: f64,
    q_tol: f64,
    inefficiency: f64,
    target_l: f64,
    eq4_literal: bool,
) -> Result<u64, BoundsError> {
    ot_min_lambda_capped(
        eps_sec1,
        eps_sec2,
        q_tol,
        inefficiency,
        target_l,
        eq4_literal,
        1 << 60,
    )
}

fn ot_min_lambda_capped(
    eps_sec1: f64,
    eps_sec2: f64,
    q_tol: f64,
    inefficiency: f64,
    target_l: f64,
    eq4_literal: bool,
    lambda_cap: u64,
) -> Result<u64, BoundsError> {
    check_eps("eps_sec1", eps_sec1)?;
    check_eps("eps_sec2", eps_sec2)?;
    check_q_tol(q_tol)?;
    if !(inefficiency >= 0.0) {
        return Err(BoundsError::Domain {
            name: "inefficiency",
            value: inefficiency,
        });
    }
    // asymptotic rate: l/n0 -> 1/2 - (1 + inefficiency) h(Q_tol)
    if !eq4_literal && 0.5 - (1.0 + inefficiency) * h(q_tol) <= 0.0 {
        return Err(BoundsError::Infeasible(format!(
            "no positive asymptotic rate at q_tol {q_tol} with inefficiency {inefficiency}"
        )));
    }
    let feasible = |n0: u64| -> bool {
        let q_leak = inefficiency * n0 as f64 * h(q_tol);
        matches!(
            ot_final_length(eps_sec1, eps_sec2, 2.0 * n0 as f64, q_tol, q_leak, eq4_literal),
            Ok(l) if l >= target_l
        )
    };
    let n0 = search_min_u64(feasible, 1 << 10, lambda_cap / 2).ok_or_else(|| {
        BoundsError::Infeasible(format!(
            "no block size up to 2^{} at q_tol {q_tol}",
            lambda_cap.ilog2()
        ))
    })?;
    Ok(2 * n0)
}

/// The oblivious-transfer trace-distance bound for explicit statistical
/// margins xi and delta.
pub fn ot_epsilon(
    lambda_ot: f64,
    q_tol: f64,
    xi: f64,
    delta: f64,
    q_leak: f64,
    l: f64,
) -> Result<f64, BoundsError> {
    check_q_tol(q_tol)?;
    if !(lambda_ot > 0.0) {
        return Err(BoundsError::Domain {
            name: "lambda_ot",
            value: lambda_ot,
        });
    }
    if !(xi > 0.0) {
        return Err(BoundsError::Domain {
            name: "xi",
            value: xi,
        });
    }
    if !(delta > 0.0) || q_tol + delta > 1.0 {
        return Err(BoundsError::Domain {
            name: "delta",
            value: delta,
        });
    }
    if !(q_leak >= 0.0) {
        return Err(BoundsError::Domain {
            name: "q_leak",
            value: q_leak,
        });
    }
    let exponent = -0.5 * ((0.5 - xi - h(q_tol + delta)) * lambda_ot / 2.0 - q_leak - l);
    let term1 = 0.5 * exponent.exp2();
    let term2 = 6f64.sqrt() * (-delta * delta / 100.0 * lambda_ot).exp();
    let term3 = 2.0 * (-xi * xi / 2.0 * lambda_ot).exp();
    Ok(term1 + term2 + term3)
}

/// Minimizes the oblivious-transfer bound over the margins xi and delta
/// by a coarse grid followed by nested golden-section refinement.
/// Returns (epsilon, xi, delta).
pub fn ot_epsilon_min(
    lambda_ot: f64,
    q_tol: f64,
    q_leak: f64,
    l: f64,
) -> Result<(f64, f64, f64), BoundsError> {
    check_q_tol(q_tol)?;
    let delta_max = 0.5 - q_tol;
    let eval_delta = |xi: f64, delta: f64| -> f64 {
        ot_epsilon(lambda_ot, q_tol, xi, delta, q_leak, l).unwrap_or(f64::INFINITY)
    };
    let best_delta = |xi: f64| -> (f64, f64) {
        let (d, v) = grid_then_golden(1e-9, delta_max, 64, |d| eval_delta(xi, d));
        (v, d)
    };
    let (xi, _) = grid_then_golden(1e-9, 0.5, 64, |xi| best_delta(xi).0);
    let (eps, delta) = best_delta(xi);
    Ok((eps, xi, delta))
}

/// Supremum of the code inefficiency for which the oblivious-transfer
/// search stays feasible with at most 2^40 received pulses.
pub fn max_inefficiency(eps_target: f64, q_tol: f64, target_l: f64) -> Result<f64, BoundsError> {
    check_eps("eps_target", eps_target)?;
    check_q_tol(q_tol)?;
    let eps_half = eps_target / 2.0;
    let feasible = |ineff: f64| -> bool {
        ot_min_lambda_capped(eps_half, eps_half, q_tol, ineff, target_l, false, 1 << 40).is_ok()
    };
    if !feasible(0.0) {
        return Err(BoundsError::Infeasible(format!(
            "even a zero-leak code fails at q_tol {q_tol}"
        )));
    }
    // the asymptotic ceiling bounds the bracket
    let mut lo = 0.0f64;
    let mut hi = (0.5 - h(q_tol)) / h(q_tol).max(1e-12) + 1.0;
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------
// quantum tokens
// ---------------------------------------------------------------------

/// Error-rate ceiling lambda(phi, beta_pb): the threshold below which a
/// forger gains nothing from the preparation deviation phi and basis
/// bias beta_pb. The bias factor enters inside the radical, so full bias
/// (beta_pb = 1/2) drives the ceiling to zero.
pub fn token_lambda(phi: f64, beta_pb: f64) -> Result<f64, BoundsError> {
    if !(0.0..=std::f64::consts::FRAC_PI_4).contains(&phi) {
        return Err(BoundsError::Domain {
            name: "phi",
            value: phi,
        });
    }
    if !(0.0..=0.5).contains(&beta_pb) {
        return Err(BoundsError::Domain {
            name: "beta_pb",
            value: beta_pb,
        });
    }
    let dev = 1.0 - (phi.cos() + phi.sin()) / 2f64.sqrt();
    Ok(0.5 * (1.0 - (1.0 - dev * dev * (1.0 - 4.0 * beta_pb * beta_pb)).sqrt()))
}

/// Parameter point for the token unforgeability bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBoundParams {
    /// Pulses per block.
    pub n_pulses: u64,
    /// Minimum detection-rate threshold.
    pub gamma_det: f64,
    /// Maximum error-rate threshold.
    pub gamma_err: f64,
    /// Mean photon number of the source.
    pub mu: f64,
    pub beta_pb: f64,
    pub beta_ps: f64,
    pub phi: f64,
    /// Free analysis parameter, optimized by the searches.
    pub nu_unf: f64,
}

fn token_h_aux(beta_ps: f64, beta_pb: f64, phi: f64) -> f64 {
    let b2 = 2.0 * beta_pb * beta_pb;
    2.0 * beta_ps * (0.5 + b2 + (0.5 - b2) * (2.0 * phi).sin()).sqrt()
}

fn token_f(
    gamma_err: f64,
    beta_ps: f64,
    beta_pb: f64,
    phi: f64,
    nu_unf: f64,
    gamma_det: f64,
    lambda: f64,
) -> f64 {
    let margin = gamma_det - nu_unf;
    let delta = if gamma_err == 0.0 {
        0.0
    } else {
        gamma_det * gamma_err / margin
    };
    let dev = 1.0 - delta / lambda;
    margin * (lambda / 2.0 * dev * dev - (1.0 + 2.0 * beta_ps).ln())
        - (1.0 - margin) * (1.0 + token_h_aux(beta_ps, beta_pb, phi)).ln()
}

/// Forging probability bound for a token run, after checking the three
/// constraints of the analysis. Violations are reported by name.
pub fn token_epsilon_unf(params: &TokenBoundParams) -> Result<f64, BoundsError> {
    let p = params;
    if p.n_pulses == 0 {
        return Err(BoundsError::Domain {
            name: "n_pulses",
            value: 0.0,
        });
    }
    for (name, v, lo, hi) in [
        ("gamma_det", p.gamma_det, 0.0, 1.0),
        ("gamma_err", p.gamma_err, 0.0, 1.0),
        ("beta_ps", p.beta_ps, 0.0, 0.5),
    ] {
        if !(v >= lo && v <= hi) {
            return Err(BoundsError::Domain { name, value: v });
        }
    }
    let lambda = token_lambda(p.phi, p.beta_pb)?;
    let p_nq = p_noqubit(p.mu).map_err(|_| BoundsError::Domain {
        name: "mu",
        value: p.mu,
    })?;
    if p_nq <= 0.0 {
        return Err(BoundsError::Domain {
            name: "mu",
            value: p.mu,
        });
    }

    // constraint 1: the error threshold must stay below the ceiling
    if p.gamma_err > lambda {
        return Err(BoundsError::ConstraintViolation(
            "gamma_err exceeds lambda(phi, beta_pb)",
        ));
    }
    // constraint 2: nu_unf inside [P_noqubit, min(2 P_noqubit, gamma_det (1 - gamma_err/lambda))]
    let nu_hi = (2.0 * p_nq).min(p.gamma_det * (1.0 - p.gamma_err / lambda));
    if !(p.nu_unf >= p_nq && p.nu_unf <= nu_hi) {
        return Err(BoundsError::ConstraintViolation(
            "nu_unf outside [P_noqubit, min(2 P_noqubit, gamma_det (1 - gamma_err/lambda))]",
        ));
    }
    // constraint 3: state-preparation bias cap
    let margin = p.gamma_det - p.nu_unf;
    let delta = if p.gamma_err == 0.0 {
        0.0
    } else {
        p.gamma_det * p.gamma_err / margin
    };
    let dev = 1.0 - delta / lambda;
    let beta_ps_cap = 0.5 * ((lambda / 2.0 * dev * dev).exp() - 1.0);
    if p.beta_ps > beta_ps_cap {
        return Err(BoundsError::ConstraintViolation(
            "beta_ps exceeds its exponential cap",
        ));
    }

    let n = p.n_pulses as f64;
    let rel = p.nu_unf / p_nq - 1.0;
    let term1 = (-(p_nq * n / 3.0) * rel * rel).exp();
    let f = token_f(
        p.gamma_err, p.beta_ps, p.beta_pb, p.phi, p.nu_unf, p.gamma_det, lambda,
    );
    let term2 = (-n * f).exp();
    Ok(term1 + term2)
}

/// Evaluates the token bound at a run's operating point without
/// erroring: the report carries the optimized epsilon (infinite when no
/// admissible nu_unf exists), the parameter point, and one flag per
/// constraint.
#[allow(clippy::too_many_arguments)]
pub fn token_bound_report(
    n_pulses: u64,
    gamma_det: f64,
    gamma_err: f64,
    mu: f64,
    beta_pb: f64,
    beta_ps: f64,
    phi: f64,
) -> Result<BoundReport, BoundsError> {
    let lambda = token_lambda(phi, beta_pb)?;
    let p_nq = p_noqubit(mu).map_err(|_| BoundsError::Domain {
        name: "mu",
        value: mu,
    })?;
    let nu_hi = (2.0 * p_nq).min(gamma_det * (1.0 - gamma_err / lambda.max(1e-300)));
    let err_ok = gamma_err <= lambda;
    let interval_ok = nu_hi > p_nq && p_nq > 0.0;

    let mut value = f64::INFINITY;
    let mut nu_best = f64::NAN;
    let mut beta_ps_ok = true;
    if err_ok && interval_ok {
        let eval = |nu: f64| {
            token_epsilon_unf(&TokenBoundParams {
                n_pulses,
                gamma_det,
                gamma_err,
                mu,
                beta_pb,
                beta_ps,
                phi,
                nu_unf: nu,
            })
            .unwrap_or(f64::INFINITY)
        };
        let (nu, eps) = grid_then_golden(p_nq, nu_hi, 10_000, eval);
        value = eps;
        nu_best = nu;
        beta_ps_ok = eps.is_finite();
    }
    Ok(BoundReport {
        value,
        feasible: value.is_finite() && value < 1.0,
        point: vec![
            ("n_pulses".into(), n_pulses as f64),
            ("gamma_det".into(), gamma_det),
            ("gamma_err".into(), gamma_err),
            ("mu".into(), mu),
            ("beta_pb".into(), beta_pb),
            ("beta_ps".into(), beta_ps),
            ("phi".into(), phi),
            ("nu_unf".into(), nu_best),
            ("lambda".into(), lambda),
            ("p_noqubit".into(), p_nq),
        ],
        constraints: vec![
            ("gamma_err_below_lambda".into(), err_ok),
            ("nu_interval_nonempty".into(), interval_ok),
            ("beta_ps_below_cap".into(), beta_ps_ok),
        ],
    })
}

/// Detection/error threshold margins applied to the observed channel:
/// gamma_det = p_det (1 - det), gamma_err = qber (1 + err).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMargins {
    pub det: f64,
    pub err: f64,
}

impl Default for ThresholdMargins {
    fn default() -> Self {
        // the error margin must keep qber (1 + err) under the
        // lambda(0,0) ceiling of roughly 0.0219 for percent-level qber
        Self {
            det: 0.1,
            err: 0.02,
        }
    }
}

/// Result of the minimum-pulse search for a token run.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMinN {
    pub n_min: u64,
    pub nu_unf: f64,
    pub gamma_det: f64,
    pub gamma_err: f64,
}

/// Smallest block size N for which the optimized token bound reaches
/// `eps_target`, with thresholds derived from the observed channel by
/// the given margins. The free parameter nu_unf is optimized on a grid
/// of 10^4 points with golden-section refinement; the bound is strictly
/// decreasing in N at any admissible point, so bisection over N is
/// valid.
pub fn token_min_n(
    p_det: f64,
    qber: f64,
    mu: f64,
    beta_pb: f64,
    beta_ps: f64,
    phi: f64,
    eps_target: f64,
    margins: ThresholdMargins,
) -> Result<TokenMinN, BoundsError> {
    check_eps("eps_target", eps_target)?;
    if !(p_det > 0.0 && p_det <= 1.0) {
        return Err(BoundsError::Domain {
            name: "p_det",
            value: p_det,
        });
    }
    if !(0.0..=0.5).contains(&qber) {
        return Err(BoundsError::Domain {
            name: "qber",
            value: qber,
        });
    }
    let gamma_det = p_det * (1.0 - margins.det);
    let gamma_err = qber * (1.0 + margins.err);
    let lambda = token_lambda(phi, beta_pb)?;
    let p_nq = p_noqubit(mu).map_err(|_| BoundsError::Domain {
        name: "mu",
        value: mu,
    })?;
    if gamma_err > lambda {
        return Err(BoundsError::Infeasible(format!(
            "gamma_err {gamma_err:.6} exceeds the ceiling lambda {lambda:.6}"
        )));
    }
    let nu_lo = p_nq;
    let nu_hi = (2.0 * p_nq).min(gamma_det * (1.0 - gamma_err / lambda));
    if !(nu_hi > nu_lo) {
        return Err(BoundsError::Infeasible(format!(
            "empty nu_unf interval: [P_noqubit, {nu_hi:.3e}] with P_noqubit {nu_lo:.3e}"
        )));
    }

    let eval = |n: u64, nu: f64| -> f64 {
        token_epsilon_unf(&TokenBoundParams {
            n_pulses: n,
            gamma_det,
            gamma_err,
            mu,
            beta_pb,
            beta_ps,
            phi,
            nu_unf: nu,
        })
        .unwrap_or(f64::INFINITY)
    };
    let optimize_nu = |n: u64| -> (f64, f64) {
        let (nu, v) = grid_then_golden(nu_lo, nu_hi, 10_000, |nu| eval(n, nu));
        (v, nu)
    };

    // both exponential rates must be positive somewhere in the interval
    let (probe, _) = optimize_nu(1 << 20);
    if !(probe < 2.0) {
        // e^0 + e^0 = 2 is the do-nothing value; no admissible nu helps
        return Err(BoundsError::Infeasible(
            "no admissible nu_unf gives positive exponential rates".into(),
        ));
    }

    let feasible = |n: u64| -> bool { optimize_nu(n).0 <= eps_target };
    let n_min = search_min_u64(feasible, 1 << 10, 1 << 60)
        .ok_or_else(|| BoundsError::Infeasible("no block size up to 2^60".into()))?;
    let (_, nu_unf) = optimize_nu(n_min);
    Ok(TokenMinN {
        n_min,
        nu_unf,
        gamma_det,
        gamma_err,
    })
}

// ---------------------------------------------------------------------
// search helpers
// ---------------------------------------------------------------------

/// Smallest value in [1, cap] satisfying a monotone predicate, found by
/// doubling from `bracket_start` and bisecting; the boundary is polished
/// by a short linear scan to absorb small non-monotonic ripples from
/// integer rules.
fn search_min_u64(feasible: impl Fn(u64) -> bool, bracket_start: u64, cap: u64) -> Option<u64> {
    let mut hi = bracket_start.max(2);
    let mut lo = 1u64;
    while !feasible(hi) {
        if hi >= cap {
            return None;
        }
        lo = hi;
        hi = (hi * 2).min(cap);
    }
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut best = hi;
    for _ in 0..64 {
        if best > 1 && feasible(best - 1) {
            best -= 1;
        } else {
            break;
        }
    }
    Some(best)
}

/// Coarse grid scan followed by golden-section refinement between the
/// neighbors of the best grid point. Returns (argmin, min).
fn grid_then_golden(lo: f64, hi: f64, grid: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    debug_assert!(hi > lo && grid >= 2);
    let step = (hi - lo) / grid as f64;
    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..=grid {
        let x = lo + step * i as f64;
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    golden_section(a, b, 1e-6, f)
}

/// Golden-section minimization to the given relative tolerance.
fn golden_section(mut a: f64, mut b: f64, rel_tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > rel_tol * (a.abs() + b.abs()).max(1e-300) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, f(x))
}
