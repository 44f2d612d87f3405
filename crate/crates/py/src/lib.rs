//! Python bindings for the stack: the channel emulator, the classical
//! primitives, the security-bound evaluators and searches, and loopback
//! protocol runs.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use qstack_core::{bounds, crypto, ecc, hwsim, protocols};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_seed(seed_hex: &str) -> PyResult<[u8; 32]> {
    let mut out = [0u8; 32];
    if seed_hex.len() != 64 || !seed_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(value_err("seed_hex must be 64 hex characters"));
    }
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).map_err(value_err)?;
    }
    Ok(out)
}

/// Emulated hardware parameters shared by both parties.
#[pyclass(name = "ChannelProfile", from_py_object)]
#[derive(Clone)]
struct PyChannelProfile {
    inner: hwsim::ChannelProfile,
}

#[pymethods]
impl PyChannelProfile {
    #[new]
    #[pyo3(signature = (qber=0.02, loss_db=0.0, mu=0.1, det_efficiency=1.0,
                        rep_rate_hz=80e6, beta_pb=0.0, beta_ps=0.0, phi=0.0,
                        seed_hex="0000000000000000000000000000000000000000000000000000000000000000"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        qber: f64,
        loss_db: f64,
        mu: f64,
        det_efficiency: f64,
        rep_rate_hz: f64,
        beta_pb: f64,
        beta_ps: f64,
        phi: f64,
        seed_hex: &str,
    ) -> PyResult<Self> {
        let inner = hwsim::ChannelProfile {
            qber,
            loss_db,
            mu,
            det_efficiency,
            rep_rate_hz,
            beta_pb_inject: beta_pb,
            beta_ps_inject: beta_ps,
            phi,
            seed: parse_seed(seed_hex)?,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Probability that a sent pulse triggers the receiver's detector.
    fn detection_probability(&self) -> PyResult<f64> {
        hwsim::derive_detection_probability(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelProfile(qber={}, loss_db={}, mu={}, det_efficiency={})",
            self.inner.qber, self.inner.loss_db, self.inner.mu, self.inner.det_efficiency
        )
    }
}

/// Index-aligned emission and detection records for one batch.
#[pyclass(name = "PulseBatch")]
struct PyPulseBatch {
    inner: hwsim::PulseBatch,
}

#[pymethods]
impl PyPulseBatch {
    /// (index, bit, basis) per pulse.
    fn emissions(&self) -> Vec<(u64, u8, u8)> {
        self.inner
            .emissions
            .iter()
            .map(|e| (e.index, e.bit, e.basis))
            .collect()
    }

    /// (index, detected, basis, outcome-or-None) per pulse.
    fn detections(&self) -> Vec<(u64, bool, u8, Option<u8>)> {
        self.inner
            .detections
            .iter()
            .map(|d| (d.index, d.detected, d.basis, d.outcome))
            .collect()
    }

    /// (beta_pb, beta_ps) measured over the detected pulses.
    fn measured_biases(&self) -> PyResult<(f64, f64)> {
        let received: Vec<_> = self
            .inner
            .emissions
            .iter()
            .zip(&self.inner.detections)
            .filter(|(_, d)| d.detected)
            .map(|(e, _)| *e)
            .collect();
        hwsim::measured_biases(&received).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.emissions.len()
    }
}

#[pyfunction]
fn simulate_batch(profile: &PyChannelProfile, n_pulses: usize) -> PyResult<PyPulseBatch> {
    Ok(PyPulseBatch {
        inner: hwsim::simulate_batch(&profile.inner, n_pulses).map_err(value_err)?,
    })
}

#[pyfunction]
fn p_noqubit(mu: f64) -> PyResult<f64> {
    hwsim::p_noqubit(mu).map_err(value_err)
}

#[pyfunction]
fn binary_entropy(p: f64) -> PyResult<f64> {
    crypto::binary_entropy(p).map_err(value_err)
}

/// Toeplitz hash of `x` (0/1 list) to `out_len` bits; the seed must hold
/// len(x) + out_len - 1 bits.
#[pyfunction]
fn toeplitz_hash(seed_bits: Vec<u8>, x: Vec<u8>, out_len: usize) -> PyResult<Vec<u8>> {
    let seed = crypto::ToeplitzSeed::new(seed_bits, x.len(), out_len).map_err(value_err)?;
    crypto::toeplitz_hash(&seed, &x).map_err(value_err)
}

/// SHAKE-256 expansion of a byte seed into `out_bits` bits (0/1 list).
#[pyfunction]
fn prg_expand(seed: Vec<u8>, out_bits: usize) -> Vec<u8> {
    crypto::prg_expand(&seed, out_bits)
}

/// Commits to a bit; returns (commitment bytes, nonce bytes), with
/// nonce randomness drawn from the given hex seed.
#[pyfunction]
#[pyo3(signature = (bit, seed_hex, lambda_bs=256, lambda_hs=256))]
fn commit(bit: u8, seed_hex: &str, lambda_bs: usize, lambda_hs: usize) -> PyResult<(Vec<u8>, Vec<u8>)> {
    let params = crypto::CommitParams { lambda_bs, lambda_hs };
    params.validate().map_err(value_err)?;
    let mut rng = ChaCha8Rng::from_seed(parse_seed(seed_hex)?);
    let (t, d) = crypto::commit(bit, &params, &mut rng);
    Ok((t.bits, d.nonce))
}

/// Verifies a commitment opening; returns 1 or 0.
#[pyfunction]
#[pyo3(signature = (commitment, bit, nonce, lambda_bs=256, lambda_hs=256))]
fn verify(
    commitment: Vec<u8>,
    bit: u8,
    nonce: Vec<u8>,
    lambda_bs: usize,
    lambda_hs: usize,
) -> PyResult<u8> {
    let params = crypto::CommitParams { lambda_bs, lambda_hs };
    let t = crypto::Commitment {
        bits: commitment,
        n_bits: lambda_bs,
    };
    let d = crypto::Decommitment { bit, nonce };
    crypto::verify(&t, &d, &params).map_err(value_err)
}

/// Sparse binary parity check matrix with syndrome computation and
/// belief-propagation decoding.
#[pyclass(name = "ParityCheckMatrix")]
struct PyParityCheckMatrix {
    inner: ecc::ParityCheckMatrix,
}

#[pymethods]
impl PyParityCheckMatrix {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ecc::ParityCheckMatrix::load(std::path::Path::new(path)).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn gallager(n_rows: usize, n_cols: usize, col_weight: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: ecc::gallager(n_rows, n_cols, col_weight, seed).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn hamming74() -> Self {
        Self {
            inner: ecc::hamming_7_4(),
        }
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn syndrome(&self, x: Vec<u8>) -> PyResult<Vec<u8>> {
        ecc::syndrome(&self.inner, &x).map_err(value_err)
    }

    /// Returns (success, corrected bits, iterations).
    #[pyo3(signature = (crossover, x_tilde, sigma, max_iterations=60))]
    fn decode(
        &self,
        crossover: f64,
        x_tilde: Vec<u8>,
        sigma: Vec<u8>,
        max_iterations: usize,
    ) -> PyResult<(bool, Vec<u8>, usize)> {
        let res = ecc::decode_bp(&self.inner, crossover, &x_tilde, &sigma, max_iterations)
            .map_err(value_err)?;
        Ok((res.success, res.x_guess, res.iterations))
    }

    fn inefficiency(&self, crossover: f64) -> PyResult<f64> {
        ecc::code_inefficiency(self.inner.n_rows(), self.inner.n_cols(), crossover)
            .map_err(value_err)
    }
}

#[pyfunction]
fn qkd_final_length(
    eps_sec: f64,
    eps_cor: f64,
    n: u64,
    k: u64,
    q_tol: f64,
    q_leak: f64,
) -> PyResult<f64> {
    bounds::qkd_final_length(eps_sec, eps_cor, n, k, q_tol, q_leak).map_err(value_err)
}

/// Smallest received-pulse count with a positive key length, or None
/// when infeasible.
#[pyfunction]
fn qkd_min_received(
    eps_sec: f64,
    eps_cor: f64,
    qber: f64,
    inefficiency: f64,
) -> PyResult<Option<u64>> {
    match bounds::qkd_min_received(eps_sec, eps_cor, qber, inefficiency, bounds::default_k_rule) {
        Ok(n) => Ok(Some(n)),
        Err(bounds::BoundsError::Infeasible(_)) => Ok(None),
        Err(e) => Err(value_err(e)),
    }
}

#[pyfunction]
#[pyo3(signature = (eps_sec1, eps_sec2, lambda_ot, q_tol, q_leak, eq4_literal=false))]
fn ot_final_length(
    eps_sec1: f64,
    eps_sec2: f64,
    lambda_ot: f64,
    q_tol: f64,
    q_leak: f64,
    eq4_literal: bool,
) -> PyResult<f64> {
    bounds::ot_final_length(eps_sec1, eps_sec2, lambda_ot, q_tol, q_leak, eq4_literal)
        .map_err(value_err)
}

/// Smallest number of received pulses 2*lambda_ot reaching `target_l`
/// secret bits, or None when infeasible.
#[pyfunction]
#[pyo3(signature = (eps_sec1, eps_sec2, q_tol, inefficiency, target_l=256.0, eq4_literal=false))]
fn ot_min_lambda(
    eps_sec1: f64,
    eps_sec2: f64,
    q_tol: f64,
    inefficiency: f64,
    target_l: f64,
    eq4_literal: bool,
) -> PyResult<Option<u64>> {
    match bounds::ot_min_lambda(eps_sec1, eps_sec2, q_tol, inefficiency, target_l, eq4_literal) {
        Ok(lambda) => Ok(Some(lambda)),
        Err(bounds::BoundsError::Infeasible(_)) => Ok(None),
        Err(e) => Err(value_err(e)),
    }
}

#[pyfunction]
fn ot_epsilon(
    lambda_ot: f64,
    q_tol: f64,
    xi: f64,
    delta: f64,
    q_leak: f64,
    l: f64,
) -> PyResult<f64> {
    bounds::ot_epsilon(lambda_ot, q_tol, xi, delta, q_leak, l).map_err(value_err)
}

/// Minimizes the transfer bound over the margins; returns
/// (epsilon, xi, delta).
#[pyfunction]
fn ot_epsilon_min(lambda_ot: f64, q_tol: f64, q_leak: f64, l: f64) -> PyResult<(f64, f64, f64)> {
    bounds::ot_epsilon_min(lambda_ot, q_tol, q_leak, l).map_err(value_err)
}

#[pyfunction]
fn max_inefficiency(eps_target: f64, q_tol: f64, target_l: f64) -> PyResult<f64> {
    bounds::max_inefficiency(eps_target, q_tol, target_l).map_err(value_err)
}

#[pyfunction]
fn token_lambda(phi: f64, beta_pb: f64) -> PyResult<f64> {
    bounds::token_lambda(phi, beta_pb).map_err(value_err)
}

/// Unforgeability bound at one parameter point; raises on constraint
/// violations, naming the violated constraint.
#[pyfunction]
#[pyo3(signature = (n_pulses, gamma_det, gamma_err, mu, nu_unf, beta_pb=0.0, beta_ps=0.0, phi=0.0))]
#[allow(clippy::too_many_arguments)]
fn token_epsilon_unf(
    n_pulses: u64,
    gamma_det: f64,
    gamma_err: f64,
    mu: f64,
    nu_unf: f64,
    beta_pb: f64,
    beta_ps: f64,
    phi: f64,
) -> PyResult<f64> {
    bounds::token_epsilon_unf(&bounds::TokenBoundParams {
        n_pulses,
        gamma_det,
        gamma_err,
        mu,
        beta_pb,
        beta_ps,
        phi,
        nu_unf,
    })
    .map_err(value_err)
}

/// Minimum block size for a secure token, as a dict with n_min, nu_unf
/// and the derived thresholds; None when infeasible.
#[pyfunction]
#[pyo3(signature = (p_det, qber, mu, eps_target=1e-10, beta_pb=0.0, beta_ps=0.0, phi=0.0,
                    margin_det=0.1, margin_err=0.02))]
#[allow(clippy::too_many_arguments)]
fn token_min_n(
    p_det: f64,
    qber: f64,
    mu: f64,
    eps_target: f64,
    beta_pb: f64,
    beta_ps: f64,
    phi: f64,
    margin_det: f64,
    margin_err: f64,
) -> PyResult<Option<HashMap<String, f64>>> {
    let margins = bounds::ThresholdMargins {
        det: margin_det,
        err: margin_err,
    };
    match bounds::token_min_n(p_det, qber, mu, beta_pb, beta_ps, phi, eps_target, margins) {
        Ok(res) => Ok(Some(HashMap::from([
            ("n_min".into(), res.n_min as f64),
            ("nu_unf".into(), res.nu_unf),
            ("gamma_det".into(), res.gamma_det),
            ("gamma_err".into(), res.gamma_err),
        ]))),
        Err(bounds::BoundsError::Infeasible(_)) => Ok(None),
        Err(e) => Err(value_err(e)),
    }
}

fn report_map(report: &qstack_core::report::RunReport) -> HashMap<String, String> {
    let mut map: HashMap<String, String> = report
        .fields
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    map.insert("protocol".into(), report.protocol.clone());
    map.insert("transcript_sha256".into(), report.transcript_sha256.clone());
    for (name, frac) in report.phase_fractions() {
        map.insert(format!("phase_{name}_pct"), format!("{frac:.1}"));
    }
    map
}

/// One oblivious transfer over the in-process loopback. Returns the
/// receiver's recovered message bits and both parties' reports.
#[pyfunction]
#[pyo3(signature = (profile, m0, m1, choice, lambda_ot=16384, w=128))]
fn run_ot_loopback(
    profile: &PyChannelProfile,
    m0: Vec<u8>,
    m1: Vec<u8>,
    choice: u8,
    lambda_ot: u64,
    w: usize,
) -> PyResult<(Vec<u8>, HashMap<String, String>, HashMap<String, String>)> {
    if m0.len() != w || m1.len() != w {
        return Err(value_err("messages must be w bits"));
    }
    let params = protocols::ot::OtParams::desk_scale(lambda_ot, w);
    let matrix = ecc::gallager(512, 1024, 3, 7).map_err(runtime_err)?;
    let (sender, receiver) =
        protocols::runner::ot_loopback(&profile.inner, &params, &matrix, m0, m1, choice);
    let sender = sender.map_err(runtime_err)?;
    let receiver = receiver.map_err(runtime_err)?;
    Ok((
        receiver.message,
        report_map(&sender.report),
        report_map(&receiver.report),
    ))
}

/// One key-distribution run over the loopback. Returns the shared key
/// bits and both reports; raises on abort.
#[pyfunction]
#[pyo3(signature = (profile, n_pulses=65536, q_tol=0.025))]
fn run_qkd_loopback(
    profile: &PyChannelProfile,
    n_pulses: u64,
    q_tol: f64,
) -> PyResult<(Vec<u8>, HashMap<String, String>, HashMap<String, String>)> {
    let params = protocols::qkd::QkdParams {
        q_tol,
        ..protocols::qkd::QkdParams::desk_scale(n_pulses)
    };
    let matrix = ecc::gallager(512, 1024, 3, 7).map_err(runtime_err)?;
    let (alice, bob) = protocols::runner::qkd_loopback(&profile.inner, &params, &matrix);
    let alice = alice.map_err(runtime_err)?;
    let bob = bob.map_err(runtime_err)?;
    assert_eq!(alice.key, bob.key, "correctness hash passed but keys differ");
    Ok((alice.key, report_map(&alice.report), report_map(&bob.report)))
}

/// One token issuance and presentation over the loopback. Returns
/// (valid, issuer report, holder report).
#[pyfunction]
#[pyo3(signature = (profile, m_bits=1, n_per_block=100000, gamma_det=0.9, gamma_err=0.05))]
fn run_token_loopback(
    profile: &PyChannelProfile,
    m_bits: usize,
    n_per_block: u64,
    gamma_det: f64,
    gamma_err: f64,
) -> PyResult<(bool, HashMap<String, String>, HashMap<String, String>)> {
    let params = protocols::token::TokenParams {
        m_bits,
        n_per_block,
        gamma_det,
        gamma_err,
    };
    let (issuer, holder) = protocols::runner::token_loopback(&profile.inner, &params, None);
    let (verdict, issuer_report) = issuer.map_err(runtime_err)?;
    let (_, holder_report) = holder.map_err(runtime_err)?;
    Ok((
        verdict.is_valid(),
        report_map(&issuer_report),
        report_map(&holder_report),
    ))
}

#[pymodule]
fn qstack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannelProfile>()?;
    m.add_class::<PyPulseBatch>()?;
    m.add_class::<PyParityCheckMatrix>()?;
    m.add_function(wrap_pyfunction!(simulate_batch, m)?)?;
    m.add_function(wrap_pyfunction!(p_noqubit, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(toeplitz_hash, m)?)?;
    m.add_function(wrap_pyfunction!(prg_expand, m)?)?;
    m.add_function(wrap_pyfunction!(commit, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(qkd_final_length, m)?)?;
    m.add_function(wrap_pyfunction!(qkd_min_received, m)?)?;
    m.add_function(wrap_pyfunction!(ot_final_length, m)?)?;
    m.add_function(wrap_pyfunction!(ot_min_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(ot_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(ot_epsilon_min, m)?)?;
    m.add_function(wrap_pyfunction!(max_inefficiency, m)?)?;
    m.add_function(wrap_pyfunction!(token_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(token_epsilon_unf, m)?)?;
    m.add_function(wrap_pyfunction!(token_min_n, m)?)?;
    m.add_function(wrap_pyfunction!(run_ot_loopback, m)?)?;
    m.add_function(wrap_pyfunction!(run_qkd_loopback, m)?)?;
    m.add_function(wrap_pyfunction!(run_token_loopback, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
