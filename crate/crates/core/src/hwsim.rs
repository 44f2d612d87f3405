//! Deterministic emulator of the quantum layer.
//!
//! Given a shared seed and a channel profile, produces the emitter's
//! records (bit and basis per pulse) and the receiver's records
//! (measurement basis, detection flag and outcome) with the correct
//! marginal and joint statistics. Every draw is derived from a seekable
//! keyed stream over (seed, pulse index), so any pulse is recomputable in
//! O(1) and the two parties reconstruct each other's view from the same
//! seed. This offers no security; it exists to validate protocol
//! implementations before they run against real hardware.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile field {name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("empty index set")]
    EmptyIndexSet,
}

/// Emulated hardware parameters.
///
/// `beta_pb_inject` and `beta_ps_inject` shift the emitter's basis and
/// bit distributions away from uniform; `phi` is a state-preparation
/// deviation consumed only by the security bounds, never by the
/// simulated statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub qber: f64,
    pub loss_db: f64,
    pub mu: f64,
    pub det_efficiency: f64,
    pub rep_rate_hz: f64,
    pub beta_pb_inject: f64,
    pub beta_ps_inject: f64,
    pub phi: f64,
    pub seed: [u8; 32],
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            qber: 0.02,
            loss_db: 0.0,
            mu: 0.1,
            det_efficiency: 1.0,
            rep_rate_hz: 80e6,
            beta_pb_inject: 0.0,
            beta_ps_inject: 0.0,
            phi: 0.0,
            seed: [0u8; 32],
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let checks: [(&'static str, f64, bool); 8] = [
            ("qber", self.qber, (0.0..=0.5).contains(&self.qber)),
            ("loss_db", self.loss_db, self.loss_db >= 0.0),
            ("mu", self.mu, self.mu > 0.0),
            (
                "det_efficiency",
                self.det_efficiency,
                self.det_efficiency > 0.0 && self.det_efficiency <= 1.0,
            ),
            ("rep_rate_hz", self.rep_rate_hz, self.rep_rate_hz > 0.0),
            (
                "beta_pb",
                self.beta_pb_inject,
                (0.0..=0.5).contains(&self.beta_pb_inject),
            ),
            (
                "beta_ps",
                self.beta_ps_inject,
                (0.0..=0.5).contains(&self.beta_ps_inject),
            ),
            ("phi", self.phi, self.phi >= 0.0 && self.phi.is_finite()),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ProfileError::OutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// One emitted pulse: global index, encoded bit, preparation basis
/// (0 = computational, 1 = Hadamard).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionRecord {
    pub index: u64,
    pub bit: u8,
    pub basis: u8,
}

/// One measured pulse: global index, detection flag, measurement basis,
/// and the outcome (`None` exactly when not detected).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub index: u64,
    pub detected: bool,
    pub basis: u8,
    pub outcome: Option<u8>,
}

/// Index-aligned pair of emission and detection records for a batch of
/// pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseBatch {
    pub profile: ChannelProfile,
    pub emissions: Vec<EmissionRecord>,
    pub detections: Vec<DetectionRecord>,
}

/// Probability that a pulse sent through the lossy channel triggers the
/// receiver's detector: 1 - exp(-mu * 10^(-loss_db/10) * det_efficiency),
/// the thin-channel model for a Poissonian weak coherent pulse.
pub fn derive_detection_probability(profile: &ChannelProfile) -> Result<f64, ProfileError> {
    profile.validate()?;
    let transmission = 10f64.powf(-profile.loss_db / 10.0);
    Ok(-(-profile.mu * transmission * profile.det_efficiency).exp_m1())
}

/// Probability that a weak coherent pulse of mean photon number `mu`
/// carries two or more photons: 1 - (1 + mu) e^(-mu).
pub fn p_noqubit(mu: f64) -> Result<f64, ProfileError> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(ProfileError::OutOfRange {
            name: "mu",
            value: mu,
        });
    }
    Ok(1.0 - (1.0 + mu) * (-mu).exp())
}

/// The five uniform draws that decide one pulse. Each pulse owns one
/// ChaCha block (16 words) keyed by the shared seed, so draws are
/// recomputable in O(1) from (seed, index).
struct PulseDraws {
    emit_bit: f64,
    emit_basis: f64,
    recv_basis: f64,
    detect: f64,
    flip: f64,
}

fn draws_at(seed: &[u8; 32], index: u64) -> PulseDraws {
    let mut rng = ChaCha8Rng::from_seed(*seed);
    rng.set_word_pos(index as u128 * 16);
    let mut next = || rng.next_u32() as f64 / 4294967296.0;
    PulseDraws {
        emit_bit: next(),
        emit_basis: next(),
        recv_basis: next(),
        detect: next(),
        flip: next(),
    }
}

/// Emission record for one pulse index.
pub fn emission_at(profile: &ChannelProfile, index: u64) -> EmissionRecord {
    let d = draws_at(&profile.seed, index);
    // bias shifts the probability of drawing 0
    let bit = u8::from(d.emit_bit >= 0.5 + profile.beta_ps_inject);
    let basis = u8::from(d.emit_basis >= 0.5 + profile.beta_pb_inject);
    EmissionRecord { index, bit, basis }
}

/// Detection record for one pulse index, derived from the same draws as
/// the paired emission.
pub fn detection_at(profile: &ChannelProfile, index: u64, p_det: f64) -> DetectionRecord {
    let emission = emission_at(profile, index);
    let d = draws_at(&profile.seed, index);
    let basis = u8::from(d.recv_basis >= 0.5);
    let detected = d.detect < p_det;
    let outcome = if !detected {
        None
    } else if basis == emission.basis {
        Some(emission.bit ^ u8::from(d.flip < profile.qber))
    } else {
        // mismatched bases give uniform outcomes
        Some(u8::from(d.flip >= 0.5))
    };
    DetectionRecord {
        index,
        detected,
        basis,
        outcome,
    }
}

/// Emission records for a contiguous index range.
pub fn emissions_range(
    profile: &ChannelProfile,
    start: u64,
    count: usize,
) -> Result<Vec<EmissionRecord>, ProfileError> {
    profile.validate()?;
    Ok((start..start + count as u64)
        .map(|i| emission_at(profile, i))
        .collect())
}

/// Detection records for a contiguous index range.
pub fn detections_range(
    profile: &ChannelProfile,
    start: u64,
    count: usize,
) -> Result<Vec<DetectionRecord>, ProfileError> {
    profile.validate()?;
    let p_det = derive_detection_probability(profile)?;
    Ok((start..start + count as u64)
        .map(|i| detection_at(profile, i, p_det))
        .collect())
}

/// Simulates a batch of pulses starting at index 0.
pub fn simulate_batch(profile: &ChannelProfile, n_pulses: usize) -> Result<PulseBatch, ProfileError> {
    if n_pulses == 0 {
        return Err(ProfileError::OutOfRange {
            name: "n_pulses",
            value: 0.0,
        });
    }
    Ok(PulseBatch {
        profile: profile.clone(),
        emissions: emissions_range(profile, 0, n_pulses)?,
        detections: detections_range(profile, 0, n_pulses)?,
    })
}

/// Preparation biases measured over a reported-received subset of the
/// emission records.
///
/// Returns (beta_pb, beta_ps): the basis bias is the deviation of the
/// basis-0 fraction from one half; the state bias is the worst deviation
/// of the bit-0 fraction from one half within either basis class. A
/// basis class with no pulses contributes nothing.
pub fn measured_biases(received: &[EmissionRecord]) -> Result<(f64, f64), ProfileError> {
    if received.is_empty() {
        return Err(ProfileError::EmptyIndexSet);
    }
    let total = received.len() as f64;
    let basis0 = received.iter().filter(|e| e.basis == 0).count() as f64;
    let beta_pb = (basis0 / total - 0.5).abs();
    let mut beta_ps = 0.0f64;
    for theta in [0u8, 1] {
        let class: Vec<_> = received.iter().filter(|e| e.basis == theta).collect();
        if class.is_empty() {
            continue;
        }
        let zeros = class.iter().filter(|e| e.bit == 0).count() as f64;
        beta_ps = beta_ps.max((zeros / class.len() as f64 - 0.5).abs());
    }
    Ok((beta_pb, beta_ps))
}
