//! Run configuration: one sectioned key-value file distributed to both
//! parties, validated before any network activity.

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qstack_core::crypto::CommitParams;
use qstack_core::ecc::{gallager, ParityCheckMatrix};
use qstack_core::hwsim::ChannelProfile;
use qstack_core::protocols::ot::OtParams;
use qstack_core::protocols::qkd::QkdParams;
use qstack_core::protocols::token::TokenParams;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelSection,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub ot: OtSection,
    #[serde(default)]
    pub qkd: QkdSection,
    #[serde(default)]
    pub token: TokenSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub qber: f64,
    pub loss_db: f64,
    pub mu: f64,
    pub det_efficiency: f64,
    pub rep_rate_hz: f64,
    pub seed_hex: String,
    #[serde(default)]
    pub beta_pb: f64,
    #[serde(default)]
    pub beta_ps: f64,
    #[serde(default)]
    pub phi: f64,
    /// Correlated-record backend; only the emulator exists today.
    #[serde(default = "default_backend")]
    pub backend: String,
}

fn default_backend() -> String {
    "hwsim".into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    /// Address the detection side listens on.
    pub listen: Option<String>,
    /// Address the emission side connects to.
    pub connect: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OtSection {
    pub lambda_ot: u64,
    pub q_tol: f64,
    pub eps_sec1_exp2: i32,
    pub eps_sec2_exp2: i32,
    pub w_bits: usize,
    pub lambda_bs: usize,
    pub lambda_hs: usize,
    pub min_partition: Option<u64>,
    pub max_retries: u32,
    pub matrix_path: Option<String>,
    /// Receiver's choice bit for runs that play that role.
    pub choice: u8,
    pub m0_hex: Option<String>,
    pub m1_hex: Option<String>,
}

impl Default for OtSection {
    fn default() -> Self {
        Self {
            lambda_ot: 1 << 15,
            q_tol: 0.025,
            eps_sec1_exp2: -23,
            eps_sec2_exp2: -23,
            w_bits: 128,
            lambda_bs: 256,
            lambda_hs: 256,
            min_partition: None,
            max_retries: 3,
            matrix_path: None,
            choice: 0,
            m0_hex: None,
            m1_hex: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdSection {
    pub n_pulses: u64,
    pub q_tol: f64,
    pub eps_sec: f64,
    pub r_bits: usize,
    pub k_factor: u64,
    pub matrix_path: Option<String>,
}

impl Default for QkdSection {
    fn default() -> Self {
        Self {
            n_pulses: 1 << 16,
            q_tol: 0.02,
            eps_sec: 1e-3,
            r_bits: 32,
            k_factor: 10,
            matrix_path: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenSection {
    pub m_bits: usize,
    pub n_per_block: u64,
    pub gamma_det: f64,
    pub gamma_err: f64,
    /// Presentation point as a bit string like "01"; random when absent.
    pub point: Option<String>,
}

impl Default for TokenSection {
    fn default() -> Self {
        Self {
            m_bits: 1,
            n_per_block: 100_000,
            gamma_det: 0.9,
            gamma_err: 0.05,
            point: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file; errors carry the line and
    /// column of the offending entry.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.channel.backend != "hwsim" {
            bail!(
                "backend unavailable: {:?} (only \"hwsim\" is implemented)",
                self.channel.backend
            );
        }
        let seed = hex::decode(&self.channel.seed_hex).context("channel.seed_hex")?;
        if seed.len() != 32 {
            bail!(
                "channel.seed_hex must be 32 bytes (64 hex chars), got {}",
                seed.len()
            );
        }
        self.profile(None)?
            .validate()
            .map_err(|e| anyhow::anyhow!("channel: {e}"))?;
        if self.token.m_bits == 0 || self.token.m_bits > 16 {
            bail!("token.m_bits must be in 1..=16");
        }
        if let Some(point) = &self.token.point {
            if point.len() != self.token.m_bits || point.bytes().any(|b| b != b'0' && b != b'1')
            {
                bail!("token.point must be {} bits of 0/1", self.token.m_bits);
            }
        }
        Ok(())
    }

    /// The channel profile, optionally with the seed overridden.
    pub fn profile(&self, seed_override: Option<[u8; 32]>) -> Result<ChannelProfile> {
        let seed = match seed_override {
            Some(s) => s,
            None => {
                let bytes = hex::decode(&self.channel.seed_hex).context("channel.seed_hex")?;
                bytes
                    .try_into()
                    .map_err(|_| anyhow::anyhow!("channel.seed_hex must be 32 bytes"))?
            }
        };
        Ok(ChannelProfile {
            qber: self.channel.qber,
            loss_db: self.channel.loss_db,
            mu: self.channel.mu,
            det_efficiency: self.channel.det_efficiency,
            rep_rate_hz: self.channel.rep_rate_hz,
            beta_pb_inject: self.channel.beta_pb,
            beta_ps_inject: self.channel.beta_ps,
            phi: self.channel.phi,
            seed,
        })
    }

    pub fn ot_params(&self, eq4_literal: bool, step6_literal: bool) -> OtParams {
        let s = &self.ot;
        OtParams {
            lambda_ot: s.lambda_ot,
            q_tol: s.q_tol,
            eps_sec1: (2f64).powi(s.eps_sec1_exp2),
            eps_sec2: (2f64).powi(s.eps_sec2_exp2),
            w: s.w_bits,
            commit: CommitParams {
                lambda_bs: s.lambda_bs,
                lambda_hs: s.lambda_hs,
            },
            lambda_pqs: 256,
            min_partition: s
                .min_partition
                .unwrap_or(((s.lambda_ot as f64 * 0.45) as u64).max(256)),
            max_retries: s.max_retries,
            step6_literal,
            eq4_literal,
        }
    }

    pub fn qkd_params(&self) -> QkdParams {
        let s = &self.qkd;
        QkdParams {
            n_pulses: s.n_pulses,
            q_tol: s.q_tol,
            eps_sec: s.eps_sec,
            r_bits: s.r_bits,
            k_factor: s.k_factor,
        }
    }

    pub fn token_params(&self) -> TokenParams {
        let s = &self.token;
        TokenParams {
            m_bits: s.m_bits,
            n_per_block: s.n_per_block,
            gamma_det: s.gamma_det,
            gamma_err: s.gamma_err,
        }
    }

    pub fn token_point(&self) -> Option<Vec<u8>> {
        self.token
            .point
            .as_ref()
            .map(|p| p.bytes().map(|b| b - b'0').collect())
    }

    /// The parity check matrix for a protocol section, loading the
    /// configured file or falling back to the built-in fixture code.
    pub fn matrix(&self, path: &Option<String>) -> Result<ParityCheckMatrix> {
        match path {
            Some(p) => ParityCheckMatrix::load(std::path::Path::new(p))
                .map_err(|e| anyhow::anyhow!("matrix {p}: {e}")),
            None => Ok(gallager(512, 1024, 3, 7).expect("built-in code")),
        }
    }
}

/// Parses 0/1 bits from an optional hex string, or draws them from the
/// RNG when absent.
pub fn message_bits(
    hex_str: &Option<String>,
    w: usize,
    rng: &mut dyn rand_core::RngCore,
) -> Result<Vec<u8>> {
    match hex_str {
        Some(h) => {
            let bytes = hex::decode(h).context("message hex")?;
            qstack_core::bits::unpack_bits(&bytes, w)
                .ok_or_else(|| anyhow::anyhow!("message shorter than {w} bits"))
        }
        None => Ok((0..w).map(|_| (rng.next_u32() & 1) as u8).collect()),
    }
}
