//! Classical cryptographic primitives shared by all protocols.
//!
//! Hash commitments are SHA-256 of the committed bit concatenated with a
//! fresh nonce; pseudo-random expansion is SHAKE-256; two-universal
//! hashing is multiplication by a Toeplitz matrix over GF(2). The digest
//! and XOF algorithms are fixed so that independent implementations
//! interoperate bit-exactly.
//!
//! Byte/bit conventions: bit strings serialize MSB-first within each
//! byte, and the committed bit is hashed as one full byte (0x00 or 0x01)
//! followed by the packed nonce, so no sub-byte hashing ambiguity exists.

use rand_core::RngCore;
use sha2::{Digest, Sha256};
use sha3::{
    digest::{ExtendableOutput, Update, XofReader},
    Shake256,
};
use thiserror::Error;

use crate::bits::pack_bits;

#[derive(Debug, Error, PartialEq)]
pub enum CryptoError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parameter {name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Commitment scheme parameters: `lambda_bs` is the (possibly truncated)
/// commitment length, `lambda_hs` the nonce length, both in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitParams {
    pub lambda_bs: usize,
    pub lambda_hs: usize,
}

impl Default for CommitParams {
    fn default() -> Self {
        // no truncation by default
        Self {
            lambda_bs: 256,
            lambda_hs: 256,
        }
    }
}

impl CommitParams {
    pub fn validate(&self) -> Result<(), CryptoError> {
        if self.lambda_bs == 0 || self.lambda_bs > 256 {
            return Err(CryptoError::OutOfRange {
                name: "lambda_bs",
                value: self.lambda_bs as f64,
            });
        }
        if self.lambda_hs == 0 {
            return Err(CryptoError::OutOfRange {
                name: "lambda_hs",
                value: self.lambda_hs as f64,
            });
        }
        Ok(())
    }

    /// Packed byte length of a commitment value.
    pub fn commitment_bytes(&self) -> usize {
        self.lambda_bs.div_ceil(8)
    }

    /// Packed byte length of a nonce.
    pub fn nonce_bytes(&self) -> usize {
        self.lambda_hs.div_ceil(8)
    }
}

/// Public part of a commitment: the first `lambda_bs` bits of the digest,
/// packed MSB-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub bits: Vec<u8>,
    pub n_bits: usize,
}

/// Private opening of a commitment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decommitment {
    pub bit: u8,
    /// Nonce of `lambda_hs` bits, packed MSB-first.
    pub nonce: Vec<u8>,
}

fn truncated_digest(bit: u8, nonce: &[u8], lambda_bs: usize) -> Vec<u8> {
    let mut hasher = Sha256::new();
    Digest::update(&mut hasher, [bit]);
    Digest::update(&mut hasher, nonce);
    let digest = hasher.finalize();
    let n_bytes = lambda_bs.div_ceil(8);
    let mut out = digest[..n_bytes].to_vec();
    let tail = lambda_bs % 8;
    if tail != 0 {
        // zero the bits past lambda_bs in the final byte
        out[n_bytes - 1] &= 0xffu8 << (8 - tail);
    }
    out
}

/// Commits to a bit with a fresh nonce.
pub fn commit(bit: u8, params: &CommitParams, rng: &mut dyn RngCore) -> (Commitment, Decommitment) {
    debug_assert!(bit <= 1);
    let mut nonce = vec![0u8; params.nonce_bytes()];
    rng.fill_bytes(&mut nonce);
    let tail = params.lambda_hs % 8;
    if tail != 0 {
        let last = nonce.len() - 1;
        nonce[last] &= 0xffu8 << (8 - tail);
    }
    let t = truncated_digest(bit, &nonce, params.lambda_bs);
    (
        Commitment {
            bits: t,
            n_bits: params.lambda_bs,
        },
        Decommitment { bit, nonce },
    )
}

/// Verifies one opening against a commitment. Returns 1 on success, 0 on
/// failure, or an error if the lengths do not match the parameters.
pub fn verify(
    commitment: &Commitment,
    opening: &Decommitment,
    params: &CommitParams,
) -> Result<u8, CryptoError> {
    if commitment.n_bits != params.lambda_bs || commitment.bits.len() != params.commitment_bytes() {
        return Err(CryptoError::LengthMismatch {
            expected: params.lambda_bs,
            got: commitment.n_bits,
        });
    }
    if opening.nonce.len() != params.nonce_bytes() {
        return Err(CryptoError::LengthMismatch {
            expected: params.nonce_bytes(),
            got: opening.nonce.len(),
        });
    }
    let expected = truncated_digest(opening.bit, &opening.nonce, params.lambda_bs);
    Ok(u8::from(expected == commitment.bits))
}

/// Sum of individual verifications over paired commitments and openings.
pub fn batch_verify(
    commitments: &[Commitment],
    openings: &[Decommitment],
    params: &CommitParams,
) -> Result<usize, CryptoError> {
    if commitments.len() != openings.len() {
        return Err(CryptoError::LengthMismatch {
            expected: commitments.len(),
            got: openings.len(),
        });
    }
    let mut ok = 0usize;
    for (t, d) in commitments.iter().zip(openings) {
        ok += verify(t, d, params)? as usize;
    }
    Ok(ok)
}

/// Expands a seed into `out_bits` pseudo-random bits with SHAKE-256.
///
/// Extendable output: the expansion to w1 bits is a prefix of the
/// expansion to w2 bits whenever w1 <= w2.
pub fn prg_expand(seed: &[u8], out_bits: usize) -> Vec<u8> {
    let mut hasher = Shake256::default();
    hasher.update(seed);
    let mut reader = hasher.finalize_xof();
    let mut bytes = vec![0u8; out_bits.div_ceil(8)];
    reader.read(&mut bytes);
    crate::bits::unpack_bits(&bytes, out_bits).expect("buffer sized for out_bits")
}

/// Seed for a Toeplitz matrix mapping n bits to l bits.
///
/// `bits[n-1]` is the top-left entry; the first column reads
/// `bits[n-1 ..= n+l-2]` top-down and the first row reads
/// `bits[n-1 ..= 0]` left-to-right, i.e. `T[i][j] = bits[i - j + n - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: Vec<u8>,
    n: usize,
    l: usize,
}

impl ToeplitzSeed {
    pub fn new(bits: Vec<u8>, n: usize, l: usize) -> Result<Self, CryptoError> {
        if n == 0 || l == 0 || bits.len() != n + l - 1 {
            return Err(CryptoError::LengthMismatch {
                expected: n + l - 1,
                got: bits.len(),
            });
        }
        Ok(Self { bits, n, l })
    }

    /// Builds a seed from a fresh bit stream, taking the first n+l-1 bits.
    pub fn from_stream(stream: &[u8], n: usize, l: usize) -> Result<Self, CryptoError> {
        if stream.len() < n + l - 1 {
            return Err(CryptoError::LengthMismatch {
                expected: n + l - 1,
                got: stream.len(),
            });
        }
        Self::new(stream[..n + l - 1].to_vec(), n, l)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn output_len(&self) -> usize {
        self.l
    }
}

/// Toeplitz matrix-vector product over GF(2): y_i = XOR_j T[i][j] x_j.
///
/// The product is accumulated word-wise: for every set input bit j the
/// seed window starting at bit n-1-j is XORed into the output, which
/// keeps privacy amplification linear in the input weight.
pub fn toeplitz_hash(seed: &ToeplitzSeed, x: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if x.len() != seed.n {
        return Err(CryptoError::LengthMismatch {
            expected: seed.n,
            got: x.len(),
        });
    }
    let (n, l) = (seed.n, seed.l);
    // seed packed LSB-first so that bit k of word w is seed bit 64w+k
    let n_words = (n + l - 1).div_ceil(64) + 1;
    let mut s = vec![0u64; n_words];
    for (k, &b) in seed.bits.iter().enumerate() {
        if b == 1 {
            s[k / 64] |= 1u64 << (k % 64);
        }
    }
    let out_words = l.div_ceil(64);
    let mut y = vec![0u64; out_words];
    for (j, &xb) in x.iter().enumerate() {
        if xb != 1 {
            continue;
        }
        let off = n - 1 - j;
        let (w, r) = (off / 64, (off % 64) as u32);
        for k in 0..out_words {
            let mut window = s[w + k] >> r;
            if r != 0 {
                window |= s[w + k + 1] << (64 - r);
            }
            y[k] ^= window;
        }
    }
    Ok((0..l).map(|i| ((y[i / 64] >> (i % 64)) & 1) as u8).collect())
}

/// Binary entropy h(p) = -p log2 p - (1-p) log2 (1-p), with h(0)=h(1)=0.
pub fn binary_entropy(p: f64) -> Result<f64, CryptoError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CryptoError::OutOfRange {
            name: "p",
            value: p,
        });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Convenience wrapper packing the committed-to bits of a whole string.
pub fn commit_string(
    bits: &[u8],
    params: &CommitParams,
    rng: &mut dyn RngCore,
) -> (Vec<Commitment>, Vec<Decommitment>) {
    bits.iter().map(|&b| commit(b, params, rng)).unzip()
}

/// Packs a bit-string key into bytes for use as a PRG seed.
pub fn key_bytes(bits: &[u8]) -> Vec<u8> {
    pack_bits(bits)
}
