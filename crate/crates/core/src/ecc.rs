//! Syndrome-based error correction over the binary symmetric channel.
//!
//! The sender transmits the syndrome of her string under a sparse parity
//! check matrix; the receiver runs sum-product belief propagation on the
//! syndrome-decoding formulation to recover the error pattern between his
//! noisy copy and the sender's string. Decoding failure is an expected
//! outcome (the block error rate), reported in-band rather than as an
//! exception.
//!
//! Matrix file format: line 1 is `q n` (syndrome length, block length);
//! each of the q following lines lists the sorted column indices of that
//! row's ones, space-separated. Plain text, newline-terminated.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EccError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Sparse binary parity check matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n_cols: usize,
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from row index lists, validating that indices are
    /// sorted, unique, in range, and that no column is empty.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<u32>>) -> Result<Self, EccError> {
        if n_cols == 0 || rows.is_empty() {
            return Err(EccError::Dimension("matrix must be non-empty".into()));
        }
        let mut cols = vec![Vec::new(); n_cols];
        for (r, row) in rows.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                if c as usize >= n_cols {
                    return Err(EccError::Dimension(format!(
                        "row {r}: column index {c} out of range (n={n_cols})"
                    )));
                }
                if k > 0 && row[k - 1] >= c {
                    return Err(EccError::Dimension(format!(
                        "row {r}: indices not strictly increasing at {c}"
                    )));
                }
                cols[c as usize].push(r as u32);
            }
        }
        if let Some(empty) = cols.iter().position(|c| c.is_empty()) {
            return Err(EccError::Dimension(format!("column {empty} is empty")));
        }
        Ok(Self { n_cols, rows, cols })
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Parses the documented sparse text format.
    pub fn parse(text: &str) -> Result<Self, EccError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(EccError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut parts = header.split_whitespace();
        let parse_dim = |tok: Option<&str>, what: &str| -> Result<usize, EccError> {
            tok.ok_or(EccError::Parse {
                line: 1,
                msg: format!("missing {what}"),
            })?
            .parse::<usize>()
            .map_err(|e| EccError::Parse {
                line: 1,
                msg: format!("bad {what}: {e}"),
            })
        };
        let q = parse_dim(parts.next(), "syndrome length")?;
        let n = parse_dim(parts.next(), "block length")?;
        if parts.next().is_some() {
            return Err(EccError::Parse {
                line: 1,
                msg: "trailing tokens after dimensions".into(),
            });
        }
        let mut rows = Vec::with_capacity(q);
        for (idx, line) in lines.take(q) {
            let mut row = Vec::new();
            for tok in line.split_whitespace() {
                let c: u32 = tok.parse().map_err(|e| EccError::Parse {
                    line: idx + 1,
                    msg: format!("bad index {tok:?}: {e}"),
                })?;
                row.push(c);
            }
            rows.push(row);
        }
        if rows.len() != q {
            return Err(EccError::Parse {
                line: rows.len() + 1,
                msg: format!("expected {q} rows, found {}", rows.len()),
            });
        }
        Self::from_rows(n, rows)
    }

    /// Loads and validates a matrix file.
    pub fn load(path: &Path) -> Result<Self, EccError> {
        let file = std::fs::File::open(path).map_err(|e| EccError::Io(e.to_string()))?;
        let mut text = String::new();
        std::io::BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(|e| EccError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// Writes the matrix in the documented text format.
    pub fn save(&self, path: &Path) -> Result<(), EccError> {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.n_rows(), self.n_cols()));
        for row in &self.rows {
            let toks: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&toks.join(" "));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| EccError::Io(e.to_string()))?;
        file.write_all(out.as_bytes())
            .map_err(|e| EccError::Io(e.to_string()))
    }
}

/// GF(2) matrix-vector product H x.
pub fn syndrome(h: &ParityCheckMatrix, x: &[u8]) -> Result<Vec<u8>, EccError> {
    if x.len() != h.n_cols() {
        return Err(EccError::Dimension(format!(
            "input length {} != block length {}",
            x.len(),
            h.n_cols()
        )));
    }
    Ok(h.rows
        .iter()
        .map(|row| row.iter().fold(0u8, |acc, &c| acc ^ x[c as usize]))
        .collect())
}

/// Outcome of a belief-propagation decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub success: bool,
    /// Corrected string, present on success; on failure it holds the
    /// final (still inconsistent) hard decision.
    pub x_guess: Vec<u8>,
    pub iterations: usize,
}

const LLR_CLIP: f64 = 30.0;

/// Sum-product decoding of the error pattern e with H(x_tilde xor e) =
/// sigma, crossover prior p for every position.
pub fn decode_bp(
    h: &ParityCheckMatrix,
    p: f64,
    x_tilde: &[u8],
    sigma: &[u8],
    max_iterations: usize,
) -> Result<DecodeResult, EccError> {
    let prior = llr_from_crossover(p)?;
    decode_bp_with_priors(h, &vec![prior; x_tilde.len()], x_tilde, sigma, max_iterations)
}

fn llr_from_crossover(p: f64) -> Result<f64, EccError> {
    if !(p > 0.0 && p < 0.5) {
        return Err(EccError::Dimension(format!(
            "crossover probability {p} outside (0, 0.5)"
        )));
    }
    Ok((((1.0 - p) / p).ln()).min(LLR_CLIP))
}

/// Decoding with a per-position prior LLR for the error bit (positive
/// means "no error likely"). Used by the chunked codec to pin padding
/// positions.
pub fn decode_bp_with_priors(
    h: &ParityCheckMatrix,
    priors: &[f64],
    x_tilde: &[u8],
    sigma: &[u8],
    max_iterations: usize,
) -> Result<DecodeResult, EccError> {
    let n = h.n_cols();
    let q = h.n_rows();
    if x_tilde.len() != n || priors.len() != n {
        return Err(EccError::Dimension(format!(
            "input length {} != block length {n}",
            x_tilde.len()
        )));
    }
    if sigma.len() != q {
        return Err(EccError::Dimension(format!(
            "syndrome length {} != row count {q}",
            sigma.len()
        )));
    }

    // residual syndrome for the error pattern: s = sigma xor H x_tilde
    let s: Vec<u8> = syndrome(h, x_tilde)?
        .iter()
        .zip(sigma)
        .map(|(a, b)| a ^ b)
        .collect();

    // horizontal layered schedule: checks are processed sequentially and
    // the posterior totals are updated in place, one stored message per
    // edge in row-major order
    let mut row_edge_start = Vec::with_capacity(q);
    {
        let mut acc = 0usize;
        for row in &h.rows {
            row_edge_start.push(acc);
            acc += row.len();
        }
        row_edge_start.push(acc);
    }
    let edges = *row_edge_start.last().expect("at least one row");
    let mut check_to_var = vec![0f64; edges];
    let mut totals = priors.to_vec();

    let hard_decision = |totals: &[f64]| -> Vec<u8> {
        // ties broken toward "no error", preserving x_tilde's bit
        totals
            .iter()
            .zip(x_tilde)
            .map(|(&t, &b)| if t < 0.0 { b ^ 1 } else { b })
            .collect()
    };

    let consistent = |guess: &[u8]| -> bool {
        syndrome(h, guess).expect("length checked") == sigma
    };

    let mut guess = hard_decision(&totals);
    if consistent(&guess) {
        return Ok(DecodeResult {
            success: true,
            x_guess: guess,
            iterations: 0,
        });
    }

    let mut tanhs = Vec::new();
    for iter in 1..=max_iterations {
        for (r, row) in h.rows.iter().enumerate() {
            let base = row_edge_start[r];
            let sign0 = if s[r] == 1 { -1.0 } else { 1.0 };
            // extrinsic inputs and their tanh halves
            let mut prod = sign0;
            tanhs.clear();
            for (k, &c) in row.iter().enumerate() {
                let v_in = (totals[c as usize] - check_to_var[base + k])
                    .clamp(-LLR_CLIP, LLR_CLIP);
                let t = (v_in / 2.0).tanh();
                tanhs.push(t);
                prod *= t;
            }
            for (k, &c) in row.iter().enumerate() {
                let t = tanhs[k];
                let excl = if t.abs() > 1e-12 {
                    prod / t
                } else {
                    let mut pr = sign0;
                    for (k2, &t2) in tanhs.iter().enumerate() {
                        if k2 != k {
                            pr *= t2;
                        }
                    }
                    pr
                };
                let m = (2.0 * excl.clamp(-0.999_999_999_999, 0.999_999_999_999).atanh())
                    .clamp(-LLR_CLIP, LLR_CLIP);
                let c = c as usize;
                totals[c] = (totals[c] - check_to_var[base + k] + m).clamp(-2.0 * LLR_CLIP, 2.0 * LLR_CLIP);
                check_to_var[base + k] = m;
            }
        }

        guess = hard_decision(&totals);
        if consistent(&guess) {
            return Ok(DecodeResult {
                success: true,
                x_guess: guess,
                iterations: iter,
            });
        }
    }

    Ok(DecodeResult {
        success: false,
        x_guess: guess,
        iterations: max_iterations,
    })
}

/// Leakage relative to the Shannon limit: q / (n h(p)).
pub fn code_inefficiency(q: usize, n: usize, p: f64) -> Result<f64, EccError> {
    if n == 0 {
        return Err(EccError::Dimension("n must be >= 1".into()));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(EccError::Dimension(format!(
            "crossover probability {p} outside (0, 0.5)"
        )));
    }
    let h = crate::crypto::binary_entropy(p).expect("p in (0, 0.5)");
    Ok(q as f64 / (n as f64 * h))
}

/// Syndrome of an arbitrary-length string, chunked over the code's block
/// length with zero padding in the final chunk.
pub fn chunked_syndrome(h: &ParityCheckMatrix, x: &[u8]) -> Result<Vec<u8>, EccError> {
    if x.is_empty() {
        return Err(EccError::Dimension("empty input".into()));
    }
    let n = h.n_cols();
    let mut out = Vec::with_capacity(x.len().div_ceil(n) * h.n_rows());
    for chunk in x.chunks(n) {
        let mut block = chunk.to_vec();
        block.resize(n, 0);
        out.extend(syndrome(h, &block)?);
    }
    Ok(out)
}

/// Chunked decode matching [`chunked_syndrome`]. Padding positions carry
/// a certain "no error" prior. Returns the corrected string truncated to
/// the original length, or failure if any chunk fails.
pub fn chunked_decode(
    h: &ParityCheckMatrix,
    p: f64,
    x_tilde: &[u8],
    sigma: &[u8],
    max_iterations: usize,
) -> Result<DecodeResult, EccError> {
    if x_tilde.is_empty() {
        return Err(EccError::Dimension("empty input".into()));
    }
    let n = h.n_cols();
    let q = h.n_rows();
    let n_chunks = x_tilde.len().div_ceil(n);
    if sigma.len() != n_chunks * q {
        return Err(EccError::Dimension(format!(
            "syndrome length {} != {} chunks x {q}",
            sigma.len(),
            n_chunks
        )));
    }
    let base_prior = llr_from_crossover(p)?;
    let mut out = Vec::with_capacity(x_tilde.len());
    let mut iterations = 0usize;
    for (k, chunk) in x_tilde.chunks(n).enumerate() {
        let mut block = chunk.to_vec();
        block.resize(n, 0);
        let mut priors = vec![base_prior; n];
        for prior in priors.iter_mut().skip(chunk.len()) {
            *prior = LLR_CLIP;
        }
        let res = decode_bp_with_priors(
            h,
            &priors,
            &block,
            &sigma[k * q..(k + 1) * q],
            max_iterations,
        )?;
        iterations = iterations.max(res.iterations);
        if !res.success {
            return Ok(DecodeResult {
                success: false,
                x_guess: Vec::new(),
                iterations: res.iterations,
            });
        }
        out.extend_from_slice(&res.x_guess[..chunk.len()]);
    }
    Ok(DecodeResult {
        success: true,
        x_guess: out,
        iterations,
    })
}

/// The (7,4) Hamming code parity check matrix.
pub fn hamming_7_4() -> ParityCheckMatrix {
    // columns 1..7 in binary: row k has the columns whose bit k is set
    ParityCheckMatrix::from_rows(
        7,
        vec![vec![0, 2, 4, 6], vec![1, 2, 5, 6], vec![3, 4, 5, 6]],
    )
    .expect("textbook matrix is valid")
}

/// Deterministic column-regular (weight 3) Gallager-style matrix built by
/// stub matching, with duplicate edges resolved by swapping stubs.
pub fn gallager(q: usize, n: usize, col_weight: usize, seed: u64) -> Result<ParityCheckMatrix, EccError> {
    if q == 0 || n == 0 || col_weight == 0 || (n * col_weight) % q != 0 {
        return Err(EccError::Dimension(format!(
            "need q | n*col_weight, got {q} x {n} weight {col_weight}"
        )));
    }
    let row_weight = n * col_weight / q;
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed_bytes);

    // stubs: column c appears col_weight times; shuffle and deal into rows
    let mut stubs: Vec<u32> = (0..n as u32)
        .flat_map(|c| std::iter::repeat_n(c, col_weight))
        .collect();
    // Fisher-Yates
    for i in (1..stubs.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        stubs.swap(i, j);
    }
    // resolve duplicate column entries within a row by swapping with a
    // stub from elsewhere; bounded retries keep this deterministic
    let row_of = |idx: usize| idx / row_weight;
    let mut attempts = 0usize;
    'outer: loop {
        attempts += 1;
        if attempts > 100 * stubs.len() {
            return Err(EccError::Dimension(
                "stub matching failed to converge".into(),
            ));
        }
        for i in 0..stubs.len() {
            let r = row_of(i);
            let dup = (r * row_weight..i).any(|k| stubs[k] == stubs[i]);
            if dup {
                let j = (rng.next_u64() % stubs.len() as u64) as usize;
                stubs.swap(i, j);
                continue 'outer;
            }
        }
        break;
    }
    let mut rows: Vec<Vec<u32>> = stubs
        .chunks(row_weight)
        .map(|chunk| {
            let mut row = chunk.to_vec();
            row.sort_unstable();
            row
        })
        .collect();
    rows.truncate(q);
    ParityCheckMatrix::from_rows(n, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense matrix-vector product over GF(2), the oracle for the sparse
    /// syndrome path.
    fn dense_syndrome(h: &ParityCheckMatrix, x: &[u8]) -> Vec<u8> {
        let mut dense = vec![vec![0u8; h.n_cols()]; h.n_rows()];
        for (r, row) in h.rows().iter().enumerate() {
            for &c in row {
                dense[r][c as usize] = 1;
            }
        }
        dense
            .iter()
            .map(|row| row.iter().zip(x).fold(0, |acc, (a, b)| acc ^ (a & b)))
            .collect()
    }

    fn rng_bits(tag: u8, n: usize) -> Vec<u8> {
        let mut seed = [0u8; 32];
        seed[0] = tag;
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..n).map(|_| (rng.next_u32() & 1) as u8).collect()
    }

    #[test]
    fn hamming_loads_and_validates() {
        let h = hamming_7_4();
        assert_eq!(h.n_cols(), 7);
        assert_eq!(h.n_rows(), 3);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let h = hamming_7_4();
        let dir = std::env::temp_dir().join("qstack-ecc-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hamming.txt");
        h.save(&path).unwrap();
        let re = ParityCheckMatrix::load(&path).unwrap();
        assert_eq!(re, h);

        assert!(matches!(
            ParityCheckMatrix::parse("3 7\n0 2 4 9\n1 2 5 6\n3 4 5 6\n"),
            Err(EccError::Dimension(_))
        ));
        assert!(matches!(
            ParityCheckMatrix::parse("3 x\n"),
            Err(EccError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ParityCheckMatrix::parse("3 7\n0 1\n2 a\n3\n"),
            Err(EccError::Parse { line: 3, .. })
        ));
        // unsorted / duplicate indices
        assert!(ParityCheckMatrix::parse("1 3\n1 1 2\n").is_err());
        assert!(ParityCheckMatrix::parse("1 3\n2 1\n").is_err());
    }

    #[test]
    fn syndrome_of_zero_and_codewords() {
        let h = hamming_7_4();
        assert_eq!(syndrome(&h, &[0; 7]).unwrap(), vec![0, 0, 0]);
        // 1110000 is a Hamming codeword
        let cw = [1, 1, 1, 0, 0, 0, 0];
        assert_eq!(syndrome(&h, &cw).unwrap(), vec![0, 0, 0]);
        assert!(syndrome(&h, &[0; 6]).is_err());
    }

    #[test]
    fn syndrome_matches_dense_oracle() {
        let h = gallager(24, 48, 3, 11).unwrap();
        for tag in 0..20u8 {
            let x = rng_bits(tag, 48);
            assert_eq!(syndrome(&h, &x).unwrap(), dense_syndrome(&h, &x));
        }
    }

    #[test]
    fn decode_consistent_input_is_immediate() {
        let h = hamming_7_4();
        let x = [1, 0, 1, 1, 0, 0, 1];
        let sigma = syndrome(&h, &x).unwrap();
        let res = decode_bp(&h, 0.05, &x, &sigma, 60).unwrap();
        assert!(res.success);
        assert_eq!(res.x_guess, x);
        assert!(res.iterations <= 1);
    }

    #[test]
    fn decode_corrects_every_single_error() {
        let h = hamming_7_4();
        let x = [0, 1, 1, 0, 1, 0, 1];
        let sigma = syndrome(&h, &x).unwrap();
        for flip in 0..7 {
            let mut noisy = x;
            noisy[flip] ^= 1;
            let res = decode_bp(&h, 0.05, &noisy, &sigma, 60).unwrap();
            assert!(res.success, "flip at {flip}");
            assert_eq!(res.x_guess, x, "flip at {flip}");
        }
    }

    #[test]
    fn decode_success_certificate_holds() {
        let h = gallager(32, 64, 3, 5).unwrap();
        let mut seed = [0u8; 32];
        seed[0] = 9;
        let mut rng = ChaCha8Rng::from_seed(seed);
        for _ in 0..50 {
            let x: Vec<u8> = (0..64).map(|_| (rng.next_u32() & 1) as u8).collect();
            let sigma = syndrome(&h, &x).unwrap();
            let noisy: Vec<u8> = x
                .iter()
                .map(|&b| b ^ u8::from(rng.next_u32() % 100 < 2))
                .collect();
            let res = decode_bp(&h, 0.02, &noisy, &sigma, 60).unwrap();
            if res.success {
                assert_eq!(syndrome(&h, &res.x_guess).unwrap(), sigma);
            }
        }
    }

    #[test]
    fn gallager_fixture_shape_and_determinism() {
        let h1 = gallager(512, 1024, 3, 7).unwrap();
        let h2 = gallager(512, 1024, 3, 7).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.n_rows(), 512);
        assert_eq!(h1.n_cols(), 1024);
        let edges: usize = h1.rows().iter().map(|r| r.len()).sum();
        assert_eq!(edges, 3 * 1024);
    }

    fn empirical_ber(h: &ParityCheckMatrix, p: f64, trials: usize, tag: u8) -> f64 {
        let mut seed = [0u8; 32];
        seed[0] = tag;
        let mut rng = ChaCha8Rng::from_seed(seed);
        let n = h.n_cols();
        let mut failures = 0usize;
        for _ in 0..trials {
            let x: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
            let sigma = syndrome(h, &x).unwrap();
            let noisy: Vec<u8> = x
                .iter()
                .map(|&b| {
                    let draw = rng.next_u32() as f64 / 4294967296.0;
                    b ^ u8::from(draw < p)
                })
                .collect();
            let res = decode_bp(h, p, &noisy, &sigma, 60).unwrap();
            if !res.success || res.x_guess != x {
                failures += 1;
            }
        }
        failures as f64 / trials as f64
    }

    #[test]
    fn fixture_block_error_rate_acceptable() {
        let h = gallager(512, 1024, 3, 7).unwrap();
        let ber = empirical_ber(&h, 0.02, 1000, 21);
        assert!(ber <= 0.1, "BER {ber} too high at p=0.02");
    }

    #[test]
    fn block_error_rate_monotone_in_crossover() {
        let h = gallager(512, 1024, 3, 7).unwrap();
        let b4 = empirical_ber(&h, 0.04, 200, 22);
        let b2 = empirical_ber(&h, 0.02, 200, 22);
        let b1 = empirical_ber(&h, 0.01, 200, 22);
        assert!(b1 <= b2 && b2 <= b4, "BER not monotone: {b1} {b2} {b4}");
    }

    #[test]
    fn inefficiency_values() {
        // q exactly at the Shannon limit
        let p = 0.025f64;
        let h_p = crate::crypto::binary_entropy(p).unwrap();
        let n = 100_000usize;
        let q = (n as f64 * h_p).round() as usize;
        let ineff = code_inefficiency(q, n, p).unwrap();
        assert!((ineff - 1.0).abs() < 1e-4);

        // the ratio identity: a rate-1/3 syndrome at the crossover whose
        // entropy is exactly 1/3 sits at the Shannon limit
        let mut lo = 0.0f64;
        let mut hi = 0.5f64;
        for _ in 0..60 {
            let mid = (lo + hi) / 2.0;
            if crate::crypto::binary_entropy(mid).unwrap() < 1.0 / 3.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ineff = code_inefficiency(524_288, 524_288 * 3, lo).unwrap();
        assert!((ineff - 1.0).abs() < 1e-6);

        // a code with q = 1.40 n h(p) has inefficiency 1.40
        let q = (1.40 * n as f64 * h_p).round() as usize;
        let ineff = code_inefficiency(q, n, p).unwrap();
        assert!((ineff - 1.40).abs() < 1e-4);

        assert!(code_inefficiency(10, 0, 0.1).is_err());
        assert!(code_inefficiency(10, 10, 0.6).is_err());
    }

    #[test]
    fn chunked_round_trip_with_padding() {
        let h = gallager(32, 64, 3, 5).unwrap();
        let mut seed = [0u8; 32];
        seed[0] = 13;
        let mut rng = ChaCha8Rng::from_seed(seed);
        // length deliberately not a multiple of the block length
        let x: Vec<u8> = (0..150).map(|_| (rng.next_u32() & 1) as u8).collect();
        let sigma = chunked_syndrome(&h, &x).unwrap();
        assert_eq!(sigma.len(), 3 * 32);
        let noisy: Vec<u8> = x
            .iter()
            .map(|&b| {
                let draw = rng.next_u32() as f64 / 4294967296.0;
                b ^ u8::from(draw < 0.02)
            })
            .collect();
        let res = chunked_decode(&h, 0.02, &noisy, &sigma, 60).unwrap();
        assert!(res.success);
        assert_eq!(res.x_guess, x);
    }
}
