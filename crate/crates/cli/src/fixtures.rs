//! Deterministic desk-scale fixtures: parity check matrices and hash
//! test vectors.

use std::io::Write;

use anyhow::{Context, Result};
use clap::Args;

use qstack_core::crypto::{toeplitz_hash, ToeplitzSeed};
use qstack_core::ecc::{gallager, hamming_7_4};
use qstack_core::protocols::party_rng;
use rand_core::RngCore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureKind {
    /// Column-weight-3 Gallager-style 512x1024 matrix.
    Gallager,
    /// The textbook (7,4) Hamming parity check matrix.
    Hamming74,
    /// Hash test vectors checked against the dense-matrix construction.
    ToeplitzVectors,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: FixtureKind,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: std::path::PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn cmd_gen_fixtures(args: &GenArgs) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let mut written = Vec::new();
    match args.kind {
        FixtureKind::Gallager => {
            let h = gallager(512, 1024, 3, args.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
            let path = args
                .out_dir
                .join(format!("gallager_512x1024_s{}.txt", args.seed));
            h.save(&path).map_err(|e| anyhow::anyhow!("{e}"))?;
            written.push(path);
        }
        FixtureKind::Hamming74 => {
            let path = args.out_dir.join("hamming74.txt");
            hamming_7_4()
                .save(&path)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            written.push(path);
        }
        FixtureKind::ToeplitzVectors => {
            let path = args.out_dir.join("toeplitz_cases.json");
            let mut seed_bytes = [0u8; 32];
            seed_bytes[..8].copy_from_slice(&args.seed.to_le_bytes());
            let mut rng = party_rng(&seed_bytes, "toeplitz-vectors");
            let mut file = std::fs::File::create(&path)?;
            writeln!(file, "[")?;
            for case in 0..100 {
                let n = 1 + (rng.next_u32() as usize) % 96;
                let l = 1 + (rng.next_u32() as usize) % 48;
                let bits: Vec<u8> = (0..n + l - 1).map(|_| (rng.next_u32() & 1) as u8).collect();
                let x: Vec<u8> = (0..n).map(|_| (rng.next_u32() & 1) as u8).collect();
                // dense construction is the oracle the vectors are
                // checked against before they are written
                let mut y = vec![0u8; l];
                for (i, yi) in y.iter_mut().enumerate() {
                    for (j, &xj) in x.iter().enumerate() {
                        *yi ^= bits[i + n - 1 - j] & xj;
                    }
                }
                let fast = toeplitz_hash(&ToeplitzSeed::new(bits.clone(), n, l).unwrap(), &x)
                    .expect("valid case");
                anyhow::ensure!(fast == y, "implementation disagrees with the dense oracle");
                let to_str =
                    |v: &[u8]| v.iter().map(|b| b.to_string()).collect::<String>();
                writeln!(
                    file,
                    " {{\"n\": {n}, \"l\": {l}, \"seed\": \"{}\", \"x\": \"{}\", \"y\": \"{}\"}}{}",
                    to_str(&bits),
                    to_str(&x),
                    to_str(&y),
                    if case == 99 { "" } else { "," }
                )?;
            }
            writeln!(file, "]")?;
            written.push(path);
        }
    }
    Ok(written)
}
