//! The committed desk-scale fixtures must stay in sync with the
//! deterministic generators and the fast implementations.

use std::path::PathBuf;

use qstack_core::crypto::{toeplitz_hash, ToeplitzSeed};
use qstack_core::ecc::{gallager, hamming_7_4, ParityCheckMatrix};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn committed_gallager_matrix_matches_generator() {
    let path = fixtures_dir().join("gallager_512x1024_s7.txt");
    let committed = ParityCheckMatrix::load(&path).expect("committed fixture");
    assert_eq!(committed, gallager(512, 1024, 3, 7).unwrap());
    assert_eq!(committed.n_rows(), 512);
    assert_eq!(committed.n_cols(), 1024);
}

#[test]
fn committed_hamming_matrix_matches_textbook() {
    let path = fixtures_dir().join("hamming74.txt");
    let committed = ParityCheckMatrix::load(&path).expect("committed fixture");
    assert_eq!(committed, hamming_7_4());
}

#[test]
fn committed_toeplitz_vectors_verify() {
    let text = std::fs::read_to_string(fixtures_dir().join("toeplitz_cases.json"))
        .expect("committed fixture");
    let cases: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(cases.len(), 100);
    let bits = |v: &serde_json::Value| -> Vec<u8> {
        v.as_str().unwrap().bytes().map(|b| b - b'0').collect()
    };
    for case in &cases {
        let n = case["n"].as_u64().unwrap() as usize;
        let l = case["l"].as_u64().unwrap() as usize;
        let seed = ToeplitzSeed::new(bits(&case["seed"]), n, l).unwrap();
        let got = toeplitz_hash(&seed, &bits(&case["x"])).unwrap();
        assert_eq!(got, bits(&case["y"]), "case n={n} l={l}");
    }
}
