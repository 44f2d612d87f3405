#!/usr/bin/env python3
"""Smoke test for the qstack_py extension module.

Build the module first, then run this script from the repository root:

    cargo build -p qstack-py --release
    python3 python/smoke_test.py
"""

import math
import pathlib
import shutil
import sys
import tempfile


def load_module():
    root = pathlib.Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libqstack_py.so",
        root / "target" / "debug" / "libqstack_py.so",
        root / "target" / "release" / "libqstack_py.dylib",
        root / "target" / "debug" / "libqstack_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p qstack-py --release")
    staging = pathlib.Path(tempfile.mkdtemp(prefix="qstack-py-"))
    shutil.copy(built, staging / "qstack_py.so")
    sys.path.insert(0, str(staging))
    import qstack_py

    return qstack_py


def main():
    qs = load_module()
    print(f"loaded qstack_py {qs.__version__}")

    # source statistics
    assert abs(qs.p_noqubit(0.1) - 0.0046788) < 1e-6
    assert abs(qs.binary_entropy(0.5) - 1.0) < 1e-12
    assert abs(qs.binary_entropy(0.025) - 0.16866) < 1e-5

    profile = qs.ChannelProfile(qber=0.02, mu=0.1, seed_hex="ab" * 32)
    p_det = profile.detection_probability()
    assert abs(p_det - (1 - math.exp(-0.1))) < 1e-12

    batch = qs.simulate_batch(profile, 20000)
    detected = sum(1 for (_, d, _, _) in batch.detections() if d)
    assert abs(detected / 20000 - p_det) < 0.01, detected
    print(f"emulator: {detected}/20000 detections at p_det {p_det:.4f}")

    # classical primitives
    t, nonce = qs.commit(1, "cd" * 32)
    assert qs.verify(t, 1, nonce) == 1
    assert qs.verify(t, 0, nonce) == 0

    pad = qs.prg_expand(bytes(32), 256)
    assert len(pad) == 256 and pad[:128] == qs.prg_expand(bytes(32), 128)

    # toeplitz hash against a hand-rolled dense product
    seed_bits = [1, 0, 1, 1, 0, 1, 0]  # n=4, l=4
    x = [1, 0, 1, 1]
    got = list(qs.toeplitz_hash(seed_bits, x, 4))
    want = [0, 0, 0, 0]
    for i in range(4):
        acc = 0
        for j in range(4):
            acc ^= seed_bits[i + 3 - j] & x[j]
        want[i] = acc
    assert got == want, (got, want)

    # error correction round trip
    h = qs.ParityCheckMatrix.hamming74()
    word = [1, 0, 1, 1, 0, 0, 1]
    sigma = h.syndrome(word)
    noisy = word.copy()
    noisy[3] ^= 1
    ok, fixed, _iters = h.decode(0.05, noisy, list(sigma))
    assert ok and list(fixed) == word

    # bound searches
    lam = qs.ot_min_lambda(2**-23, 2**-23, 0.025, 1.40)
    n0 = lam // 2
    assert abs(n0 - 2420736) / 2420736 < 0.10, n0
    print(f"ot minimum block: n0 = {n0}")
    assert qs.ot_min_lambda(2**-23, 2**-23, 0.045, 1.0) is None

    eps, xi, delta = qs.ot_epsilon_min(2 * 2420736, 0.025, 1.40 * 2420736 * qs.binary_entropy(0.025), 256.0)
    assert eps <= 2**-22, eps

    assert abs(qs.token_lambda(0.0, 0.0) - 0.021927) < 1e-5
    assert qs.token_min_n(5.6e-4, 0.02, 0.1) is None  # detection too low
    res = qs.token_min_n(0.05, 0.02, 0.02)
    assert res is not None and res["n_min"] > 0
    print(f"token minimum block at p_det 0.05: N = {int(res['n_min'])}")

    # end-to-end protocol runs over the loopback
    strong = qs.ChannelProfile(qber=0.02, mu=40.0, seed_hex="12" * 32)
    m0 = [i % 2 for i in range(128)]
    m1 = [(i + 1) % 2 for i in range(128)]
    for choice, expected in [(0, m0), (1, m1)]:
        message, sender_rep, _receiver_rep = qs.run_ot_loopback(
            strong, m0, m1, choice, lambda_ot=8192, w=128
        )
        assert list(message) == expected, f"choice {choice}"
        assert sender_rep["attempts"] == "1"
    print("oblivious transfer: both choices recovered bit-exactly")

    key, alice_rep, bob_rep = qs.run_qkd_loopback(strong, n_pulses=65536)
    assert len(key) > 0
    assert alice_rep["final_length"] == str(len(key))
    print(f"key distribution: {len(key)} shared secret bits")

    valid, issuer_rep, _holder_rep = qs.run_token_loopback(strong, m_bits=2, n_per_block=20000)
    assert valid, issuer_rep
    print("token: issued, presented, validated")

    print("smoke test passed")


if __name__ == "__main__":
    main()
